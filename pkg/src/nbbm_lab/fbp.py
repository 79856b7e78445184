"""Traveling waves of the free boundary problem and their Brownian checks.

A traveling wave ``u(r, t) = w(r - alpha t)`` solves ``w''/2 + alpha w' + w = 0``
on ``(0, inf)`` with ``w(0) = 0`` and unit mass.  Normalisable solutions exist
for ``alpha >= sqrt(2)``.

Absorption of Brownian paths at a moving boundary is simulated with exact
Gaussian increments plus the Brownian-bridge crossing probability for the
boundary linearised over each step, which is exact when the boundary is
linear.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import density as dn
from .bbm_sim import make_rng, nbbm
from .density import DensityGrid

SQRT2 = math.sqrt(2.0)


# ------------------------------------------------------------ traveling waves


def wave_norm(alpha: float) -> float:
    """Normalisation constant M_alpha of w_alpha."""
    _check_alpha(alpha)
    if alpha == SQRT2:
        return 2.0
    return 2.0 / math.sqrt(alpha * alpha - 2.0)


def _check_alpha(alpha: float) -> None:
    if not alpha >= SQRT2:
        raise ValueError(f"no normalisable traveling wave for alpha={alpha} < sqrt(2)")


def wave_profile(alpha: float, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    m = wave_norm(alpha)
    xp = np.maximum(x, 0.0)
    if alpha == SQRT2:
        w = m * xp * np.exp(-alpha * xp)
    else:
        beta = math.sqrt(alpha * alpha - 2.0)
        w = 0.5 * m * (np.exp(-(alpha - beta) * xp) - np.exp(-(alpha + beta) * xp))
    return np.where(x > 0, w, 0.0)


def wave_tail(alpha: float, r) -> np.ndarray:
    """Mass of w_alpha on [r, inf)."""
    r = np.asarray(r, dtype=float)
    m = wave_norm(alpha)
    rp = np.maximum(r, 0.0)
    if alpha == SQRT2:
        f = np.exp(-alpha * rp) * (alpha * rp + 1.0)
    else:
        beta = math.sqrt(alpha * alpha - 2.0)
        f = 0.5 * m * (np.exp(-(alpha - beta) * rp) / (alpha - beta)
                       - np.exp(-(alpha + beta) * rp) / (alpha + beta))
    return np.where(r > 0, f, 1.0)


@dataclass(frozen=True, eq=False)
class TravelingWave:
    alpha: float
    norm: float
    density: DensityGrid

    def __call__(self, x):
        return wave_profile(self.alpha, x)

    def tail(self, r):
        return wave_tail(self.alpha, r)


def traveling_wave(alpha: float = SQRT2, dx: float = dn.DEFAULT_DX,
                   x_max: float | None = None, tail_cut: float = 1e-14) -> TravelingWave:
    """w_alpha as cell averages on ``[0, x_max]``.

    ``x_max`` defaults to the point where the remaining tail drops below
    ``tail_cut``; that remainder is the only mass missing from the grid.
    """
    _check_alpha(alpha)
    if x_max is None:
        x_max = 1.0
        while wave_tail(alpha, x_max) > tail_cut:
            x_max *= 1.25
    x_max = dx * math.ceil(float(x_max) / dx)
    u = dn.from_tail(lambda r: wave_tail(alpha, r), 0.0, x_max, dx)
    return TravelingWave(alpha, wave_norm(alpha), u)


def wave_residual(w: TravelingWave) -> float:
    """max |w''/2 + alpha w' + w| over interior cells, by central differences.

    Cell averages of an exact solution solve the same ODE, so the residual
    only measures the O(dx^2) truncation of the difference quotients.
    """
    v = w.density.values
    dx = w.density.dx
    d2 = (v[2:] - 2 * v[1:-1] + v[:-2]) / dx**2
    d1 = (v[2:] - v[:-2]) / (2 * dx)
    return float(np.max(np.abs(0.5 * d2 + w.alpha * d1 + v[1:-1])))


def _residual_of_values(v: np.ndarray, dx: float, alpha: float) -> float:
    d2 = (v[2:] - 2 * v[1:-1] + v[:-2]) / dx**2
    d1 = (v[2:] - v[:-2]) / (2 * dx)
    return float(np.max(np.abs(0.5 * d2 + alpha * d1 + v[1:-1])))


def right_derivative_at_zero(w: TravelingWave) -> float:
    """w'(0+) from the first cell: its average is w'(0) dx / 2 to first order."""
    return 2.0 * w.density.values[0] / w.density.dx


# ---------------------------------------------------------- boundary curves


@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    """Piecewise-linear t -> L_t, held constant outside the knots."""

    t: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        L = np.asarray(self.L, dtype=float)
        if t.ndim != 1 or t.shape != L.shape or t.size == 0:
            raise ValueError("knots must be two equal-length vectors")
        if np.any(np.diff(t) <= 0) or not np.all(np.isfinite(L)):
            raise ValueError("knot times must increase strictly and values be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "L", L)

    @classmethod
    def linear(cls, slope: float, t_max: float, intercept: float = 0.0) -> "BoundaryCurve":
        return cls(np.array([0.0, t_max]), np.array([intercept, intercept + slope * t_max]))

    @classmethod
    def constant(cls, level: float, t_max: float = 1.0) -> "BoundaryCurve":
        return cls(np.array([0.0, t_max]), np.array([level, level]))

    def __call__(self, s):
        return np.interp(s, self.t, self.L)


# -------------------------------------------------- absorbed Brownian paths


@dataclass
class SurvivalCurve:
    t: np.ndarray
    estimate: np.ndarray  # e^t P(tau > t)
    stderr: np.ndarray
    survival: np.ndarray  # P(tau > t)
    n_paths: int


def _kill(x, y, l1, l2, h, rng):
    """Mask of paths absorbed during a step from x to y (x above l1 assumed)."""
    dead = y <= l2
    live = ~dead
    p = np.exp(-2.0 * (x[live] - l1) * (y[live] - l2) / h)
    dead[live] = rng.random(p.size) < p
    return dead


def _absorbed(x, boundary, t_end: float, h: float, rng, report_every: int = 1):
    """Run paths from ``x`` against ``boundary(s)`` up to ``t_end``.

    Returns final positions of survivors (index into the start array) and the
    survivor count at every ``report_every``-th step.
    """
    n_steps = max(1, int(round(t_end / h)))
    h = t_end / n_steps
    sq = math.sqrt(h)
    idx = np.arange(x.size)
    x = x.copy()
    alive0 = x > boundary(0.0)
    x, idx = x[alive0], idx[alive0]
    counts = [x.size]
    times = [0.0]
    l_prev = float(boundary(0.0))
    for i in range(1, n_steps + 1):
        s = i * h
        l_next = float(boundary(s))
        y = x + sq * rng.standard_normal(x.size)
        keep = ~_kill(x, y, l_prev, l_next, h, rng)
        x, idx = y[keep], idx[keep]
        l_prev = l_next
        if i % report_every == 0 or i == n_steps:
            counts.append(x.size)
            times.append(s)
    return x, idx, np.array(times), np.array(counts)


def hitting_survival(rho: DensityGrid, L: BoundaryCurve, t_max: float, n_paths: int,
                     h: float, seed=0, report_every: int = 1) -> SurvivalCurve:
    """Weighted survival e^t * integral rho(x) P_x(tau^L > t) dx on a time grid.

    For a solution of the free boundary problem this curve is identically 1.
    """
    x0 = dn.sample(rho, n_paths, make_rng(seed, 0))
    _, _, times, counts = _absorbed(x0, L, t_max, h, make_rng(seed, 1), report_every)
    p = counts / n_paths
    w = np.exp(times)
    return SurvivalCurve(times, w * p, w * np.sqrt(p * (1 - p) / n_paths), p, n_paths)


def forward_tail_mc(rho: DensityGrid, L: BoundaryCurve, a: float, t: float, n_paths: int,
                    seed=0, h: float = 1e-3) -> tuple[float, float]:
    """(estimate, stderr) of e^t * integral rho(x) P_x(B_t > a, tau^L > t) dx.

    Uses the same random streams as :func:`hitting_survival`, so with
    ``a = -inf`` the two agree exactly at ``t``.
    """
    x0 = dn.sample(rho, n_paths, make_rng(seed, 0))
    x, _, _, _ = _absorbed(x0, L, t, h, make_rng(seed, 1), report_every=10**9)
    p = np.count_nonzero(x > a) / n_paths
    w = math.exp(t)
    return w * p, w * math.sqrt(p * (1 - p) / n_paths)


def backward_density_mc(rho: DensityGrid, L: BoundaryCurve, x: float, t: float, n_paths: int,
                        seed=0, h: float = 1e-3) -> tuple[float, float]:
    """(estimate, stderr) of e^t E_x[rho(B_t); B_s > L_{t-s} for s <= t]."""
    start = np.full(n_paths, float(x))
    reversed_L = lambda s: L(t - s)  # noqa: E731
    xt, _, _, _ = _absorbed(start, reversed_L, t, h, make_rng(seed, 2), report_every=10**9)
    vals = np.zeros(n_paths)
    vals[: xt.size] = rho.evaluate(xt)
    w = math.exp(t)
    return w * vals.mean(), w * vals.std(ddof=1) / math.sqrt(n_paths)


def free_tail(rho: DensityGrid, a: float, t: float) -> float:
    """e^t P(B_t > a) for B_0 ~ rho, with no absorption."""
    from scipy.special import ndtr

    c = rho.centers
    mass = rho.values * rho.dx
    return float(math.exp(t) * np.sum(mass * ndtr((c - a) / math.sqrt(t))) / rho.mass)


# --------------------------------------------------------------------- speed


def leftmost_series(n: int, horizon: float, seed=0, x0=None, record_dt: float = 0.05):
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    return nbbm(x0, horizon, seed=seed, record_dt=record_dt, keep_sets=False)


def speed_estimate(n: int, horizon: float, burn_in: float, seed=0, x0=None,
                   record_dt: float = 0.05) -> float:
    """Least-squares slope of the leftmost particle over [burn_in, horizon]."""
    if not horizon > burn_in:
        raise ValueError("horizon must exceed burn_in")
    run = leftmost_series(n, horizon, seed, x0, record_dt)
    sel = run.times >= burn_in
    return float(np.polyfit(run.times[sel], run.leftmost[sel], 1)[0])


def stationary_speed(n: int, horizon: float, burn_in: float, seed=0, x0=None,
                     record_dt: float = 0.05) -> float:
    """(N-1) times the long-run mean gap between the two leftmost particles.

    This counts only the upward jumps of the minimum (a non-leftmost particle
    branches, the leftmost is removed).  With diffusing particles the minimum
    also drifts down each time the two leftmost cross, so the statistic is an
    upper bound for the speed, not an estimate of it.
    """
    if n < 2:
        return math.nan
    run = leftmost_series(n, horizon, seed, x0, record_dt)
    sel = run.times >= burn_in
    return float((n - 1) * run.second_gap[sel].mean())
