"""Densities on a uniform 1-D grid.

A :class:`DensityGrid` stores cell averages: cell ``i`` covers
``[x_lo + i*dx, x_lo + (i+1)*dx)``.  Tails are therefore piecewise linear in
the evaluation point and every operation below (tail, cut point, cut) is exact
for the piecewise-constant function the grid represents.

Mass that falls off the grid (kernel truncation, trimming of negligible
tails) is never dropped silently; it is added to ``leak``.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.special import ndtr

LEAK_BUDGET = 1e-8
DEFAULT_DX = 1e-3
KERNEL_RADIUS = 8.0  # in units of sqrt(t)
TRIM_MASS = 1e-16  # per side, relative to mass, charged to leak
_ALIGN_TOL = 1e-6  # fraction of a cell


class GridError(ValueError):
    """Raised when two grids cannot be put on a common lattice."""


class LeakBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DensityGrid:
    x_lo: float
    dx: float
    values: np.ndarray
    leak: float = 0.0

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if not self.dx > 0:
            raise ValueError(f"dx must be positive, got {self.dx}")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("density values must be finite and nonnegative")
        if self.leak < 0:
            raise ValueError("leak must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def x_hi(self) -> float:
        return self.x_lo + self.n * self.dx

    @property
    def edges(self) -> np.ndarray:
        return self.x_lo + self.dx * np.arange(self.n + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.x_lo + self.dx * (np.arange(self.n) + 0.5)

    @property
    def mass(self) -> float:
        return float(self.dx * self.values.sum())

    def right_cumulative(self) -> np.ndarray:
        """Tail masses at the ``n + 1`` cell edges; last entry is 0."""
        r = np.zeros(self.n + 1)
        r[:-1] = self.dx * np.cumsum(self.values[::-1])[::-1]
        return r

    def evaluate(self, x) -> np.ndarray:
        """Point values of the piecewise-constant density (0 off the grid)."""
        x = np.asarray(x, dtype=float)
        idx = np.floor((x - self.x_lo) / self.dx).astype(np.int64)
        inside = (idx >= 0) & (idx < self.n)
        out = np.zeros(x.shape)
        out[inside] = self.values[idx[inside]]
        return out

    def replace(self, **changes) -> "DensityGrid":
        kw = dict(x_lo=self.x_lo, dx=self.dx, values=self.values, leak=self.leak)
        kw.update(changes)
        return DensityGrid(**kw)


@dataclass(frozen=True, eq=False)
class TailFunction:
    """F(r) = integral of a density over [r, inf), sampled at cell edges."""

    x_lo: float
    dx: float
    values: np.ndarray = field(repr=False)

    @property
    def edges(self) -> np.ndarray:
        return self.x_lo + self.dx * np.arange(self.values.size)

    def __call__(self, a):
        e = self.edges
        return np.interp(a, e, self.values, left=self.values[0], right=0.0)


def tail_function(u: DensityGrid) -> TailFunction:
    return TailFunction(u.x_lo, u.dx, u.right_cumulative())


def tail(u: DensityGrid, a) -> float | np.ndarray:
    """Mass of ``u`` on ``[a, inf)``.

    Points left of the grid give the full mass, points right of it give 0.
    Accepts scalars or arrays.
    """
    r = u.right_cumulative()
    out = np.interp(a, u.edges, r, left=r[0], right=0.0)
    return float(out) if np.ndim(out) == 0 else out


def cut_point(u: DensityGrid, m: float) -> float:
    """q_m(u) = inf{a : tail(u, a) < m}; ``x_lo`` when nothing is cut."""
    if not m > 0:
        raise ValueError(f"cut mass must be positive, got {m}")
    r = u.right_cumulative()
    if m >= r[0]:
        return u.x_lo
    i = int(np.argmax(r < m))  # first edge with tail < m; i >= 1
    cell = i - 1
    return u.x_lo + cell * u.dx + (r[cell] - m) / u.values[cell]


def cut(u: DensityGrid, m: float) -> DensityGrid:
    """C_m u: zero the density left of the cut point so exactly ``m`` remains.

    The cell containing the cut point keeps the fraction of its mass lying to
    the right of the cut, so ``mass(cut(u, m)) == min(m, mass(u))``.
    """
    if not m > 0:
        raise ValueError(f"cut mass must be positive, got {m}")
    r = u.right_cumulative()
    if m >= r[0]:
        return u
    i = int(np.argmax(r < m))
    cell = i - 1
    vals = np.array(u.values)
    vals[:cell] = 0.0
    vals[cell] = (m - r[i]) / u.dx
    return _trim_zeros(u.replace(values=vals))


def _trim_zeros(u: DensityGrid) -> DensityGrid:
    nz = np.flatnonzero(u.values)
    if nz.size == 0:
        return u
    lo, hi = nz[0], nz[-1] + 1
    if lo == 0 and hi == u.n:
        return u
    return u.replace(x_lo=u.x_lo + lo * u.dx, values=u.values[lo:hi])


def _trim_tails(vals: np.ndarray, budget: float) -> tuple[int, int, float]:
    """Indices [lo, hi) keeping all but at most ``budget`` mass on each side."""
    if vals.size == 0:
        return 0, 0, 0.0
    left = np.cumsum(vals)
    right = np.cumsum(vals[::-1])
    lo = int(np.searchsorted(left, budget, side="right"))
    k = int(np.searchsorted(right, budget, side="right"))
    hi = vals.size - k
    if lo >= hi:
        return 0, vals.size, 0.0
    dropped = (left[lo - 1] if lo else 0.0) + (right[k - 1] if k else 0.0)
    return lo, hi, float(dropped)


def gaussian_kernel(t: float, dx: float, radius: float = KERNEL_RADIUS) -> np.ndarray:
    """Cell weights of N(0, t): CDF differences over cells centred at j*dx."""
    half = int(math.ceil(radius * math.sqrt(t) / dx))
    j = np.arange(0, half + 1)
    # binning the Gaussian into cells inflates its variance by dx^2/12
    # (Sheppard); shrink the variance so repeated steps do not drift
    var = t - dx * dx / 12.0
    s = math.sqrt(var if var > 0.25 * t else t)
    # survival-function differences on the positive side keep the tiny
    # weights accurate; the kernel is symmetric
    hi_edge = ndtr(-(j - 0.5) * dx / s)
    lo_edge = ndtr(-(j + 0.5) * dx / s)
    pos = hi_edge - lo_edge
    pos[0] = 1.0 - 2.0 * lo_edge[0]
    return np.concatenate([pos[:0:-1], pos])


def heat(u: DensityGrid, t: float, check_leak: bool = True) -> DensityGrid:
    """G_t u: convolution with the centred Gaussian of variance ``t``.

    The grid is extended on both sides by the kernel radius; the kernel's
    truncated mass and negligible far tails are charged to ``leak``.
    """
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    k = gaussian_kernel(t, u.dx)
    half = (k.size - 1) // 2
    mass_in = u.mass
    out = np.convolve(u.values, k) if u.n else np.zeros(0)
    lost = max(0.0, mass_in * (1.0 - math.fsum(k)))
    lo, hi, dropped = _trim_tails(out, TRIM_MASS * mass_in / u.dx)
    out = out[lo:hi]
    leak = u.leak + lost + dropped * u.dx
    res = DensityGrid(u.x_lo - (half - lo) * u.dx, u.dx, np.maximum(out, 0.0), leak)
    if check_leak and res.leak > LEAK_BUDGET:
        raise LeakBudgetExceeded(f"leak {res.leak:.3g} exceeds budget {LEAK_BUDGET:g}")
    return res


def heat_grow(u: DensityGrid, delta: float, check_leak: bool = True) -> DensityGrid:
    """e^delta G_delta u, the flow of u_t = u_rr/2 + u for time ``delta``."""
    g = heat(u, delta, check_leak=False)
    f = math.exp(delta)
    res = DensityGrid(g.x_lo, g.dx, g.values * f, u.leak + f * (g.leak - u.leak))
    if check_leak and res.leak > LEAK_BUDGET:
        raise LeakBudgetExceeded(f"leak {res.leak:.3g} exceeds budget {LEAK_BUDGET:g}")
    return res


# ---------------------------------------------------------------- alignment


def _offset(u: DensityGrid, x: float, dx: float) -> int:
    k = (x - u.x_lo) / dx
    kr = round(k)
    if abs(k - kr) > _ALIGN_TOL:
        raise GridError(f"grid origins {u.x_lo} and {x} are not aligned on spacing {dx}")
    return int(kr)


def coarsen(u: DensityGrid, factor: int, x_ref: float | None = None) -> DensityGrid:
    """Integrate ``u`` over blocks of ``factor`` cells aligned with ``x_ref``."""
    if factor == 1:
        return u
    dx = u.dx * factor
    x_ref = u.x_lo if x_ref is None else x_ref
    pad_left = (-_offset(u, x_ref, u.dx)) % factor
    vals = np.concatenate([np.zeros(pad_left), u.values])
    vals = np.concatenate([vals, np.zeros((-vals.size) % factor)])
    vals = vals.reshape(-1, factor).mean(axis=1)
    return u.replace(x_lo=u.x_lo - pad_left * u.dx, dx=dx, values=vals)


def refine(u: DensityGrid, factor: int) -> DensityGrid:
    """Split each cell into ``factor`` equal cells (exact for tails)."""
    if factor == 1:
        return u
    return u.replace(dx=u.dx / factor, values=np.repeat(u.values, factor))


def align(u: DensityGrid, v: DensityGrid) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Put two densities on a common lattice, coarsening the finer one."""
    ratio = max(u.dx, v.dx) / min(u.dx, v.dx)
    r = round(ratio)
    if abs(ratio - r) > 1e-9 * ratio:
        raise GridError(f"grid spacings {u.dx} and {v.dx} are not commensurate")
    if r > 1:
        if u.dx < v.dx:
            u = coarsen(u, r, v.x_lo)
        else:
            v = coarsen(v, r, u.x_lo)
    dx = u.dx
    off = _offset(u, v.x_lo, dx)
    lo = min(0, off)
    hi = max(u.n, off + v.n)
    a = np.zeros(hi - lo)
    b = np.zeros(hi - lo)
    a[-lo : -lo + u.n] = u.values
    b[off - lo : off - lo + v.n] = v.values
    return u.x_lo + lo * dx, dx, a, b


def dominates(u: DensityGrid, v: DensityGrid, tol: float = 0.0) -> bool:
    """True iff u is below v in the tail order: tail(u,a) <= tail(v,a) + tol."""
    _, dx, a, b = align(u, v)
    ta = dx * np.cumsum(a[::-1])[::-1]
    tb = dx * np.cumsum(b[::-1])[::-1]
    return bool(np.all(ta <= tb + tol))


def tail_gap(u: DensityGrid, v: DensityGrid) -> np.ndarray:
    """tail(u) - tail(v) at the edges of the common grid."""
    _, dx, a, b = align(u, v)
    return dx * (np.cumsum(a[::-1]) - np.cumsum(b[::-1]))[::-1]


def l1_distance(u: DensityGrid, v: DensityGrid) -> float:
    _, dx, a, b = align(u, v)
    return float(dx * np.abs(a - b).sum())


# ----------------------------------------------------------------- sampling


def sample(u: DensityGrid, n: int, seed) -> np.ndarray:
    """``n`` iid draws by exact inverse CDF of the piecewise-constant density."""
    mass = u.mass
    if not mass > 0:
        raise ValueError("cannot sample from a density of zero mass")
    rng = np.random.default_rng(seed)
    if n == 0:
        return np.zeros(0)
    cdf = np.cumsum(u.values) * u.dx
    target = rng.random(n) * cdf[-1]
    idx = np.searchsorted(cdf, target, side="right")
    idx = np.minimum(idx, u.n - 1)
    prev = np.where(idx > 0, cdf[idx - 1], 0.0)
    frac = (target - prev) / (u.values[idx] * u.dx)
    return u.x_lo + (idx + np.clip(frac, 0.0, 1.0)) * u.dx


# ------------------------------------------------------------ construction


def from_tail(F, x_lo: float, x_hi: float, dx: float) -> DensityGrid:
    """Cell averages from an analytic tail function F(r) = mass on [r, inf)."""
    n = int(round((x_hi - x_lo) / dx))
    e = x_lo + dx * np.arange(n + 1)
    fe = np.asarray(F(e), dtype=float)
    vals = np.maximum(fe[:-1] - fe[1:], 0.0) / dx
    return DensityGrid(x_lo, dx, vals)


def _exp_tail(rate, shift):
    return lambda r: np.exp(-rate * np.maximum(r - shift, 0.0))


def make_density(spec: Mapping[str, Any] | str | os.PathLike) -> DensityGrid:
    """Build a density from ``{"kind": ..., **params}``.

    Kinds: ``uniform`` (lo, hi), ``exponential`` (rate, shift, x_max),
    ``gaussian`` (mean, sigma, lo, hi), ``traveling_wave`` (alpha, x_max) and
    ``csv`` (path).  Common keys: ``dx`` (default 1e-3) and ``normalize``.
    A path to a ``.json`` or ``.csv`` file is also accepted.
    """
    if isinstance(spec, (str, os.PathLike)):
        path = os.fspath(spec)
        if path.endswith(".csv"):
            spec = {"kind": "csv", "path": path}
        else:
            with open(path) as fh:
                spec = json.load(fh)
    if not isinstance(spec, Mapping) or "kind" not in spec:
        raise ValueError(f"malformed density spec: {spec!r}")
    p = dict(spec)
    kind = p.pop("kind")
    dx = float(p.pop("dx", DEFAULT_DX))
    normalize = bool(p.pop("normalize", kind != "csv"))
    try:
        if kind == "uniform":
            lo, hi = float(p.get("lo", 0.0)), float(p.get("hi", 1.0))
            if not hi > lo:
                raise ValueError("uniform needs hi > lo")
            u = from_tail(lambda r: np.clip((hi - r) / (hi - lo), 0.0, 1.0), lo, hi, dx)
        elif kind == "exponential":
            rate, shift = float(p.get("rate", 1.0)), float(p.get("shift", 0.0))
            x_max = float(p.get("x_max", shift + 40.0 / rate))
            u = from_tail(_exp_tail(rate, shift), shift, x_max, dx)
            if not normalize:
                return u
        elif kind == "gaussian":
            mu, sd = float(p.get("mean", 0.0)), float(p.get("sigma", 1.0))
            lo = float(p.get("lo", mu - 8 * sd))
            hi = float(p.get("hi", mu + 8 * sd))
            u = from_tail(lambda r: ndtr((mu - r) / sd), lo, hi, dx)
        elif kind == "traveling_wave":
            from .fbp import traveling_wave

            return traveling_wave(float(p.get("alpha", math.sqrt(2.0))), dx=dx,
                                  x_max=p.get("x_max")).density
        elif kind == "csv":
            u = read_density_csv(p["path"])
        else:
            raise ValueError(f"unknown density kind {kind!r}")
    except KeyError as exc:
        raise ValueError(f"density spec {spec!r} is missing {exc}") from None
    if normalize and u.mass > 0:
        u = u.replace(values=u.values / u.mass)
    return u


# ---------------------------------------------------------------------- I/O


def write_csv(path, obj: DensityGrid | TailFunction) -> None:
    """Two-column ``x,value`` file; for densities x is the left cell edge."""
    xs = obj.edges[: obj.values.size]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "value"])
        for x, v in zip(xs, obj.values):
            w.writerow([repr(float(x)), repr(float(v))])


def _read_columns(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows and rows[0] and not _is_number(rows[0][0]):
        rows = rows[1:]
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two rows")
    x = np.array([float(r[0]) for r in rows])
    v = np.array([float(r[1]) for r in rows])
    return x, v


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _spacing(x: np.ndarray, path) -> float:
    dx = (x[-1] - x[0]) / (x.size - 1)
    if not dx > 0 or np.max(np.abs(np.diff(x) - dx)) > 1e-6 * dx:
        raise ValueError(f"{path}: x column is not a uniform increasing grid")
    return float(dx)


def read_density_csv(path) -> DensityGrid:
    x, v = _read_columns(path)
    return DensityGrid(float(x[0]), _spacing(x, path), v)


def read_tail_csv(path) -> TailFunction:
    x, v = _read_columns(path)
    return TailFunction(float(x[0]), _spacing(x, path), v)


__all__: Sequence[str] = [
    "DensityGrid", "TailFunction", "GridError", "LeakBudgetExceeded", "LEAK_BUDGET",
    "tail", "tail_function", "cut_point", "cut", "heat", "heat_grow", "gaussian_kernel",
    "align", "coarsen", "refine", "dominates", "tail_gap", "l1_distance", "sample",
    "from_tail", "make_density", "write_csv", "read_density_csv", "read_tail_csv",
]
