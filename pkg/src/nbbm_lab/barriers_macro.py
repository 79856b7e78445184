"""Deterministic barriers and the dyadic squeeze.

The upper barrier grows and diffuses for time ``delta`` and then cuts back to
unit mass; the lower barrier first cuts down to mass ``exp(-delta)`` and then
grows.  Both keep unit mass.  Halving ``delta`` moves the lower barrier up and
the upper barrier down in the tail order, and their L1 gap is O(delta), so a
sequence of dyadic refinements brackets the hydrodynamic limit.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import density as dn
from .density import DensityGrid, TailFunction


@dataclass
class BarrierTrajectory:
    side: str
    delta: float
    snapshots: list[DensityGrid]
    cut_points: list[float]

    @property
    def last(self) -> DensityGrid:
        return self.snapshots[-1]

    @property
    def times(self) -> np.ndarray:
        return self.delta * np.arange(len(self.snapshots))


@dataclass
class SqueezeResult:
    t: float
    n_final: int
    lower: TailFunction
    upper: TailFunction
    gap_l1: float
    converged: bool
    lower_density: DensityGrid = field(repr=False)
    upper_density: DensityGrid = field(repr=False)
    history: list[tuple[int, float]] = field(default_factory=list)

    def bracket(self, a) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper bounds for the tail of the limit density at ``a``."""
        return self.lower(a), self.upper(a)

    def width(self) -> float:
        """Largest vertical distance between the two tail envelopes."""
        return float(np.max(dn.tail_gap(self.upper_density, self.lower_density)))

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "n_final": self.n_final,
            "delta": self.t / 2**self.n_final,
            "gap_l1": self.gap_l1,
            "tail_width": self.width(),
            "converged": self.converged,
            "history": [{"n": n, "gap_l1": g} for n, g in self.history],
        }


class SqueezeNotConverged(UserWarning):
    pass


def barrier_dx(delta: float) -> float:
    """Grid spacing fine enough that discretisation stays below the O(delta) gap."""
    return min(1e-3, math.sqrt(delta) / 50.0)


def on_barrier_grid(u: DensityGrid, delta: float) -> DensityGrid:
    """Refine ``u`` by an integer factor until its spacing suits ``delta``."""
    factor = max(1, math.ceil(u.dx / barrier_dx(delta) - 1e-9))
    return dn.refine(u, factor)


def _check_mass(u: DensityGrid) -> None:
    if abs(u.mass - 1.0) > 1e-10:
        raise ValueError(f"barrier steps need unit mass, got {u.mass!r}")


def step_plus(u: DensityGrid, delta: float) -> tuple[DensityGrid, float]:
    """One upper-barrier step C_1 e^delta G_delta; returns (density, cut point)."""
    _check_mass(u)
    g = dn.heat_grow(u, delta)
    q = dn.cut_point(g, 1.0)
    return dn.cut(g, 1.0), q


def step_minus(u: DensityGrid, delta: float) -> tuple[DensityGrid, float]:
    """One lower-barrier step e^delta G_delta C_{e^-delta}."""
    _check_mass(u)
    m = math.exp(-delta)
    q = dn.cut_point(u, m)
    return dn.heat_grow(dn.cut(u, m), delta), q


_STEPS = {"+": step_plus, "-": step_minus}


def evolve(u: DensityGrid, delta: float, k: int, side: str, keep: bool = True) -> BarrierTrajectory:
    """Apply ``k`` barrier steps; ``keep=False`` stores only the last snapshot."""
    try:
        step = _STEPS[side]
    except KeyError:
        raise ValueError(f"side must be '+' or '-', got {side!r}") from None
    snaps, cuts = [u], []
    for _ in range(k):
        u, q = step(u, delta)
        cuts.append(q)
        if keep:
            snaps.append(u)
        else:
            snaps = [u]
    return BarrierTrajectory(side, delta, snaps, cuts)


def barrier_pair(u: DensityGrid, t: float, n: int) -> tuple[DensityGrid, DensityGrid]:
    """(S^-, S^+) at time ``t`` with step ``t / 2**n``."""
    k = 2**n
    delta = t / k
    lo = evolve(u, delta, k, "-", keep=False).last
    hi = evolve(u, delta, k, "+", keep=False).last
    return lo, hi


def squeeze(u: DensityGrid, t: float, tol: float, n_max: int = 8, n_min: int = 1,
            refine_grid: bool = True) -> SqueezeResult:
    """Refine the dyadic level until the barrier gap is at most ``tol``.

    The bracket of the result is rigorous for the tail of the limit density
    whatever the gap; when ``n_max`` is hit first the result carries
    ``converged=False`` and a :class:`SqueezeNotConverged` warning is issued.
    """
    if not t > 0 or not tol > 0:
        raise ValueError("squeeze needs t > 0 and tol > 0")
    if refine_grid:
        u = on_barrier_grid(u, t / 2**n_max)
    history = []
    for n in range(n_min, n_max + 1):
        lo, hi = barrier_pair(u, t, n)
        gap = dn.l1_distance(lo, hi)
        history.append((n, gap))
        if gap <= tol:
            break
    converged = gap <= tol
    if not converged:
        warnings.warn(f"squeeze gap {gap:.3g} > tol {tol:g} at level {n}", SqueezeNotConverged,
                      stacklevel=2)
    return SqueezeResult(t, n, dn.tail_function(lo), dn.tail_function(hi), gap, converged,
                         lo, hi, history)


def squeeze_level(u: DensityGrid, t: float, n: int, refine_grid: bool = True) -> SqueezeResult:
    """Bracket at a fixed dyadic level ``n`` (no convergence criterion)."""
    if refine_grid:
        u = on_barrier_grid(u, t / 2**n)
    lo, hi = barrier_pair(u, t, n)
    gap = dn.l1_distance(lo, hi)
    return SqueezeResult(t, n, dn.tail_function(lo), dn.tail_function(hi), gap, True, lo, hi,
                         [(n, gap)])


def smoothing_defect(traj: BarrierTrajectory, s_index: int, t_index: int) -> float:
    """sup |S_t u - e^{t-s} G_{t-s} S_s u| for a lower-barrier trajectory."""
    s_snap = traj.snapshots[s_index]
    lag = (t_index - s_index) * traj.delta
    free = dn.heat_grow(s_snap, lag, check_leak=False)
    _, _, a, b = dn.align(traj.snapshots[t_index], free)
    return float(np.max(np.abs(a - b)))
