"""Randomised checks of the cut and heat operators.

Each property draws random step densities on a shared lattice and records
the worst violation seen.  Comparisons that pass through grid alignment are
allowed a slack of ``ALIGN_SLACK``; everything else must hold exactly.
"""
from __future__ import annotations

import math

import numpy as np

from . import density as dn

ALIGN_SLACK = 1e-10
GRADIENT_CONSTANT = 3.0 / math.sqrt(2.0 * math.pi)


def random_density(rng: np.random.Generator, dx: float = 0.01, max_cells: int = 200,
                   mass: float | None = None) -> dn.DensityGrid:
    """A random step density whose left edge sits on the ``dx`` lattice."""
    n = int(rng.integers(1, max_cells + 1))
    vals = rng.exponential(1.0, n) * (rng.random(n) < 0.8)
    if not vals.any():
        vals[int(rng.integers(n))] = 1.0
    scale = (mass if mass is not None else rng.uniform(0.2, 2.0)) / (vals.sum() * dx)
    x_lo = dx * int(rng.integers(-100, 100))
    return dn.DensityGrid(x_lo, dx, vals * scale)


def random_ordered_pair(rng: np.random.Generator, dx: float = 0.01):
    """(u, v) with u below v in the tail order.

    v is u pushed right by whole cells and mass moved rightwards, plus an
    optional non-negative extra density.
    """
    u = random_density(rng, dx)
    shift = int(rng.integers(0, 30))
    vals = u.values.copy()
    # move a random fraction of each cell's mass to a later cell
    frac = rng.random(vals.size) * (rng.random() < 0.5)
    jump = rng.integers(0, 20, vals.size)
    moved = vals * frac
    out = np.zeros(vals.size + 20)
    out[: vals.size] += vals - moved
    np.add.at(out, np.arange(vals.size) + jump, moved)
    if rng.random() < 0.5:
        out += rng.exponential(0.2, out.size) * (rng.random(out.size) < 0.3)
    v = dn.DensityGrid(u.x_lo + shift * dx, dx, out)
    return u, v


def _heat_t(rng) -> float:
    return float(rng.uniform(0.01, 0.5))


def _cut_m(rng, u) -> float:
    return float(rng.uniform(0.05, 1.2) * u.mass)


def check_a(rng) -> float:
    """u below v implies C_m u below v."""
    u, v = random_ordered_pair(rng)
    return float(np.max(dn.tail_gap(dn.cut(u, _cut_m(rng, u)), v)))


def check_c(rng) -> float:
    """C_m and G_t preserve the order."""
    u, v = random_ordered_pair(rng)
    m = float(rng.uniform(0.05, 1.2) * u.mass)
    t = _heat_t(rng)
    g1 = np.max(dn.tail_gap(dn.cut(u, m), dn.cut(v, m)))
    g2 = np.max(dn.tail_gap(dn.heat(u, t), dn.heat(v, t)))
    return float(max(g1, g2))


def check_d(rng) -> float:
    """C_m is an L1 contraction between densities of equal mass.

    Equal mass is needed: u = 1[0,1]/2, v = u + 1[5,6], m = 1 gives
    ||C_m u - C_m v|| = 1.5 > 1 = ||u - v||.
    """
    mass = float(rng.uniform(0.2, 2.0))
    u, v = random_density(rng, mass=mass), random_density(rng, mass=mass)
    m = float(rng.uniform(0.05, 1.2) * mass)
    return dn.l1_distance(dn.cut(u, m), dn.cut(v, m)) - dn.l1_distance(u, v)


def check_e(rng) -> float:
    """G_t is an L1 contraction."""
    u, v = random_density(rng), random_density(rng)
    t = _heat_t(rng)
    return dn.l1_distance(dn.heat(u, t), dn.heat(v, t)) - dn.l1_distance(u, v)


def check_f(rng) -> float:
    """Gradient bound for G_t u, returned as excess over c ||u||_inf / sqrt(t)."""
    u = random_density(rng)
    t = _heat_t(rng)
    g = dn.heat(u, t)
    grad = np.abs(np.diff(np.concatenate([[0.0], g.values, [0.0]]))) / g.dx
    return float(grad.max() - GRADIENT_CONSTANT * u.values.max() / math.sqrt(t))


CHECKS = {"a": check_a, "c": check_c, "d": check_d, "e": check_e, "f": check_f}
TOLERANCES = {"a": ALIGN_SLACK, "c": ALIGN_SLACK, "d": ALIGN_SLACK, "e": ALIGN_SLACK, "f": 0.0}


def run_operator_suite(cases: int = 1000, seed=0) -> dict[str, dict]:
    """Run every property ``cases`` times; returns counts and the worst excess."""
    out = {}
    for i, (name, fn) in enumerate(CHECKS.items()):
        rng = np.random.default_rng([int(s) for s in np.atleast_1d(seed)] + [i])
        worst = -math.inf
        failures = 0
        for _ in range(cases):
            excess = fn(rng)
            worst = max(worst, excess)
            failures += excess > TOLERANCES[name]
        out[name] = {"cases": cases, "failures": int(failures), "worst": float(worst),
                     "tol": TOLERANCES[name]}
    return out
