from __future__ import annotations

import math

import numpy as np
import pytest

from nbbm_lab import barriers_macro as bm
from nbbm_lab import density as dn
from nbbm_lab.fbp import SQRT2, traveling_wave, wave_tail


@pytest.fixture(scope="module")
def wave():
    return traveling_wave().density


def test_step_plus_uniform():
    u = dn.make_density({"kind": "uniform"})
    out, q = bm.step_plus(u, 0.1)
    assert out.mass == pytest.approx(1.0, abs=1e-12)
    assert math.isfinite(q) and q < 0.5


def test_step_minus_exponential_cut_point():
    u = dn.make_density({"kind": "exponential"})
    out, q = bm.step_minus(u, 0.1)
    assert q == pytest.approx(0.1, abs=u.dx)
    assert out.mass == pytest.approx(1.0, abs=1e-10)


def test_step_on_wave_has_positive_cut(wave):
    out, q = bm.step_plus(wave, 0.1)
    assert q > 0 and out.mass == pytest.approx(1.0, abs=1e-10)


def test_step_rejects_unnormalised():
    u = dn.DensityGrid(0.0, 0.01, np.full(100, 2.0))
    with pytest.raises(ValueError):
        bm.step_plus(u, 0.1)


@pytest.mark.parametrize("step", [bm.step_plus, bm.step_minus])
def test_tiny_step_is_identity(step):
    u = dn.make_density({"kind": "uniform"})
    out, _ = step(u, 1e-8)
    assert dn.l1_distance(out, u) <= 1e-3


def test_evolve_zero_steps():
    u = dn.make_density({"kind": "uniform"})
    tr = bm.evolve(u, 0.1, 0, "+")
    assert tr.snapshots == [u] and tr.cut_points == []


def test_evolve_is_composition():
    u = dn.make_density({"kind": "uniform", "dx": 0.005})
    tr = bm.evolve(u, 0.1, 2, "-")
    a, q1 = bm.step_minus(u, 0.1)
    b, q2 = bm.step_minus(a, 0.1)
    assert np.array_equal(tr.last.values, b.values)
    assert tr.cut_points == [q1, q2]


@pytest.mark.parametrize("seed", range(5))
def test_lower_below_upper_every_step(seed):
    rng = np.random.default_rng(seed)
    vals = rng.exponential(1.0, 60) * (rng.random(60) < 0.8) + 1e-3
    u = dn.DensityGrid(0.0, 0.01, vals / (vals.sum() * 0.01))
    delta = float(rng.uniform(0.05, 0.3))
    lo = bm.evolve(u, delta, 6, "-")
    hi = bm.evolve(u, delta, 6, "+")
    for a, b in zip(lo.snapshots, hi.snapshots):
        assert dn.dominates(a, b, 1e-10)
        assert a.mass == pytest.approx(1.0, abs=1e-10)
        assert b.mass == pytest.approx(1.0, abs=1e-10)


def test_squeeze_converges_on_wave(wave):
    t = 0.25
    res = bm.squeeze(wave, t, 1e-2, n_max=6)
    assert res.converged and res.gap_l1 <= 1e-2
    gaps = [g for _, g in res.history]
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    e = res.lower_density.edges
    exact = wave_tail(SQRT2, e - SQRT2 * t)
    lo, hi = res.bracket(e)
    assert np.all(lo <= exact + 1e-8) and np.all(exact <= hi + 1e-8)


def test_squeeze_flags_non_convergence(wave):
    with pytest.warns(bm.SqueezeNotConverged):
        res = bm.squeeze(wave, 0.25, 1e-9, n_max=2)
    assert not res.converged and res.n_final == 2
    assert res.to_dict()["converged"] is False


def test_squeeze_monotone_in_level(wave):
    t = 0.5
    base = bm.on_barrier_grid(wave, t / 16)
    pairs = [bm.barrier_pair(base, t, n) for n in (2, 3, 4)]
    for (lo_a, hi_a), (lo_b, hi_b) in zip(pairs, pairs[1:]):
        assert dn.dominates(lo_a, lo_b, 1e-10)
        assert dn.dominates(hi_b, hi_a, 1e-10)


def test_smoothing_defect_bound(wave):
    delta = 0.05
    tr = bm.evolve(bm.on_barrier_grid(wave, delta), delta, 20, "-")
    T = 20 * delta
    rng = np.random.default_rng(3)
    for _ in range(6):
        s, t = sorted(rng.choice(21, 2, replace=False))
        bound = 2 * math.exp(T) * math.sqrt((t - s) * delta) / math.sqrt(2 * math.pi)
        assert bm.smoothing_defect(tr, s, t) <= bound


def test_barrier_dx():
    assert bm.barrier_dx(1.0) == 1e-3
    assert bm.barrier_dx(1e-4) == pytest.approx(1e-2 / 50)
