from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from nbbm_lab import bbm_sim as sim
from nbbm_lab.harness import yule_chisquare


def test_zero_horizon_forest_is_x0():
    x0 = np.array([0.3, -1.0, 2.0])
    f = sim.simulate_forest(x0, 0.0, 0.1, seed=1)
    z = f.particles(0.0)
    assert len(z) == 3 and np.array_equal(np.sort(x0), z.positions)
    assert np.all(z.member == 1)


def test_forest_is_deterministic():
    a = sim.simulate_forest(np.zeros(20), 1.0, 0.25, seed=[3, 4])
    b = sim.simulate_forest(np.zeros(20), 1.0, 0.25, seed=[3, 4])
    for fa, fb in zip(a.families, b.families):
        assert np.array_equal(fa.positions, fb.positions)
        assert np.array_equal(fa.birth_time, fb.birth_time)


def test_forest_invariants():
    f = sim.simulate_forest(np.linspace(0, 1, 30), 1.0, 0.1, seed=2)
    sizes = np.array([sim.family_sizes(f, t) for t in f.times])
    assert np.all(np.diff(sizes, axis=0) >= 0)
    for fam in f.families:
        assert np.all(np.isfinite(fam.positions))
        for j in range(1, fam.size):
            before = f.times < fam.birth_time[j]
            p = fam.parent[j]
            assert np.array_equal(fam.positions[j, before], fam.positions[p, before])


def test_off_grid_time_rejected():
    f = sim.simulate_forest(np.zeros(2), 1.0, 0.25, seed=0)
    with pytest.raises(ValueError):
        f.particles(0.3)
    with pytest.raises(ValueError):
        sim.simulate_forest(np.zeros(2), 1.0, 0.3)


def test_mean_population_many_to_one():
    t = 1.0
    f = sim.simulate_forest(np.zeros(4000), t, t, seed=11)
    n = sim.family_sizes(f, t)
    se = n.std(ddof=1) / math.sqrt(n.size)
    assert abs(n.mean() - math.exp(t)) <= 3 * se


def test_many_to_one_half_line():
    # E #{particles above a} = e^t P(B_t > a)
    t, a = 1.0, 0.5
    f = sim.simulate_forest(np.zeros(4000), t, t, seed=12)
    z = f.particles(t)
    counts = np.bincount(z.family[z.positions > a], minlength=f.n_families)
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    expected = math.exp(t) * stats.norm.sf(a / math.sqrt(t))
    assert abs(counts.mean() - expected) <= 3 * se


def test_family_size_is_geometric():
    delta = 0.2
    f = sim.simulate_forest(np.zeros(20000), delta, delta, seed=13)
    p, _ = yule_chisquare(sim.family_sizes(f, delta), delta)
    assert p > 0.01


def test_yule_pmf_sums_to_one():
    k = np.arange(1, 400)
    assert sim.yule_pmf(k, 1.0).sum() == pytest.approx(1.0, abs=1e-12)
    assert sim.yule_pmf(0, 1.0) == 0.0


def test_rank_selected_at_zero_and_subset():
    x0 = np.array([0.5, -0.2, 1.0, 0.1])
    f = sim.simulate_forest(x0, 0.5, 0.5, seed=4)
    y0 = sim.rank_selected(f, 0.0)
    assert np.array_equal(y0.positions, np.sort(x0))
    y = sim.rank_selected(f, 0.5)
    assert len(y) == 4 and y.labels() <= f.particles(0.5).labels()
    # every discarded member ranks below every kept one
    z = f.particles(0.5)
    rank = {(fm, mb): (x0[fm], fm, mb) for fm, mb in zip(z.family.tolist(), z.member.tolist())}
    dropped = z.labels() - y.labels()
    if dropped:
        assert max(rank[l] for l in dropped) < min(rank[l] for l in y.labels())


def test_post_selection_contracts():
    x0 = np.array([0.0, 0.4, 1.0])
    f = sim.simulate_forest(x0, 0.5, 0.5, seed=5)
    v = sim.post_selection(x0, x0, f)
    z = f.particles(0.5)
    ref = sim.n_rightmost(z.positions, z.family, z.member, 3)
    assert np.array_equal(v.positions, ref.positions)
    with pytest.raises(ValueError):
        sim.post_selection(x0 - 1.0, x0, f)
    g = sim.simulate_forest(x0, 0.0, 0.5, seed=5)
    assert np.array_equal(sim.post_selection(x0 + 1, x0, g).positions, x0 + 1)


def test_post_selection_dominates_nbbm_with_shift():
    x0 = np.array([0.0, 0.4, 1.0])
    f = sim.simulate_forest(x0, 0.5, 0.5, seed=6)
    base = sim.post_selection(x0, x0, f)
    up = sim.post_selection(x0 + np.array([0.1, 0.0, 0.3]), x0, f)
    a = np.union1d(base.positions, up.positions)
    assert np.all(base.count_at_or_above(a) <= up.count_at_or_above(a))


def test_nbbm_keeps_n():
    run = sim.nbbm(np.linspace(0, 1, 17), 2.0, seed=1, record_dt=0.5)
    assert all(len(s) == 17 for s in run.sets)
    assert run.n_events > 0


def test_nbbm_rejects_empty():
    with pytest.raises(ValueError):
        sim.nbbm(np.zeros(0), 1.0)


def test_nbbm_single_particle_is_brownian():
    finals = np.array([sim.nbbm(np.zeros(1), 1.0, seed=s).leftmost[-1] for s in range(2000)])
    assert abs(finals.mean()) <= 3 / math.sqrt(2000)
    assert finals.var(ddof=1) == pytest.approx(1.0, rel=0.1)


def test_nbbm_tie_removes_smaller_label():
    # two co-located particles: the lower (family, member) is the one that goes
    pos = np.array([0.0, 0.0])
    fam = np.array([1, 0])
    mem = np.array([1, 1])
    kept = sim.n_rightmost(pos, fam, mem, 1)
    assert kept.family.tolist() == [1]
