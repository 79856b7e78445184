from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from nbbm_lab import barriers_micro as bmi
from nbbm_lab import bbm_sim as sim
from nbbm_lab import density as dn


def _state(x, y, rank_family, roots):
    n = len(x)
    return bmi.CoupledState(
        np.array(x, float), np.arange(n), np.ones(n, dtype=np.int64), np.array(y, float),
        np.zeros(n, dtype=bool), np.array(rank_family), np.ones(n, dtype=np.int64),
        np.ones(n, dtype=np.int64), np.zeros(n, dtype=bool), np.zeros(n, dtype=bool),
        np.array(roots, float))


def test_case_1b_hand_built():
    # label 0 is leftmost in X, label 1 holds the lowest rank, label 2 branches
    s = _state([0.0, 1.0, 2.0], [-0.5, -1.0, 1.5], [1, 0, 2], [-1.0, -0.5, 1.5])
    s.check()
    case = s.branch(2, (2, 2))
    assert case == "1b"
    assert s.x.tolist() == [2.0, 1.0, 2.0]
    assert s.y.tolist() == [1.5, -0.5, 1.5]  # Y^m = old Y^n, Y^h = old Y^m
    assert (s.rank_family[1], s.rank_member[1]) == (1, 1)  # h takes m's old rank
    assert (s.rank_family[0], s.rank_member[0]) == (2, 2)  # m gets a new rank in n's family
    assert s.family_lost.tolist() == [True, False, False]
    # the lost family has no particles left, so every label is in a full family
    assert s.full_families().tolist() == [0, 1, 2]


def test_case_1a_hand_built():
    s = _state([0.0, 1.0, 2.0], [-1.0, 0.5, 1.5], [0, 1, 2], [-1.0, 0.5, 1.5])
    assert s.branch(2, (2, 2)) == "1a"
    assert s.y.tolist() == [1.5, 0.5, 1.5]
    assert s.family_lost.tolist() == [True, False, False]


def test_case_2c_leftmost_lowest_branches():
    s = _state([0.0, 1.0, 2.0], [-1.0, 0.5, 1.5], [0, 1, 2], [-1.0, 0.5, 1.5])
    assert s.branch(0, (0, 2)) == "2c"
    assert s.y.tolist() == [-1.0, 0.5, 1.5]
    assert (s.rank_family[0], s.rank_member[0]) == (0, 2)


def test_breach_is_detected():
    s = _state([0.0, 1.0], [0.5, 0.0], [0, 1], [0.5, 0.0])
    with pytest.raises(bmi.CouplingBreach):
        s.check()


def test_pair_puts_missing_first():
    s = bmi.CoupledState.pair([3.0, 1.0, 2.0], [0.5, 2.5])
    assert s.y_missing.tolist() == [False, True, False]
    assert s.y[0] == 2.5 and s.y[2] == 0.5


@pytest.mark.parametrize("seed", range(10))
def test_coupled_triple_is_ordered(seed):
    x0 = dn.sample(dn.make_density({"kind": "uniform"}), 30, seed)
    run = bmi.coupled_triple(x0, 0.2, 5, seed=seed)
    assert run.violations == 0
    assert all(len(s) == 30 for s in run.upper.sets + run.mid.sets)
    assert all(d >= 0 for d in run.lower.deficits)


def test_case_table_is_exercised():
    cases = sum((bmi.coupled_triple(np.linspace(0, 1, 20), 0.1, 10, seed=s).cases
                 for s in range(20)), start=bmi.Counter())
    assert {"1a", "1b", "2a", "2b", "2c"} <= set(cases)


def test_tail_count_violation_counter():
    lo = sim.ParticleSet.from_positions([1.0])
    mid = sim.ParticleSet.from_positions([0.0])
    assert bmi.tail_count_violations(lo, mid, mid) == 1
    assert bmi.tail_count_violations(mid, mid, mid) == 0


def test_independent_barriers_basic():
    x0 = np.linspace(0, 1, 25)
    up = bmi.upper_run(x0, 0.1, 4, seed=1)
    lo = bmi.lower_run(x0, 0.1, 4, seed=1)
    assert all(len(s) == 25 for s in up.sets)
    assert all(0 <= d for d in lo.deficits)
    assert all(len(s) <= 25 for s in lo.sets)


def test_lower_deficit_stays_order_one():
    means = []
    for n in (100, 1000):
        d = [np.mean(bmi.lower_run(np.linspace(0, 1, n), 0.1, 3, seed=s).deficits)
             for s in range(5)]
        means.append(np.mean(d))
    assert max(means) < 10


def test_coupled_marginals_match_independent():
    # both barriers inside the coupling have the laws of the independent ones
    x0 = np.linspace(0, 2, 20)
    lo_c, lo_i, up_c, up_i = [], [], [], []
    for s in range(300):
        run = bmi.coupled_triple(x0, 0.5, 2, seed=[1, s])
        lo_c.append(run.lower.sets[-1].positions.mean())
        up_c.append(run.upper.sets[-1].positions.mean())
        lo_i.append(bmi.lower_run(x0, 0.5, 2, seed=[2, s]).sets[-1].positions.mean())
        up_i.append(bmi.upper_run(x0, 0.5, 2, seed=[3, s]).sets[-1].positions.mean())
    assert stats.ks_2samp(lo_c, lo_i).pvalue > 0.01
    assert stats.ks_2samp(up_c, up_i).pvalue > 0.01


def test_empirical_tail():
    p = sim.ParticleSet.from_positions([0.0, 1.0, 2.0, 3.0])
    assert bmi.empirical_tail(p, -np.inf) == 1.0
    assert bmi.empirical_tail(p, 10.0) == 0.0
    assert bmi.empirical_tail(p, 1.0) == 0.75
    with pytest.raises(ValueError):
        bmi.empirical_tail(sim.ParticleSet.from_positions([]), 0.0)


@pytest.mark.parametrize("n", [100, 1000])
def test_dkw_bound(n):
    u = dn.make_density({"kind": "exponential"})
    misses = 0
    for s in range(100):
        p = sim.ParticleSet.from_positions(dn.sample(u, n, s))
        x = p.positions
        F = dn.tail(u, x)
        above = bmi.empirical_tail(p, x)
        just_right = above - 1.0 / n
        d = max(np.max(np.abs(above - F)), np.max(np.abs(just_right - F)))
        misses += d > 1.63 / math.sqrt(n)
    assert misses <= 4
