"""Stochastic barriers and the labelled coupling that orders them pathwise.

The upper barrier keeps, every ``delta``, the N rightmost offspring of the
previously selected particles.  The lower barrier selects at the start of the
step: whole leftmost families are discarded until the descendants at the end
of the step number at most N.

:func:`coupled_triple` runs an N-BBM together with both barriers so that at
every multiple of ``delta``

    count(lower >= a) <= count(N-BBM >= a) <= count(upper >= a)   for all a.

The lower side goes through the rank-selected process Y, whose particles
copy the Brownian increments of the N-BBM particle carrying the same label
and therefore never overtake it.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .bbm_sim import (BbmForest, Family, ParticleSet, make_rng, n_rightmost,
                      post_selection, simulate_forest)


class CouplingBreach(AssertionError):
    """A Y particle overtook its X partner; indicates a bug, never expected."""


@dataclass(frozen=True, order=True)
class RankLabel:
    """(family, member) rank; families are compared by their root position first."""

    root: float
    family: int
    member: int


@dataclass
class BarrierRun:
    delta: float
    sets: list[ParticleSet]
    cut_points: list[float] = field(default_factory=list)
    deficits: list[int] = field(default_factory=list)


# ---------------------------------------------------------- single steps


def _family_blocks(forest: BbmForest):
    z = forest.particles(forest.horizon)
    sizes = np.bincount(z.family, minlength=forest.n_families)
    return z, sizes


def upper_step(selected: ParticleSet, forest: BbmForest, n: int | None = None
               ) -> tuple[ParticleSet, float]:
    """Keep the ``n`` rightmost offspring at the end of the forest segment.

    ``forest`` must be rooted at the selected positions.
    """
    n = len(selected) if n is None else n
    _check_roots(selected, forest)
    z = forest.particles(forest.horizon)
    if len(z) < n:
        raise ValueError(f"only {len(z)} descendants for {n} places")
    out = n_rightmost(z.positions, z.family, z.member, n)
    return out, float(out.positions[0]) if n else math.inf


def lower_step(selected: ParticleSet, forest: BbmForest, n: int
               ) -> tuple[ParticleSet, float, int]:
    """Drop whole leftmost families until at most ``n`` descendants remain.

    Returns the kept descendants at the end of the segment, the cut point
    (root position of the leftmost kept family) and the deficit ``n - kept``.
    """
    _check_roots(selected, forest)
    z, sizes = _family_blocks(forest)
    roots = forest.x0
    order = np.lexsort((np.arange(roots.size), roots))  # rank order of families
    from_right = np.cumsum(sizes[order][::-1])
    n_fams = int(np.searchsorted(from_right, n, side="right"))
    kept = order[order.size - n_fams:]
    mask = np.isin(z.family, kept)
    out = ParticleSet(z.positions[mask], z.family[mask], z.member[mask])
    cut = float(roots[kept].min()) if n_fams else math.inf
    return out, cut, n - len(out)


def _check_roots(selected: ParticleSet, forest: BbmForest) -> None:
    if not np.array_equal(np.sort(forest.x0), selected.positions):
        raise ValueError("forest segment is not rooted at the selected particles")


def empirical_tail(p: ParticleSet, a, n: int | None = None):
    """Fraction of particles at or right of ``a`` (normalised by ``n``)."""
    if len(p) == 0:
        raise ValueError("empirical tail of an empty set")
    n = len(p) if n is None else n
    return p.count_at_or_above(a) / n


def _run(x0, delta, k_max, seed, side) -> BarrierRun:
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    sel = ParticleSet.from_positions(x0)
    run = BarrierRun(delta, [sel])
    for k in range(k_max):
        forest = simulate_forest(sel.positions, delta, delta, seed=[*_seed_list(seed), k])
        if side == "+":
            sel, q = upper_step(sel, forest, n)
            d = 0
        else:
            sel, q, d = lower_step(sel, forest, n)
        run.sets.append(sel)
        run.cut_points.append(q)
        run.deficits.append(d)
    return run


def _seed_list(seed) -> list[int]:
    return [int(seed)] if np.ndim(seed) == 0 else [int(s) for s in seed]


def upper_run(x0, delta: float, k_max: int, seed=0) -> BarrierRun:
    return _run(x0, delta, k_max, seed, "+")


def lower_run(x0, delta: float, k_max: int, seed=0) -> BarrierRun:
    return _run(x0, delta, k_max, seed, "-")


# ------------------------------------------------------------ the coupling


@dataclass
class CoupledState:
    """Labelled X (N-BBM) and Y (rank-selected) particles, one pair per label.

    Y families are numbered in the order of their root positions, so ranks
    compare lexicographically as (rank_family, rank_member).  A Y particle
    standing for a missing particle (at minus infinity) has ``y_missing`` set
    and its ``y`` entry is meaningless.
    """

    x: np.ndarray
    x_family: np.ndarray
    x_member: np.ndarray
    y: np.ndarray
    y_missing: np.ndarray
    rank_family: np.ndarray
    rank_member: np.ndarray
    family_max_rank: np.ndarray  # the counters M^i
    family_lost: np.ndarray
    family_missing: np.ndarray
    family_root: np.ndarray

    @classmethod
    def pair(cls, x, y_real) -> "CoupledState":
        """Pair the k-th smallest Y with the k-th smallest X, missing Y's first."""
        x = np.asarray(x, dtype=float)
        y_real = np.sort(np.asarray(y_real, dtype=float))
        n = x.size
        if y_real.size > n:
            raise ValueError("more Y particles than labels")
        n_missing = n - y_real.size
        by_x = np.argsort(x, kind="stable")
        y = np.zeros(n)
        missing = np.zeros(n, dtype=bool)
        y[by_x[n_missing:]] = y_real
        missing[by_x[:n_missing]] = True
        fam = np.empty(n, dtype=np.int64)
        fam[by_x] = np.arange(n)
        roots = np.concatenate([np.full(n_missing, -np.inf), y_real])
        state = cls(x.copy(), np.arange(n), np.ones(n, dtype=np.int64), y, missing,
                    fam, np.ones(n, dtype=np.int64), np.ones(n, dtype=np.int64),
                    np.zeros(n, dtype=bool), np.arange(n) < n_missing, roots)
        state.check()
        return state

    @property
    def n(self) -> int:
        return self.x.size

    def rank(self, label: int) -> RankLabel:
        f = int(self.rank_family[label])
        return RankLabel(float(self.family_root[f]), f, int(self.rank_member[label]))

    def leftmost_x(self) -> int:
        return int(np.lexsort((self.x_member, self.x_family, self.x))[0])

    def lowest_rank(self) -> int:
        return int(np.lexsort((self.rank_member, self.rank_family))[0])

    def check(self) -> None:
        bad = ~self.y_missing & (self.y > self.x)
        if bad.any():
            l = int(np.flatnonzero(bad)[0])
            raise CouplingBreach(f"label {l}: Y={self.y[l]!r} > X={self.x[l]!r}")
        if np.any(self.y_missing != self.family_missing[self.rank_family]):
            raise CouplingBreach("a missing Y particle carries a rank of a real family")

    def _new_rank(self, family: int) -> tuple[int, int]:
        self.family_max_rank[family] += 1
        return family, int(self.family_max_rank[family])

    def branch(self, n: int, newborn: tuple[int, int]) -> str:
        """Apply a branching of the X particle with label ``n``.

        ``newborn`` is the (family, member) label of the new X particle.  The
        leftmost X particle moves onto it; the Y side follows the case table
        and the lowest-ranked Y particle is always the one that is lost.
        Returns the case name ("1a", "1b", "2a", "2b" or "2c").
        """
        m = self.leftmost_x()
        h = self.lowest_rank()
        y_old, miss_old = self.y.copy(), self.y_missing.copy()
        rf_old, rm_old = self.rank_family.copy(), self.rank_member.copy()
        self.family_lost[rf_old[h]] = True

        if n != m and n != h:
            new = self._new_rank(int(rf_old[n]))
            if h == m:
                case = "1a"
            else:
                case = "1b"
                self.y[h], self.y_missing[h] = y_old[m], miss_old[m]
                self.rank_family[h], self.rank_member[h] = rf_old[m], rm_old[m]
            self.y[m], self.y_missing[m] = y_old[n], miss_old[n]
            self.rank_family[m], self.rank_member[m] = new
        else:
            # the Y particle that branches is the partner of n within {m, h}
            y_brancher = m if n == h else h
            self.rank_family[h], self.rank_member[h] = self._new_rank(int(rf_old[y_brancher]))
            if n == h and n != m:
                case = "2a"
                self.y[h], self.y_missing[h] = y_old[m], miss_old[m]
            elif n == m and n != h:
                case = "2b"
            else:
                case = "2c"

        self.x[m] = self.x[n]
        self.x_family[m], self.x_member[m] = newborn
        self.check()
        return case

    def full_families(self) -> np.ndarray:
        """Labels of real Y particles whose family has not lost any member."""
        f = self.rank_family
        return np.flatnonzero(~self.y_missing & ~self.family_lost[f])


@dataclass
class CoupledRun:
    delta: float
    lower: BarrierRun
    mid: BarrierRun
    upper: BarrierRun
    violations: int
    cases: Counter


def tail_count_violations(lower: ParticleSet, mid: ParticleSet, upper: ParticleSet) -> int:
    """Number of points a (from the union of the sets) where the tail order fails."""
    a = np.unique(np.concatenate([lower.positions, mid.positions, upper.positions]))
    cl, cm, cu = (s.count_at_or_above(a) for s in (lower, mid, upper))
    return int(np.count_nonzero((cl > cm) | (cm > cu)))


def _forest_from_arrays(x_start, root, member, parent, birth, pos_end, delta, seed):
    fams = []
    for i in range(x_start.size):
        idx = np.flatnonzero(root == i)
        idx = idx[np.argsort(member[idx])]
        positions = np.column_stack([np.full(idx.size, x_start[i]), pos_end[idx]])
        fams.append(Family(birth[idx], parent[idx], positions))
    return BbmForest(x_start.copy(), delta, delta, seed, fams)


def coupled_triple(x0, delta: float, k_max: int, seed=0) -> CoupledRun:
    """Lower barrier, N-BBM and upper barrier on one probability space.

    Inside each step the full BBM grown from the current N-BBM particles is
    simulated event by event.  Branchings of N-BBM particles drive the
    X/Y case table; the lower barrier at the end of the step is the set of Y
    families that lost no member.  The upper barrier is the post-selection of
    the same BBM re-rooted at the previous upper barrier.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    if n == 0:
        raise ValueError("need at least one particle")
    rng = make_rng(seed)
    start = ParticleSet.from_positions(x0)
    lower, mid, upper = (BarrierRun(delta, [start]) for _ in range(3))
    cases: Counter = Counter()
    violations = 0
    x = x0.copy()

    for k in range(k_max):
        state = CoupledState.pair(x, lower.sets[-1].positions)
        x_start = x.copy()
        # full BBM rooted at the N-BBM particles; labels index the roots
        zpos = list(x_start)
        zroot = list(range(n))
        zmem = [1] * n
        zparent = [-1] * n
        zbirth = [0.0] * n
        zalive = [True] * n
        counter = [1] * n
        lab2z = np.arange(n)
        z2lab = list(range(n))
        zpos_arr = np.array(zpos)

        t = 0.0
        next_ev = rng.exponential(1.0 / n)
        while next_ev < delta:
            size = zpos_arr.size
            inc = math.sqrt(next_ev - t) * rng.standard_normal(size)
            zpos_arr += inc
            state.x += inc[lab2z]
            state.y += inc[lab2z]
            t = next_ev
            b = int(rng.integers(size))
            f = zroot[b]
            counter[f] += 1
            new = size
            zpos_arr = np.append(zpos_arr, zpos_arr[b])
            zroot.append(f)
            zmem.append(counter[f])
            zparent.append(zmem[b] - 1)
            zbirth.append(t)
            if zalive[b]:
                nlab = z2lab[b]
                m = state.leftmost_x()
                cases[state.branch(nlab, (f, counter[f]))] += 1
                dead = int(lab2z[m])
                zalive[dead] = False
                z2lab[dead] = -1
                zalive.append(True)
                z2lab.append(m)
                lab2z[m] = new
            else:
                zalive.append(False)
                z2lab.append(-1)
            next_ev = t + rng.exponential(1.0 / zpos_arr.size)
        inc = math.sqrt(delta - t) * rng.standard_normal(zpos_arr.size)
        zpos_arr += inc
        state.x += inc[lab2z]
        state.y += inc[lab2z]
        state.check()
        x = state.x.copy()

        root = np.array(zroot)
        mem = np.array(zmem)
        mid.sets.append(ParticleSet(x, root[lab2z], mem[lab2z]))

        keep = state.full_families()
        low = ParticleSet(state.y[keep], state.rank_family[keep], state.rank_member[keep])
        kept_fams = np.unique(state.rank_family[keep])
        lower.sets.append(low)
        lower.cut_points.append(float(state.family_root[kept_fams].min()) if keep.size else math.inf)
        lower.deficits.append(n - len(low))

        forest = _forest_from_arrays(x_start, root, mem, np.array(zparent), np.array(zbirth),
                                     zpos_arr, delta, [*_seed_list(seed), k])
        v0 = np.empty(n)
        v0[np.argsort(x_start, kind="stable")] = upper.sets[-1].positions
        up = post_selection(v0, x_start, forest, n)
        upper.sets.append(up)
        upper.cut_points.append(float(up.positions[0]))
        upper.deficits.append(0)
        mid.cut_points.append(float(x.min()))

    for lo, mi, up in zip(lower.sets, mid.sets, upper.sets):
        violations += tail_count_violations(lo, mi, up)
    return CoupledRun(delta, lower, mid, upper, violations, cases)
