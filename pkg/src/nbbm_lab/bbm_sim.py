"""Exact event-driven branching Brownian motion.

Branching times are exponential and Brownian increments are drawn with the
exact elapsed-time variance, so there is no time-step bias; time enters only
through the record grid.  Every family of the ranked forest draws from its own
Philox stream keyed by ``(seed, family)``, which makes forests reproducible
and lets families be generated in any order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
import numpy as np


def _entropy(seed) -> list[int]:
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [int(s) for s in seed]


def family_rng(seed, family: int) -> np.random.Generator:
    """Counter-based stream for one family, derived from ``(seed, family)``."""
    ss = np.random.SeedSequence(_entropy(seed) + [int(family)])
    return np.random.Generator(np.random.Philox(ss))


def make_rng(seed, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(_entropy(seed) + list(stream)))


# ------------------------------------------------------------------ types


@dataclass(frozen=True, eq=False)
class ParticleSet:
    """Labelled multiset of positions, sorted by (position, family, member)."""

    positions: np.ndarray
    family: np.ndarray
    member: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        fam = np.asarray(self.family, dtype=np.int64)
        mem = np.asarray(self.member, dtype=np.int64)
        if not (pos.shape == fam.shape == mem.shape) or pos.ndim != 1:
            raise ValueError("positions, family and member must be equal-length vectors")
        order = np.lexsort((mem, fam, pos))
        object.__setattr__(self, "positions", pos[order])
        object.__setattr__(self, "family", fam[order])
        object.__setattr__(self, "member", mem[order])

    @classmethod
    def from_positions(cls, x) -> "ParticleSet":
        x = np.asarray(x, dtype=float)
        return cls(x, np.arange(x.size), np.ones(x.size, dtype=np.int64))

    def __len__(self) -> int:
        return self.positions.size

    def count_at_or_above(self, a) -> np.ndarray | int:
        return len(self) - np.searchsorted(self.positions, a, side="left")

    def labels(self) -> set[tuple[int, int]]:
        return set(zip(self.family.tolist(), self.member.tolist()))


def n_rightmost(pos: np.ndarray, fam: np.ndarray, mem: np.ndarray, n: int) -> ParticleSet:
    """Keep the ``n`` largest entries; ties lose by smaller (family, member)."""
    order = np.lexsort((mem, fam, pos))[pos.size - n:]
    return ParticleSet(pos[order], fam[order], mem[order])


@dataclass
class Family:
    birth_time: np.ndarray
    parent: np.ndarray  # index of parent member, -1 for the root
    positions: np.ndarray  # (members, records); pre-birth entries copy the ancestor

    @property
    def size(self) -> int:
        return self.birth_time.size


@dataclass
class BbmForest:
    x0: np.ndarray
    delta_record: float
    horizon: float
    seed: object
    families: list[Family] = field(repr=False)

    @property
    def n_families(self) -> int:
        return len(self.families)

    @property
    def n_records(self) -> int:
        return int(round(self.horizon / self.delta_record)) + 1 if self.horizon > 0 else 1

    @property
    def times(self) -> np.ndarray:
        return self.delta_record * np.arange(self.n_records)

    def record_index(self, t: float) -> int:
        if self.horizon == 0:
            if t != 0:
                raise ValueError(f"time {t} is not on the record grid")
            return 0
        k = t / self.delta_record
        kr = int(round(k))
        if abs(k - kr) > 1e-9 or not 0 <= kr < self.n_records:
            raise ValueError(f"time {t} is not on the record grid")
        return kr

    def particles(self, t: float) -> ParticleSet:
        """Z_t: every member alive at ``t`` with its (family, member) label."""
        k = self.record_index(t)
        t_k = self.times[k]
        pos, fam, mem = [], [], []
        for i, f in enumerate(self.families):
            alive = np.flatnonzero(f.birth_time <= t_k)
            pos.append(f.positions[alive, k])
            fam.append(np.full(alive.size, i))
            mem.append(alive + 1)
        return ParticleSet(np.concatenate(pos), np.concatenate(fam), np.concatenate(mem))


# -------------------------------------------------------------- the forest


def _simulate_family(x: float, horizon: float, dt_rec: float, n_rec: int,
                     rng: np.random.Generator) -> Family:
    pos = np.array([x], dtype=float)
    births = [0.0]
    parents = [-1]
    rec = [pos.copy()]
    t = 0.0
    r = 1
    next_event = rng.exponential(1.0)
    while r < n_rec:
        t_rec = r * dt_rec
        if next_event < t_rec:
            pos += math.sqrt(next_event - t) * rng.standard_normal(pos.size)
            t = next_event
            j = int(rng.integers(pos.size))
            pos = np.append(pos, pos[j])
            births.append(t)
            parents.append(j)
            next_event = t + rng.exponential(1.0 / pos.size)
        else:
            pos += math.sqrt(t_rec - t) * rng.standard_normal(pos.size)
            t = t_rec
            rec.append(pos.copy())
            r += 1
    n = pos.size
    out = np.empty((n, n_rec))
    birth = np.asarray(births)
    for k, snap in enumerate(rec):
        out[: snap.size, k] = snap
    # before birth a member sits on its ancestor's path
    for j in range(1, n):
        early = int(np.searchsorted(dt_rec * np.arange(n_rec), birth[j], side="left"))
        out[j, :early] = out[parents[j], :early]
    return Family(birth, np.asarray(parents), out)


def simulate_forest(x0, horizon: float, delta_record: float, seed=0) -> BbmForest:
    """Ranked BBM forest started from ``x0``, recorded every ``delta_record``."""
    x0 = np.asarray(x0, dtype=float)
    if horizon < 0 or not delta_record > 0:
        raise ValueError("need horizon >= 0 and delta_record > 0")
    n_rec = 1
    if horizon > 0:
        k = horizon / delta_record
        if abs(k - round(k)) > 1e-9:
            raise ValueError("horizon must be a multiple of delta_record")
        n_rec = int(round(k)) + 1
    fams = [_simulate_family(float(x), horizon, delta_record, n_rec, family_rng(seed, i))
            for i, x in enumerate(x0)]
    return BbmForest(x0, delta_record, horizon, seed, fams)


def family_sizes(forest: BbmForest, t: float) -> np.ndarray:
    t_k = forest.times[forest.record_index(t)]
    return np.array([np.count_nonzero(f.birth_time <= t_k) for f in forest.families])


def rank_selected(forest: BbmForest, t: float, n: int | None = None) -> ParticleSet:
    """The ``n`` highest-ranked members alive at ``t``.

    Rank order: families by initial position (ties by family index), then
    members by birth order.
    """
    n = forest.n_families if n is None else n
    z = forest.particles(t)
    root = forest.x0[z.family]
    order = np.lexsort((z.member, z.family, root))[len(z) - n:]
    return ParticleSet(z.positions[order], z.family[order], z.member[order])


def post_selection(v0, x0, forest: BbmForest, n: int | None = None) -> ParticleSet:
    """Translate each family by ``v0 - x0`` and keep the ``n`` rightmost at the horizon."""
    v0 = np.asarray(v0, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if v0.shape != x0.shape or x0.size != forest.n_families:
        raise ValueError("v0, x0 and the forest must have one entry per family")
    if not np.array_equal(x0, forest.x0):
        raise ValueError("x0 does not match the roots of the forest")
    shift = v0 - x0
    if np.any(shift < 0):
        raise ValueError("post-selection needs v0 >= x0 componentwise")
    z = forest.particles(forest.horizon)
    pos = shift[z.family] + z.positions
    n = forest.n_families if n is None else n
    return n_rightmost(pos, z.family, z.member, n)


# ------------------------------------------------------------------ N-BBM


@dataclass
class NbbmRun:
    times: np.ndarray
    leftmost: np.ndarray
    second_gap: np.ndarray  # distance from the leftmost to the second leftmost
    sets: list[ParticleSet] | None = None
    n_events: int = 0


def nbbm(x0, horizon: float, seed=0, record_dt: float | None = None,
         keep_sets: bool = True) -> NbbmRun:
    """N-BBM: at every branching the leftmost particle is removed.

    The removed particle is the smallest (position, family, member) triple,
    so when the leftmost particle itself branches the older copy goes.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    if n == 0:
        raise ValueError("N-BBM needs at least one particle")
    rng = make_rng(seed)
    record_dt = horizon if record_dt is None or horizon == 0 else record_dt
    n_rec = int(round(horizon / record_dt)) + 1 if horizon > 0 else 1
    pos = x0.copy()
    fam = np.arange(n)
    mem = np.ones(n, dtype=np.int64)
    counter = np.ones(n, dtype=np.int64)

    times = record_dt * np.arange(n_rec) if horizon > 0 else np.zeros(1)
    left = np.empty(n_rec)
    gap = np.empty(n_rec)
    sets = [] if keep_sets else None

    def record(r):
        p = np.partition(pos, 1)[:2] if n > 1 else pos
        left[r] = p.min()
        gap[r] = abs(p[1] - p[0]) if n > 1 else np.nan
        if keep_sets:
            sets.append(ParticleSet(pos.copy(), fam.copy(), mem.copy()))

    record(0)
    t = 0.0
    r = 1
    events = 0
    next_event = rng.exponential(1.0 / n)
    while r < n_rec:
        t_rec = times[r]
        if next_event < t_rec:
            pos += math.sqrt(next_event - t) * rng.standard_normal(n)
            t = next_event
            b = int(rng.integers(n))
            m = int(np.argmin(pos))
            tied = np.flatnonzero(pos == pos[m])
            if tied.size > 1:
                m = int(tied[np.lexsort((mem[tied], fam[tied]))[0]])
            f = fam[b]
            counter[f] += 1
            pos[m] = pos[b]
            fam[m] = f
            mem[m] = counter[f]
            events += 1
            next_event = t + rng.exponential(1.0 / n)
        else:
            pos += math.sqrt(t_rec - t) * rng.standard_normal(n)
            t = t_rec
            record(r)
            r += 1
    return NbbmRun(times, left, gap, sets, events)


def yule_pmf(k, t: float) -> np.ndarray:
    """P(N_t = k) for a rate-1 Yule process started from one individual."""
    k = np.asarray(k)
    p = math.exp(-t)
    return np.where(k >= 1, p * (1.0 - p) ** (k - 1.0), 0.0)
