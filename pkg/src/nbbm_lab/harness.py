"""Experiment configuration, orchestration and reports.

An experiment is described by a JSON config (see ``config_schema.json``),
run by :func:`run_experiment`, and leaves CSV tables plus ``summary.json`` in
the output directory.  Every random stream is derived from the master seed,
so a config and seed determine all tables bit for bit.
"""
from __future__ import annotations

import csv
import json
import math
import os
import platform
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Any, Callable

import numpy as np

from . import barriers_macro as bm
from . import barriers_micro as bmi
from . import bbm_sim as sim
from . import density as dn
from . import fbp

SCHEMA_VERSION = 1
KINDS = ("wave", "squeeze", "barriers", "hydro", "couple", "speed", "hitting", "operators",
         "population", "simulate")


@dataclass
class ExperimentConfig:
    kind: str
    density: dict | None = None
    N: list[int] = field(default_factory=list)
    delta: list[float] = field(default_factory=list)
    t: float | None = None
    tolerance: float | None = None
    replicas: int = 1
    seed: int = 0
    out: str = "out"
    params: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        validate_config(d)
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def seeds(self, count: int, stream: int = 0) -> list[int]:
        """``count`` child seeds, independent of scheduling order."""
        ss = np.random.SeedSequence([self.seed, stream])
        return [int(s) for s in ss.generate_state(count, dtype=np.uint32)]


def _schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("config_schema.json").read_text())


def validate_config(d: dict) -> None:
    import jsonschema

    try:
        jsonschema.validate(d, _schema())
    except jsonschema.ValidationError as exc:
        raise ValueError(f"invalid experiment config: {exc.message}") from None


@dataclass
class Criterion:
    name: str
    passed: bool
    value: Any
    threshold: Any
    soft: bool = False


@dataclass
class Report:
    kind: str
    out: str
    tables: dict[str, str]
    criteria: list[Criterion]
    runtime_s: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def summary(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "passed": self.passed,
            "criteria": [asdict(c) for c in self.criteria],
            "tables": self.tables,
            "runtime": {"seconds": round(self.runtime_s, 3), "python": platform.python_version(),
                        "numpy": np.__version__},
        }


# ------------------------------------------------------------------ tables


class _Tables:
    def __init__(self, out: str):
        self.out = out
        self.paths: dict[str, str] = {}
        os.makedirs(out, exist_ok=True)

    def write(self, name: str, header: list[str], rows) -> None:
        path = os.path.join(self.out, f"{name}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.paths[name] = os.path.basename(path)

    def density(self, name: str, obj) -> None:
        path = os.path.join(self.out, f"{name}.csv")
        dn.write_csv(path, obj)
        self.paths[name] = os.path.basename(path)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _density(cfg: ExperimentConfig) -> dn.DensityGrid:
    return dn.make_density(cfg.density or {"kind": "traveling_wave"})


def _one(xs, name):
    if not xs:
        raise ValueError(f"config needs a value for {name}")
    return xs[0]


# ------------------------------------------------------------- experiments


def _exp_wave(cfg, tables):
    alpha = float(cfg.params.get("alpha", fbp.SQRT2))
    dx = float(cfg.params.get("dx", 1e-3))
    w = fbp.traveling_wave(alpha, dx=dx)
    tables.density("wave", w.density)
    res = fbp.wave_residual(w)
    scale = float(w.density.values.max())
    d0 = fbp.right_derivative_at_zero(w)
    return [
        Criterion("ode_residual", res <= 10 * dx**2 * scale, res, 10 * dx**2 * scale),
        Criterion("flux_w'(0+)=2", abs(d0 - 2) <= 10 * dx, d0, [2 - 10 * dx, 2 + 10 * dx]),
        Criterion("unit_mass", abs(w.density.mass - 1) <= 1e-8, w.density.mass, 1e-8),
        Criterion("w(0)=0", float(w(0.0)) == 0.0, float(w(0.0)), 0.0),
    ]


def _exp_barriers(cfg, tables):
    u = _density(cfg)
    delta = float(_one(cfg.delta, "delta"))
    k = int(cfg.params.get("k", round((cfg.t or delta) / delta)))
    side = cfg.params.get("side", "+")
    u = bm.on_barrier_grid(u, delta)
    traj = bm.evolve(u, delta, k, side)
    rows = []
    for i, s in enumerate(traj.snapshots):
        rows.extend((i, i * delta, x, v) for x, v in zip(s.edges[:-1], s.values))
    tables.write("snapshots", ["k", "t", "x", "value"], rows)
    tables.write("cut_points", ["k", "t", "cut_point"],
                 [(i + 1, (i + 1) * delta, q) for i, q in enumerate(traj.cut_points)])
    masses = [s.mass for s in traj.snapshots]
    worst = max(abs(m - 1) for m in masses)
    return [Criterion("unit_mass", worst <= 1e-10, worst, 1e-10)]


def _exp_squeeze(cfg, tables):
    u = _density(cfg)
    t = float(cfg.t)
    check = cfg.params.get("check", "converge")
    if check == "converge":
        res = bm.squeeze(u, t, float(cfg.tolerance), int(cfg.params.get("n_max", 8)),
                         int(cfg.params.get("n_min", 1)))
        _squeeze_tables(tables, res)
        monotone = all(b[1] <= a[1] * (1 + 1e-9) for a, b in zip(res.history, res.history[1:]))
        return [Criterion("converged", res.converged, res.gap_l1, cfg.tolerance, soft=True),
                Criterion("gap_nonincreasing", monotone, [g for _, g in res.history], None)]
    if check == "gap_rate":
        levels = cfg.params.get("levels") or [int(round(math.log2(t / d))) for d in cfg.delta]
        rows, gaps = [], []
        base = bm.on_barrier_grid(u, t / 2 ** max(levels))
        for n in levels:
            lo, hi = bm.barrier_pair(base, t, n)
            g = dn.l1_distance(lo, hi)
            gaps.append(g)
            rows.append((n, t / 2**n, g))
        ratios = [b / a for a, b in zip(gaps, gaps[1:])]
        lo_r, hi_r = cfg.params.get("ratio_range", [0.3, 0.7])
        tables.write("gap_vs_delta", ["n", "delta", "gap_l1"], rows)
        return [Criterion("gap_ratio_in_range", all(lo_r <= r <= hi_r for r in ratios), ratios,
                          [lo_r, hi_r])]
    if check == "monotone":
        levels = cfg.params.get("levels", [2, 3, 4, 5, 6, 7])
        tol = float(cfg.tolerance if cfg.tolerance is not None else 1e-8)
        base = bm.on_barrier_grid(u, t / 2 ** max(levels))
        pairs = [bm.barrier_pair(base, t, n) for n in levels]
        worst_lo = worst_hi = -math.inf
        for (lo_a, hi_a), (lo_b, hi_b) in zip(pairs, pairs[1:]):
            worst_lo = max(worst_lo, float(np.max(dn.tail_gap(lo_a, lo_b))))
            worst_hi = max(worst_hi, float(np.max(dn.tail_gap(hi_b, hi_a))))
        tables.write("monotonicity", ["side", "max_violation"],
                     [("lower", worst_lo), ("upper", worst_hi)])
        return [Criterion("lower_tails_nondecreasing", worst_lo <= tol, worst_lo, tol),
                Criterion("upper_tails_nonincreasing", worst_hi <= tol, worst_hi, tol)]
    if check == "sandwich":
        n = int(cfg.params.get("level", 6))
        alpha = float(cfg.params.get("alpha", fbp.SQRT2))
        res = bm.squeeze_level(u, t, n)
        _squeeze_tables(tables, res)
        e = np.union1d(res.lower.edges, res.upper.edges)
        exact = fbp.wave_tail(alpha, e - alpha * t)
        tie = float(cfg.params.get("tie_tolerance", 1e-8))
        below = float(np.max(res.lower(e) - exact))
        above = float(np.max(exact - res.upper(e)))
        width = res.width()
        w_max = float(cfg.tolerance if cfg.tolerance is not None else 5e-3)
        return [Criterion("lower_below_exact", below <= tie, below, tie),
                Criterion("exact_below_upper", above <= tie, above, tie),
                Criterion("bracket_width", width <= w_max, width, w_max)]
    raise ValueError(f"unknown squeeze check {check!r}")


def _squeeze_tables(tables, res):
    tables.write("tail_lower", ["x", "value"], zip(res.lower.edges, res.lower.values))
    tables.write("tail_upper", ["x", "value"], zip(res.upper.edges, res.upper.values))
    tables.write("squeeze_levels", ["n", "gap_l1"], res.history)


def bracket_distance(points, lower, upper, n: int | None = None) -> float:
    """sup_a distance from the empirical tail of ``points`` to [lower(a), upper(a)].

    The empirical tail is |{x >= a}|/n.  Between consecutive particles it is
    constant while both envelopes decrease, so the supremum is attained at
    the particle positions (from the left or the right).
    """
    x = np.sort(np.asarray(points, dtype=float))
    n = x.size if n is None else n
    k = x.size
    above_left = (k - np.arange(k)) / n  # tail at a = x_i
    above_right = (k - np.arange(1, k + 1)) / n  # tail just right of x_i
    lo = lower(x)
    hi = upper(x)
    d = max(np.max(above_left - hi, initial=0.0), np.max(lo - above_right, initial=0.0))
    return float(d)


def _map(fn, items, workers: int = 1) -> list:
    """Ordered map, optionally over a bounded process pool.

    Every item carries its own seed, so results do not depend on scheduling.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _hydro_replica(args) -> float:
    s, n, t, rho, lower, upper = args
    x0 = dn.sample(rho, n, sim.make_rng(s, 0))
    run = sim.nbbm(x0, t, seed=[s, 1], record_dt=t)
    return bracket_distance(run.sets[-1].positions, lower, upper)


def hydro_distance(n: int, t: float, delta: float, replicas: int, seed, rho: dn.DensityGrid,
                   bracket: bm.SqueezeResult | None, workers: int = 1
                   ) -> tuple[float, list[float]]:
    """Mean over replicas of the sup distance from N-BBM's empirical tail to the bracket."""
    if bracket is None:
        raise ValueError("hydro_distance needs the squeeze bracket for (rho, t)")
    if abs(bracket.t - t) > 1e-12:
        raise ValueError(f"bracket is for t={bracket.t}, not t={t}")
    seeds = np.random.SeedSequence([int(s) for s in np.atleast_1d(seed)] + [n]).generate_state(
        replicas, dtype=np.uint32)
    jobs = [(int(s), n, t, rho, bracket.lower, bracket.upper) for s in seeds]
    stats = _map(_hydro_replica, jobs, workers)
    return float(np.mean(stats)), stats


def _exp_hydro(cfg, tables):
    rho = _density(cfg)
    t = float(cfg.t)
    delta = float(_one(cfg.delta, "delta"))
    level = int(round(math.log2(t / delta)))
    bracket = bm.squeeze_level(rho, t, level)
    _squeeze_tables(tables, bracket)
    rows, means = [], []
    for n in cfg.N:
        mean, stats = hydro_distance(n, t, delta, cfg.replicas, cfg.seed, rho, bracket,
                                     workers=int(cfg.params.get("workers", 1)))
        means.append(mean)
        rows.extend((n, i, s) for i, s in enumerate(stats))
    tables.write("hydro_distance", ["N", "replica", "sup_distance"], rows)
    tol = float(cfg.tolerance if cfg.tolerance is not None else 0.05)
    decreasing = all(b < a for a, b in zip(means, means[1:]))
    return [Criterion("decreasing_in_N", decreasing, dict(zip(cfg.N, means)), None),
            Criterion("largest_N_within_tol", means[-1] <= tol, means[-1], tol)]


def _exp_couple(cfg, tables):
    n = int(_one(cfg.N, "N"))
    delta = float(_one(cfg.delta, "delta"))
    k_max = int(cfg.params.get("k_max", 10))
    rho = _density(cfg)
    jobs = [(s, n, delta, k_max, rho) for s in cfg.seeds(cfg.replicas)]
    runs = _map(_couple_replica, jobs, int(cfg.params.get("workers", 1)))
    rows, total, cases = [], 0, Counter()
    for r, run in enumerate(runs):
        total += run.violations
        cases += run.cases
        for k, (lo, mi, up) in enumerate(zip(run.lower.sets, run.mid.sets, run.upper.sets)):
            a = np.unique(np.concatenate([lo.positions, mi.positions, up.positions]))
            cl, cm, cu = (p.count_at_or_above(a) for p in (lo, mi, up))
            rows.extend(zip([r] * a.size, [k] * a.size, a, cl, cm, cu))
    tables.write("tail_counts", ["replica", "k", "a", "lower", "nbbm", "upper"], rows)
    tables.write("cases", ["case", "count"], sorted(cases.items()))
    return [Criterion("zero_violations", total == 0, total, 0)]


def _couple_replica(args) -> bmi.CoupledRun:
    s, n, delta, k_max, rho = args
    x0 = dn.sample(rho, n, sim.make_rng(s, 0))
    return bmi.coupled_triple(x0, delta, k_max, seed=[s, 1])


def _speed_replica(args) -> tuple[float, float]:
    n, s, horizon, burn = args
    run = fbp.leftmost_series(n, horizon, seed=[s, n])
    sel = run.times >= burn
    slope = float(np.polyfit(run.times[sel], run.leftmost[sel], 1)[0])
    bound = (n - 1) * float(run.second_gap[sel].mean()) if n > 1 else math.nan
    return slope, bound


def _exp_speed(cfg, tables):
    horizon = float(cfg.params.get("horizon", 50.0))
    burn = float(cfg.params.get("burn_in", 10.0))
    seeds = cfg.seeds(cfg.replicas)
    jobs = [(n, s, horizon, burn) for n in cfg.N for s in seeds]
    out = _map(_speed_replica, jobs, int(cfg.params.get("workers", 1)))
    rows = [(n, s, slope, bound) for (n, s, _, _), (slope, bound) in zip(jobs, out)]
    means = {n: float(np.mean([r[2] for r in rows if r[0] == n])) for n in cfg.N}
    tables.write("speed", ["N", "seed", "slope", "gap_jump_bound"], rows)
    band = float(cfg.tolerance if cfg.tolerance is not None else 0.15)
    big = [n for n in cfg.N if n > 1]
    crit = [Criterion("increasing_in_N", all(means[b] > means[a] for a, b in zip(big, big[1:])),
                      {n: means[n] for n in big}, None)]
    if big:
        top = means[big[-1]]
        crit.append(Criterion(f"speed_N{big[-1]}_near_sqrt2", abs(top - fbp.SQRT2) <= band, top,
                              [fbp.SQRT2 - band, fbp.SQRT2 + band]))
    if 1 in means:
        crit.append(Criterion("speed_N1_near_0", abs(means[1]) <= 0.1, means[1], [-0.1, 0.1]))
    return crit


def _exp_hitting(cfg, tables):
    rho = _density(cfg)
    alpha = float(cfg.params.get("alpha", fbp.SQRT2))
    t_max = float(cfg.t if cfg.t is not None else 2.0)
    h = float(cfg.params.get("h", 1e-4))
    n_paths = int(cfg.params.get("n_paths", 100_000))
    curve = fbp.hitting_survival(rho, fbp.BoundaryCurve.linear(alpha, t_max), t_max, n_paths, h,
                                 seed=cfg.seed, report_every=int(cfg.params.get("report_every", 100)))
    tables.write("survival", ["t", "estimate", "stderr"],
                 zip(curve.t, curve.estimate, curve.stderr))
    dev = np.abs(curve.estimate - 1.0)
    ok = bool(np.all(dev <= 3 * curve.stderr + 1e-12))
    z = dev[curve.stderr > 0] / curve.stderr[curve.stderr > 0]
    return [Criterion("within_3_stderr", ok, {"sup_dev": float(dev.max()),
                                             "max_z": float(z.max())}, 3.0)]


def _exp_simulate(cfg, tables):
    rho = _density(cfg)
    n = int(_one(cfg.N, "N"))
    horizon = float(cfg.t if cfg.t is not None else 1.0)
    dt = float(_one(cfg.delta, "delta") if cfg.delta else horizon)
    x0 = dn.sample(rho, n, sim.make_rng(cfg.seed, 0))
    forest = sim.simulate_forest(x0, horizon, dt, seed=[cfg.seed, 1])
    write_forest(os.path.join(tables.out, "forest.csv"), forest)
    tables.paths["forest"] = "forest.csv"
    sizes = sim.family_sizes(forest, forest.times[-1])
    return [Criterion("population", True, int(sizes.sum()), None)]


def write_forest(path, forest: sim.BbmForest) -> None:
    """One row per member per record time: family, member, parent, birth, t, x."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "member", "parent", "birth_time", "t", "position"])
        for i, f in enumerate(forest.families):
            for j in range(f.size):
                for k, tk in enumerate(forest.times):
                    w.writerow([i, j + 1, int(f.parent[j]) + 1, repr(float(f.birth_time[j])),
                                repr(float(tk)), repr(float(f.positions[j, k]))])


def _exp_operators(cfg, tables):
    from .properties import run_operator_suite

    results = run_operator_suite(cases=cfg.replicas, seed=cfg.seed)
    tables.write("operator_properties", ["property", "cases", "failures", "worst"],
                 [(k, v["cases"], v["failures"], v["worst"]) for k, v in results.items()])
    return [Criterion(f"prop_{k}", v["failures"] == 0, v["worst"], v["tol"])
            for k, v in results.items()]


def _exp_population(cfg, tables):
    t = float(cfg.t if cfg.t is not None else 1.0)
    # independent single-root replicas are the families of one forest
    forest = sim.simulate_forest(np.zeros(cfg.replicas), t, t, seed=[cfg.seed, 0])
    totals = sim.family_sizes(forest, t).astype(float)
    expected = math.exp(t)
    se = totals.std(ddof=1) / math.sqrt(totals.size)
    delta = float(_one(cfg.delta, "delta") if cfg.delta else 0.1)
    n_samples = int(cfg.params.get("family_samples", 100_000))
    small = sim.simulate_forest(np.zeros(n_samples), delta, delta, seed=[cfg.seed, 1])
    p_value, table = yule_chisquare(sim.family_sizes(small, delta), delta)
    tables.write("population", ["replica", "total"], enumerate(totals.astype(int)))
    tables.write("family_size_counts", ["size", "observed", "expected"], table)
    return [Criterion("mean_population_e^t", abs(totals.mean() - expected) <= 3 * se,
                      float(totals.mean()), [expected - 3 * se, expected + 3 * se]),
            Criterion("yule_chisquare_p", p_value > 0.01, p_value, 0.01)]


def yule_chisquare(sizes, t: float, min_expected: float = 5.0):
    """Chi-square p-value of observed family sizes against the Yule pmf.

    Sizes are binned from 1 upwards; the last bin collects the tail once the
    expected count would drop below ``min_expected``.
    """
    from scipy.stats import chisquare

    sizes = np.asarray(sizes)
    n = sizes.size
    k_last = 1
    while n * (1 - math.exp(-t)) ** k_last > min_expected:
        k_last += 1
    ks = np.arange(1, k_last + 1)
    pmf = sim.yule_pmf(ks, t)
    exp_counts = n * pmf
    exp_counts[-1] = n * (1 - math.exp(-t)) ** (k_last - 1)  # P(N >= k_last)
    obs = np.array([np.count_nonzero(sizes == k) for k in ks[:-1]]
                   + [np.count_nonzero(sizes >= k_last)])
    p = float(chisquare(obs, exp_counts).pvalue) if ks.size > 1 else 1.0
    return p, list(zip(ks, obs, exp_counts))


_EXPERIMENTS: dict[str, Callable] = {
    "wave": _exp_wave,
    "barriers": _exp_barriers,
    "squeeze": _exp_squeeze,
    "hydro": _exp_hydro,
    "couple": _exp_couple,
    "speed": _exp_speed,
    "hitting": _exp_hitting,
    "operators": _exp_operators,
    "population": _exp_population,
    "simulate": _exp_simulate,
}


def run_experiment(config: ExperimentConfig | dict) -> Report:
    """Run one experiment, write its tables and ``summary.json``."""
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    try:
        fn = _EXPERIMENTS[config.kind]
    except KeyError:
        raise ValueError(f"unknown experiment kind {config.kind!r}") from None
    tables = _Tables(config.out)
    t0 = time.perf_counter()
    criteria = fn(config, tables)
    report = Report(config.kind, config.out, tables.paths, criteria, time.perf_counter() - t0)
    with open(os.path.join(config.out, "summary.json"), "w") as fh:
        json.dump(report.summary(), fh, indent=2, default=_json_default)
    return report


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)
