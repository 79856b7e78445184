"""Acceptance suite: one checked-in config per criterion, run through the harness.

Each test prints a single ``criterion k: PASS|FAIL`` line with the measured
values, then asserts the experiment's predicates and its runtime budget.
"""
from __future__ import annotations

import os

import pytest

from nbbm_lab.harness import ExperimentConfig, run_experiment

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")

CRITERIA = [
    (1, "barrier gap shrinks linearly in delta", "c1_gap_rate.json", 120),
    (2, "monotone squeeze of barrier tails", "c2_monotone.json", 120),
    (3, "traveling-wave tail inside the squeeze bracket", "c3_sandwich.json", 120),
    (4, "weighted survival identity for the wave boundary", "c4_hitting.json", 180),
    (5, "hydrodynamic distance decreases in N", "c5_hydro.json", 600),
    (6, "pathwise domination in the coupling", "c6_couple.json", 120),
    (7, "N-BBM speed approaches sqrt(2)", "c7_speed.json", 600),
    (8, "cut and heat operator properties", "c8_operators.json", 60),
    (9, "population mean and family-size law", "c9_population.json", 60),
]


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_short(x)}" for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


@pytest.mark.parametrize("number,title,config,budget", CRITERIA,
                         ids=[f"criterion_{c[0]}" for c in CRITERIA])
def test_criterion(number, title, config, budget, tmp_path, capsys):
    cfg = ExperimentConfig.load(os.path.join(CONFIGS, config))
    cfg.out = str(tmp_path)
    report = run_experiment(cfg)
    ok = report.passed and report.runtime_s <= budget
    details = "; ".join(f"{c.name}={_short(c.value)}" for c in report.criteria)
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {title}  "
              f"({report.runtime_s:.1f}s of {budget}s)  {details}")
    failed = [c.name for c in report.criteria if not c.passed]
    assert not failed, f"failed predicates: {failed}"
    assert report.runtime_s <= budget
