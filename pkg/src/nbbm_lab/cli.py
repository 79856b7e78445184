"""Command line entry point: ``nbbm-lab <subcommand> --config FILE [--seed S] [--out DIR]``.

Each subcommand runs one experiment kind.  Values from the config file can be
overridden on the command line; ``run`` takes the kind from the config.
Exit status is 0 when every criterion of the experiment passes, 1 otherwise
and 2 on a bad config.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .harness import KINDS, ExperimentConfig, run_experiment


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _density_arg(text: str) -> dict:
    if os.path.exists(text):
        if text.endswith(".csv"):
            return {"kind": "csv", "path": text}
        with open(text) as fh:
            return json.load(fh)
    return json.loads(text)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--density", type=_density_arg,
                        help="density spec as JSON text, a .json file or a two-column .csv")
    common.add_argument("--N", type=int, nargs="+", help="population sizes")
    common.add_argument("--delta", type=float, nargs="+", help="barrier / record steps")
    common.add_argument("--t", type=float, help="time horizon")
    common.add_argument("--tolerance", type=float)
    common.add_argument("--replicas", type=int)
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        help="experiment parameter, e.g. --set k=8 --set side=-")
    common.add_argument("--quiet", action="store_true", help="do not print the summary")

    p = argparse.ArgumentParser(prog="nbbm-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the experiment named in --config")
    for kind in KINDS:
        sub.add_parser(kind, parents=[common], help=f"run a {kind} experiment")
    return p


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    d: dict = {}
    if args.config:
        with open(args.config) as fh:
            d = json.load(fh)
    if args.command == "run":
        if "kind" not in d:
            raise ValueError("`run` needs a config with a kind")
    elif d.get("kind", args.command) != args.command:
        raise ValueError(f"config is for {d['kind']!r}, not {args.command!r}")
    else:
        d["kind"] = args.command
    for key in ("seed", "out", "density", "N", "delta", "t", "tolerance", "replicas"):
        v = getattr(args, key)
        if v is not None:
            d[key] = v
    params = dict(d.get("params", {}))
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        params[key] = _value(val)
    if params:
        d["params"] = params
    d.setdefault("out", os.path.join("out", d["kind"]))
    return ExperimentConfig.from_dict(d)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = build_config(args)
    except (ValueError, OSError) as exc:
        print(f"nbbm-lab: {exc}", file=sys.stderr)
        return 2
    report = run_experiment(cfg)
    if not args.quiet:
        for c in report.criteria:
            mark = "PASS" if c.passed else ("SOFT" if c.soft else "FAIL")
            print(f"{mark}  {c.name}: {c.value}")
        print(f"tables and summary.json in {report.out}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
