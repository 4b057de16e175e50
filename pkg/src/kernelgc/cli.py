"""Command-line entry point: ``kernelgc {run,simulate,score,export}``.

Exit status is 0 on success, 1 for invalid input and 2 for numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .experiment import METHODS, ExperimentConfig, run_experiment
from .gpsic import GpError
from .graph import export_graph, load_graph
from .kgc import KgcError
from .kpcr import KpcrError
from .simulate import NAMED_SYSTEMS, RANDOM_SYSTEMS, BenchmarkSpec, SimulationDiverged, simulate
from .stats import contemp_metrics, graph_metrics

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2
NUMERICAL_ERRORS = (
    GpError, KgcError, KpcrError, SimulationDiverged, np.linalg.LinAlgError, FloatingPointError,
)


def _lag(value: str):
    if value == "auto":
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"lag must be an integer or 'auto', got {value!r}")


def _param(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key, yaml.safe_load(value)


def cmd_run(args) -> int:
    config = ExperimentConfig.from_file(args.config)
    overrides = {
        "seed": args.seed, "mc_runs": args.mc_runs, "method": args.method,
        "m": args.lag, "out": args.out, "n_jobs": args.n_jobs,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if "method" in overrides and overrides["method"] != config.method:
        # parameters belong to the configured method
        overrides["params"] = {}
    config = dataclasses.replace(config, **overrides)
    report = run_experiment(config)
    summary = {"aggregate": report.aggregate, "contemp_aggregate": report.contemp_aggregate()}
    if report.config.mc_runs == 1:
        summary["graph"] = report.runs[0].graph.to_dict()
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_simulate(args) -> int:
    params = dict(args.param or [])
    spec = BenchmarkSpec(args.system, n=args.n, burn_in=args.burn_in, seed=args.seed,
                         params=params)
    sim = simulate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sim.system.to_csv(out / f"{args.system}.csv")
    export_graph(sim.truth, "json", out / f"{args.system}_truth.json")
    print(json.dumps({"csv": str(out / f"{args.system}.csv"),
                      "truth": str(out / f"{args.system}_truth.json"),
                      "m_true": sim.m_true}))
    return EXIT_OK


def cmd_score(args) -> int:
    est, truth = load_graph(args.estimated), load_graph(args.truth)
    result = {"summary": graph_metrics(est, truth).as_dict()}
    if est.contemporaneous or truth.contemporaneous:
        cm = contemp_metrics(est, truth)
        result.update({k: getattr(cm, k).as_dict() for k in ("lagged", "adjacency", "orientation")})
    text = json.dumps(result, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_export(args) -> int:
    export_graph(load_graph(args.graph), args.format, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kernelgc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a YAML/JSON config")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--mc-runs", type=int)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--lag", type=_lag)
    p.add_argument("--out")
    p.add_argument("--n-jobs", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="write a benchmark as CSV plus truth JSON")
    p.add_argument("system", choices=NAMED_SYSTEMS + RANDOM_SYSTEMS)
    p.add_argument("--n", type=int, default=250)
    p.add_argument("--burn-in", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--param", type=_param, action="append", metavar="KEY=VALUE")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("score", help="compare an estimated graph JSON with a truth JSON")
    p.add_argument("estimated")
    p.add_argument("truth")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("export", help="convert a graph JSON to json, dot or csv")
    p.add_argument("graph")
    p.add_argument("--format", choices=("json", "dot", "csv"), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
