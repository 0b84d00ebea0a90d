"""Command-line front end.

Subcommands:

* ``run <config>``      execute the experiment and write its report
* ``validate <config>`` check the config and schedule without running
* ``compare <config>``  side-by-side solver table on one instance
* ``demo <kind>``       small built-in experiment for one instance family

Exit codes: 0 success, 1 validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigurationError
from .harness import ExperimentConfig, compare_matrix, emit, run_experiment


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        config.base_seed = args.seed
    if args.reps is not None:
        config.replications = args.reps
    if args.iters is not None:
        config.iterations = args.iters
    if args.out is not None:
        config.out_dir = args.out
    if args.format is not None:
        config.out_format = args.format
    if args.jobs is not None:
        config.jobs = args.jobs
    return config


def _add_overrides(parser):
    parser.add_argument("--seed", type=int, help="override the replication base seed")
    parser.add_argument("--reps", type=int, help="override the replication count")
    parser.add_argument("--iters", type=int, help="override the iteration budget")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--format", choices=("csv", "json"), help="override the output format")
    parser.add_argument("--jobs", type=int, help="parallel replication workers")


def _demo_config(kind: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    cfg.instance_kind = kind
    cfg.name = f"demo-{kind}"
    if kind == "quadratic-min":
        cfg.dimension = 8
        cfg.geometry = "euclidean"
        cfg.regime = "det-bounded"
        cfg.instance_constants = {"spec_min": 1.0, "spec_max": 100.0}
        cfg.iterations = 300
        cfg.solvers = ("amp", "mirror-prox")
    elif kind == "bilinear-saddle":
        cfg.dimension = 8
        cfg.geometry = "entropy"
        cfg.regime = "det-bounded"
        cfg.iterations = 300
        cfg.solvers = ("amp",)
    elif kind == "skew-plus-gradient":
        cfg.dimension = 8
        cfg.geometry = "euclidean"
        cfg.regime = "det-unbounded"
        cfg.iterations = 99
        cfg.solvers = ("amp",)
    else:
        raise ConfigurationError(f"no demo for instance kind {kind!r}")
    return cfg


def _print_solver_summary(report):
    for solver, block in report.solvers.items():
        agg = block["aggregate"]
        last = agg[-1]
        line = f"{solver}: final t={last['t']} value={last['mean']:.4e}"
        if last.get("bound") is not None:
            line += f" bound={last['bound']:.4e}"
        if block.get("slope"):
            line += f" slope={block['slope']['slope']:.2f}"
        calls = block["oracle_calls"]
        line += f" (grad calls {calls['grad']}, op calls {calls['op']})"
        print(line)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ampvi",
                                     description="VI solver benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    _add_overrides(p_run)

    p_val = sub.add_parser("validate", help="validate a config without running")
    p_val.add_argument("config")
    _add_overrides(p_val)

    p_cmp = sub.add_parser("compare", help="compare solvers on one instance")
    p_cmp.add_argument("config")
    p_cmp.add_argument("--targets", type=float, nargs="*", default=[],
                       help="accuracies for iteration-count comparison")
    _add_overrides(p_cmp)

    p_demo = sub.add_parser("demo", help="run a small built-in experiment")
    p_demo.add_argument("kind", choices=("quadratic-min", "bilinear-saddle",
                                         "skew-plus-gradient"))
    _add_overrides(p_demo)

    args = parser.parse_args(argv)

    try:
        if args.command == "demo":
            config = _apply_overrides(_demo_config(args.kind), args)
        else:
            config = _apply_overrides(ExperimentConfig.from_file(args.config), args)
        config.validate()
    except (ConfigurationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1

    if args.command == "validate":
        print(f"config ok: {config.name} [{config.instance_kind}, {config.regime}]")
        return 0

    try:
        if args.command == "compare":
            table = compare_matrix([config], list(config.solvers),
                                   targets=args.targets)
            print(json.dumps(table, indent=1, sort_keys=True))
            return 0
        report = run_experiment(config)
        files = emit(report)
        _print_solver_summary(report)
        for path in files:
            print(f"wrote {path}")
        return 0
    except ConfigurationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
