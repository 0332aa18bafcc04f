"""Command-line front end.

``opecs run --config FILE [key=value ...]`` executes a config file with
overrides; each experiment also has a direct subcommand whose flags mirror the
config keys. Exit codes: 0 success, 2 bad configuration, 3 bad logged data,
4 infeasible moment targets, 1 anything unexpected.
"""
from __future__ import annotations

import argparse
import sys

from .environments import InfeasibleMoments
from .experiments import (
    EXPERIMENTS,
    ConfigError,
    DataError,
    ExperimentConfig,
    load_config,
    run_experiment,
)

_FLAG_HELP = {
    "alpha": "error budget for the confidence sequence",
    "w_max": "certified upper bound on importance weights",
    "seed": "master seed; stream seeds derive from it",
    "n": "samples per stream",
    "n_envs": "environments in the coverage suite",
    "n_seeds": "independent streams per setting",
    "methods": "comma-separated method ids",
    "out": "directory for CSV artifacts",
    "stride": "trace and checkpoint spacing, 0 = n/20",
    "eps": "grid resolution for the grid method",
    "input": "logged-data JSONL path (ci)",
    "delta": "true policy-value difference (gated)",
    "rho": "reward-model alignment in [-1, 1] (predictor)",
    "p_target": "behavior probability of the target action",
    "budget_s": "per-method time cap in seconds, 0 = none (timing)",
    "workers": "process count, 0 = OPECS_WORKERS or 1",
}

_FLAG_TYPES = {
    "alpha": float, "w_max": float, "seed": int, "n": int, "n_envs": int,
    "n_seeds": int, "methods": str, "out": str, "stride": int, "eps": float,
    "input": str, "delta": float, "rho": float, "p_target": float,
    "budget_s": float, "workers": int,
}


def _experiment_parser(sub, name: str) -> argparse.ArgumentParser:
    p = sub.add_parser(name, help=f"run the {name} experiment")
    for key, typ in _FLAG_TYPES.items():
        p.add_argument(f"--{key}", type=typ, default=None, help=_FLAG_HELP[key])
    p.set_defaults(experiment=name)
    return p


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig(experiment=args.experiment)
    for key in _FLAG_TYPES:
        val = getattr(args, key, None)
        if val is None:
            continue
        if key == "methods":
            val = tuple(m.strip() for m in val.split(",") if m.strip())
        setattr(cfg, key, val)
    cfg.validate()
    return cfg


def _config_from_run(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, _, raw = item.partition("=")
        overrides[key.strip()] = raw.strip()
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opecs",
        description="Anytime-valid off-policy confidence sequences.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a config file with overrides")
    p_run.add_argument("--config", required=True, help="flat key = value file")
    p_run.add_argument(
        "overrides", nargs="*", metavar="key=value",
        help="config keys to override")
    p_run.set_defaults(experiment=None)
    for name in EXPERIMENTS:
        _experiment_parser(sub, name)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _config_from_run(args)
        else:
            cfg = _config_from_args(args)
        report = run_experiment(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except InfeasibleMoments as e:
        print(f"infeasible environment: {e}", file=sys.stderr)
        return 4
    except Exception as e:  # noqa: BLE001
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(report.render())
    return 0


if __name__ == "__main__":
    sys.exit(main())
