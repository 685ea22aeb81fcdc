"""Command-line entry point.

Subcommands: bounds, estimate, experiment <name>, validate-config. Exit
codes: 0 success, 2 usage or configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from ..errors import ConfigError, GeometryError, NonIdentifiableError
from .config import EXPERIMENT_NAMES, load_config, merge_config, \
    validate_config
from .experiments import EXPERIMENT_RUNNERS, compute_bounds, \
    run_single_estimate

_USAGE_EXIT = 2
_RUNTIME_EXIT = 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snaploc",
        description="Single-snapshot 6D localization: bounds, estimators, "
                    "and Monte Carlo experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_out=True):
        p.add_argument("--config", metavar="PATH",
                       help="JSON config file; defaults fill missing fields")
        p.add_argument("--seed", type=int, metavar="U64",
                       help="override experiment.seed")
        p.add_argument("--threads", type=int, metavar="N",
                       help="override experiment.threads")
        if with_out:
            p.add_argument("--out", metavar="DIR",
                           help="directory for CSV and manifest output")

    bounds = sub.add_parser("bounds",
                            help="print error bounds for the configured "
                                 "scene")
    add_common(bounds)

    estimate = sub.add_parser("estimate",
                              help="run one synthetic trial and print both "
                                   "estimates")
    add_common(estimate)

    experiment = sub.add_parser("experiment", help="run a named experiment "
                                                   "and write CSV output")
    experiment.add_argument("name", nargs="?", choices=EXPERIMENT_NAMES,
                            help="experiment to run")
    experiment.add_argument("--experiment", dest="experiment_flag",
                            choices=EXPERIMENT_NAMES, metavar="NAME",
                            help="alternative to the positional name")
    add_common(experiment)

    validate = sub.add_parser("validate-config",
                              help="check a config file against the schema")
    validate.add_argument("--config", metavar="PATH", required=True)
    return parser


def _overrides(args) -> dict:
    exp = {}
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        exp["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        exp["threads"] = args.threads
    name = getattr(args, "experiment_name", None)
    if name is not None:
        exp["name"] = name
    return {"experiment": exp} if exp else {}


def _cmd_bounds(args) -> int:
    scenario = load_config(args.config, _overrides(args))
    report = compute_bounds(scenario)
    print(f"oeb {report.oeb!r}")
    print(f"peb {report.peb!r} m")
    print(f"ipeb {report.ipeb!r} m")
    print(f"seb {report.seb!r} s")
    return 0


def _cmd_estimate(args) -> int:
    scenario = load_config(args.config, _overrides(args))
    metrics, detail = run_single_estimate(scenario)
    adhoc = detail.get("adhoc")
    refined = detail.get("ml")
    if adhoc is not None:
        print("adhoc p_ue_hat", np.array2string(adhoc.p_ue_hat))
        print("adhoc b_hat", repr(adhoc.b_hat), "s")
    if refined is not None:
        print("ml p_ue_hat", np.array2string(refined.p_ue_hat))
        print("ml b_hat", repr(refined.b_hat), "s")
        print("ml iterations", refined.iterations,
              "converged", refined.converged)
    for name in ("peb", "oeb", "adhoc_pos_error", "adhoc_rot_error",
                 "ml_pos_error", "ml_rot_error"):
        print(name, repr(metrics[name]))
    if adhoc is None:
        print("estimation failed on this draw", file=sys.stderr)
        return _RUNTIME_EXIT
    return 0


def _cmd_experiment(args) -> int:
    name = args.name or args.experiment_flag
    if name is None:
        print("experiment: missing name (positional or --experiment)",
              file=sys.stderr)
        return _USAGE_EXIT
    if args.name and args.experiment_flag and \
            args.name != args.experiment_flag:
        print("experiment: positional name and --experiment disagree",
              file=sys.stderr)
        return _USAGE_EXIT
    args.experiment_name = name
    scenario = load_config(args.config, _overrides(args))
    result = EXPERIMENT_RUNNERS[name](scenario)
    out_dir = args.out or "."
    csv_path, manifest_path = result.write(out_dir)
    print(csv_path)
    print(manifest_path)
    return 0


def _cmd_validate(args) -> int:
    import json

    try:
        with open(args.config, "r", encoding="utf-8") as handle:
            user = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {args.config} is not valid JSON: "
                          f"{exc}") from exc
    merged = merge_config(user)
    validate_config(merged)
    from .config import scenario_from_dict

    scenario_from_dict(merged)
    print("config ok")
    return 0


_COMMANDS = {
    "bounds": _cmd_bounds,
    "estimate": _cmd_estimate,
    "experiment": _cmd_experiment,
    "validate-config": _cmd_validate,
}


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else _USAGE_EXIT
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _USAGE_EXIT
    except (GeometryError, NonIdentifiableError,
            np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return _RUNTIME_EXIT


def main(argv=None) -> int:
    return cli_main(argv)
