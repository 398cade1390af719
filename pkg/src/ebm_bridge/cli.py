"""Command-line harness.

Exit codes: 0 success, 2 usage error, 3 computation failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .errors import EstimationError
from .estimators import (
    FixedPointConfig,
    MultiSampleSet,
    geometric_mean_estimator,
    mis_estimator,
    multi_proposal_bridge,
    optimal_bridge,
    optimal_umbrella,
    quadratic_score_iteration,
    reverse_is,
    self_is_with_mix,
    standard_is,
)
from .experiments import (
    THETA_COSTS,
    Z_ESTIMATORS,
    ExperimentSpec,
    UsageError,
    default_theta_spec,
    default_z_spec,
    emit_csv,
    run_theta_sweep,
    run_z_sweep,
)
from .model import SampleSet, gaussian_model, gaussian_proposal, read_sample_csv

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 2, 3

CONFIG_KEYS = {
    "sigma_grid",
    "splits",
    "estimators",
    "costs",
    "methods",
    "scenario",
    "replications",
    "T",
    "root_seed",
    "seed",
    "theta_tr",
    "mu_p",
    "chunk_size",
    "almost_ideal_factor",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def load_config(path):
    """Read a flat JSON object of sweep settings."""
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def build_spec(kind, cfg: dict, args) -> ExperimentSpec:
    """Config-file keys, then command-line overrides, on top of the defaults."""
    values = dict(cfg)
    for alias in ("estimators", "costs"):
        if alias in values:
            values["methods"] = values.pop(alias)
    if "seed" in values:
        values["root_seed"] = values.pop("seed")
    overrides = {
        "replications": args.replications,
        "root_seed": args.seed,
        "scenario": getattr(args, "scenario", None),
        "chunk_size": args.chunk_size,
    }
    if args.methods is not None:
        overrides["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "splits" in values:
        values["splits"] = [tuple(pair) for pair in values["splits"]]
    try:
        return default_z_spec(**values) if kind == "z-sweep" else default_theta_spec(**values)
    except TypeError as exc:
        raise UsageError(str(exc)) from exc


def _sweep(kind, args):
    spec = build_spec(kind, load_config(args.config), args)
    runner = run_z_sweep if kind == "z-sweep" else run_theta_sweep
    rows = runner(spec, workers=args.workers)
    emit_csv(rows, args.out, spec)
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def _estimate(args):
    try:
        groups = read_sample_csv(args.data)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"{args.data} is not a label,value CSV: {exc}") from exc
    m = gaussian_model()
    p = gaussian_proposal(args.mu_p, args.sigma_p)
    if args.fixed and args.iters is None:
        raise UsageError("--fixed needs --iters")
    if args.iters is not None and args.iters < 1:
        raise UsageError("--iters must be positive")
    if not args.z0 > 0:
        raise UsageError("--z0 must be positive")
    if args.fixed:
        cfg = FixedPointConfig.fixed(args.z0, args.iters)
    else:
        cfg = FixedPointConfig(Z0=args.z0, max_iters=args.iters or 1000)
    est = args.estimator
    theta = args.theta
    if est == "opt-umbrella":
        if "umbrella" not in groups:
            raise UsageError("opt-umbrella needs rows labelled 'umbrella'")
        run = optimal_umbrella(groups["umbrella"], m, theta, p, cfg)
        result = {"Z_hat": run.Z_hat, "iters": run.iters_used, "converged": run.converged}
    else:
        if set(groups) - {"model", "proposal"}:
            raise UsageError(f"unexpected labels {sorted(set(groups) - {'model', 'proposal'})}")
        try:
            s = SampleSet(groups.get("model", np.empty(0)), groups.get("proposal", np.empty(0)))
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        iterative = {
            "opt-bridge": optimal_bridge,
            "mis": mis_estimator,
            "self-is-mix": self_is_with_mix,
            "quad-score": quadratic_score_iteration,
        }
        if est in iterative:
            run = iterative[est](s, m, theta, p, cfg)
            result = {"Z_hat": run.Z_hat, "iters": run.iters_used, "converged": run.converged}
        elif est == "multi-bridge":
            run = multi_proposal_bridge(MultiSampleSet(s.y, (p,), (s.x,)), m, theta, cfg)
            result = {"Z_hat": run.Z_hat, "iters": run.iters_used, "converged": run.converged}
        elif est == "stand-is":
            result = {"Z_hat": standard_is(s, m, theta, p)}
        elif est == "ris":
            result = {"Z_hat": reverse_is(s, m, theta, p)}
        else:
            g = geometric_mean_estimator(s, m, theta, p)
            result = {"Z_hat": g.geo, "Z_bad": g.bad}
    result["estimator"] = est
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK if math.isfinite(result["Z_hat"]) else EXIT_FAILURE


def _selftest(args):
    from .selftest import run_selftest

    results = run_selftest()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_FAILURE


def _add_sweep_args(sp, with_scenario):
    sp.add_argument("--config", help="JSON file of sweep settings")
    sp.add_argument("--out", required=True, help="output CSV path")
    sp.add_argument("--workers", type=int, default=1, help="worker processes (output is identical for any count)")
    sp.add_argument("--replications", type=int)
    sp.add_argument("--seed", type=int, help="root seed")
    sp.add_argument("--chunk-size", type=int)
    sp.add_argument("--methods", help="comma-separated estimator or cost ids")
    if with_scenario:
        sp.add_argument("--scenario", help="ideal | almost-ideal | realistic-low | realistic-high")


def make_parser():
    parser = _Parser(prog="ebm-bridge", description="Partition-function estimators and MSE sweeps.")
    parser.add_argument("--list-estimators", action="store_true", help="print estimator and cost ids and exit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    _add_sweep_args(sub.add_parser("z-sweep", help="MSE of Z estimators versus sigma_p"), True)
    _add_sweep_args(sub.add_parser("theta-sweep", help="MSE of theta estimates versus sigma_p"), False)
    est = sub.add_parser("estimate-z", help="estimate Z from a label,value sample CSV")
    est.add_argument("--estimator", required=True, choices=Z_ESTIMATORS)
    est.add_argument("--data", required=True)
    est.add_argument("--sigma-p", type=float, required=True)
    est.add_argument("--mu-p", type=float, default=0.0)
    est.add_argument("--theta", type=float, default=1.0)
    est.add_argument("--z0", type=float, default=1.0)
    est.add_argument("--iters", type=int, help="iteration cap T")
    est.add_argument("--fixed", action="store_true", help="run exactly --iters steps with no tolerance")
    sub.add_parser("selftest", help="run the invariant checks")
    return parser


def main(argv=None):
    try:
        args = make_parser().parse_args(argv)
        if args.list_estimators:
            print("z estimators: " + ", ".join(Z_ESTIMATORS))
            print("theta costs:  " + ", ".join(THETA_COSTS))
            return EXIT_OK
        if args.command in ("z-sweep", "theta-sweep"):
            if args.workers < 1:
                raise UsageError("--workers must be at least 1")
            return _sweep(args.command, args)
        if args.command == "estimate-z":
            if not args.sigma_p > 0:
                raise UsageError("--sigma-p must be positive")
            return _estimate(args)
        if args.command == "selftest":
            return _selftest(args)
        raise UsageError("a subcommand is required (z-sweep, theta-sweep, estimate-z, selftest)")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EstimationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
