"""MSE-vs-sigma_p sweeps over the Gaussian test family.

Trial t of split (N, M) draws its standard-normal variates from the seed
(root_seed, split index, trial index); every sigma_p, estimator and cost in
that split reuses them (common random numbers), so estimators are compared on
identical samples and the ML rows are independent of sigma_p by construction.
Trials are processed in fixed chunks, merged in index order, and moments are
accumulated with correctly rounded sums, so the output does not depend on how
many workers ran the chunks.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .costs import NEGATIVE_LOG, QUADRATIC, RECIPROCAL, mis_cost, scoring_cost
from .estimators import OK, FixedPointConfig, batch_estimate, batch_umbrella, log_mixture_proposal
from .errors import EstimationError
from .model import draw_sample_set, gaussian_model, gaussian_proposal, sample_umbrella
from .numerics import compensated_sum, trial_seed
from .solvers import THETA_BRACKET, minimize_1d_batch

Z_ESTIMATORS = (
    "opt-bridge",
    "mis",
    "self-is-mix",
    "geo",
    "stand-is",
    "ris",
    "opt-umbrella",
    "quad-score",
    "multi-bridge",
)
THETA_COSTS = ("nce-log", "quad", "reciprocal", "mis", "mis-equal", "ml")
SCENARIOS = ("ideal", "almost-ideal", "realistic-low", "realistic-high")

CSV_HEADER = ["estimator", "sigma_p", "N", "M", "scenario", "R", "mse", "bias", "variance", "mean_iters", "failures"]

# second proposal of the multi-bridge estimator has this many times sigma_p
MULTI_SCALE = 3.0
GOLDEN_TOL = 1e-8


class UsageError(ValueError):
    """Invalid experiment description (CLI exit code 2)."""


def default_sigma_grid(n=12, lo=0.3, hi=5.0):
    return tuple(float(v) for v in np.geomspace(lo, hi, n))


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    sigma_grid: tuple = field(default_factory=default_sigma_grid)
    splits: tuple = ((20, 20), (5, 35), (35, 5))
    methods: tuple = ("opt-bridge", "mis", "self-is-mix")
    scenario: Optional[str] = "realistic-low"
    replications: int = 10_000
    T: int = 10
    root_seed: int = 0
    theta_tr: float = 1.0
    mu_p: float = 0.0
    chunk_size: int = 250
    almost_ideal_factor: float = 1.001

    def __post_init__(self):
        object.__setattr__(self, "sigma_grid", tuple(float(s) for s in self.sigma_grid))
        object.__setattr__(self, "splits", tuple((int(n), int(m)) for n, m in self.splits))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.kind not in ("z-sweep", "theta-sweep"):
            raise UsageError(f"unknown sweep kind {self.kind!r}")
        if not self.sigma_grid or not self.splits or not self.methods:
            raise UsageError("sigma_grid, splits and methods must be nonempty")
        if any(not s > 0 for s in self.sigma_grid):
            raise UsageError("sigma_p values must be positive")
        if any(n < 1 or m < 1 for n, m in self.splits):
            raise UsageError("every split needs N >= 1 and M >= 1")
        if self.replications < 1 or self.T < 1 or self.chunk_size < 1:
            raise UsageError("replications, T and chunk_size must be positive")
        known = Z_ESTIMATORS if self.kind == "z-sweep" else THETA_COSTS
        unknown = [k for k in self.methods if k not in known]
        if unknown:
            raise UsageError(f"unknown {'estimator' if self.kind == 'z-sweep' else 'cost'} id(s): {unknown}")
        if self.kind == "z-sweep" and self.scenario not in SCENARIOS:
            raise UsageError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")

    @property
    def Z_tr(self):
        return math.sqrt(2.0 * math.pi * self.theta_tr**2)

    def initialization(self):
        """(Z0, T) of the scenario; the ideal scenario is one step from Z_tr."""
        return scenario_init(self.scenario, self.Z_tr, self.T, self.almost_ideal_factor)

    def to_dict(self):
        return dataclasses.asdict(self)


def scenario_init(scenario, Z_tr, T=10, almost_ideal_factor=1.001):
    if scenario == "ideal":
        return Z_tr, 1
    if scenario == "almost-ideal":
        return Z_tr * almost_ideal_factor, T
    if scenario == "realistic-low":
        return 0.1, T
    if scenario == "realistic-high":
        return 5.0, T
    raise UsageError(f"unknown scenario {scenario!r}")


def default_z_spec(**overrides):
    return ExperimentSpec(kind="z-sweep", **overrides)


def default_theta_spec(**overrides):
    base = dict(
        kind="theta-sweep",
        splits=((5, 5), (5, 15), (1, 20), (1, 100)),
        methods=("nce-log", "quad", "reciprocal", "mis", "ml"),
        scenario=None,
        replications=2000,
    )
    base.update(overrides)
    return ExperimentSpec(**base)


@dataclass(frozen=True)
class SweepRow:
    estimator: str
    sigma_p: float
    N: int
    M: int
    scenario: str
    R: int
    mse: float
    bias: float
    variance: float
    mean_iters: float
    failures: int


def summarize(errors, iters):
    """(mse, bias, variance, mean_iters, failures) over the non-NaN errors."""
    errors = np.asarray(errors, dtype=float)
    ok = ~np.isnan(errors)
    e = errors[ok]
    n = len(e)
    failures = int(len(errors) - n)
    if n == 0:
        return math.nan, math.nan, math.nan, math.nan, failures
    bias = math.fsum(e) / n
    mse = math.fsum(e * e) / n
    variance = math.fsum((e - bias) ** 2) / n
    mean_iters = math.fsum(np.asarray(iters, dtype=float)[ok]) / n
    return mse, bias, variance, mean_iters, failures


def _standard_draws(spec, split_idx, N, M, start, stop):
    """Standard-normal model and proposal variates for trials [start, stop)."""
    std_model = gaussian_model()
    std_prop = gaussian_proposal(0.0, 1.0)
    ys, xs = [], []
    for t in range(start, stop):
        s = draw_sample_set(std_model, 1.0, std_prop, N, M, trial_seed(spec.root_seed, split_idx, t))
        ys.append(s.y)
        xs.append(s.x)
    return np.stack(ys), np.stack(xs)


def _z_chunk(spec: ExperimentSpec, split_idx: int, start: int, stop: int):
    """Errors Z_hat - Z_tr (NaN on failure) and iteration counts for a chunk."""
    N, M = spec.splits[split_idx]
    m = gaussian_model()
    theta = spec.theta_tr
    Z_tr = spec.Z_tr
    Z0, T = spec.initialization()
    cfg = FixedPointConfig.fixed(Z0, T)
    y_std, x_std = _standard_draws(spec, split_idx, N, M, start, stop)
    y = theta * y_std
    lphi_y = m.log_phi(y, theta)
    out = {}
    for j, sigma in enumerate(spec.sigma_grid):
        q = gaussian_proposal(spec.mu_p, sigma)
        x = spec.mu_p + sigma * x_std
        lphi_x = m.log_phi(x, theta)
        lq_y, lq_x = q.log_q(y), q.log_q(x)
        for est in spec.methods:
            if est == "opt-umbrella":
                run = _umbrella_chunk(spec, split_idx, j, start, stop, q, cfg)
                if run is None:
                    out[est, j] = (np.full(stop - start, np.nan), np.zeros(stop - start))
                    continue
            elif est == "multi-bridge" and M >= 2:
                M1 = (M + 1) // 2
                q2 = gaussian_proposal(spec.mu_p, MULTI_SCALE * sigma)
                xm = np.concatenate([x[:, :M1], spec.mu_p + MULTI_SCALE * sigma * x_std[:, M1:]], axis=-1)
                props, counts = (q, q2), (M1, M - M1)
                run = batch_estimate(
                    est,
                    N,
                    M,
                    lphi_y,
                    log_mixture_proposal(y, props, counts),
                    m.log_phi(xm, theta),
                    log_mixture_proposal(xm, props, counts),
                    cfg,
                )
            else:
                run = batch_estimate(est, N, M, lphi_y, lq_y, lphi_x, lq_x, cfg)
            ok = (run.status == OK) & np.isfinite(run.z_hat)
            out[est, j] = (np.where(ok, run.z_hat - Z_tr, np.nan), run.iters)
    return out


def _umbrella_chunk(spec, split_idx, sigma_idx, start, stop, q, cfg):
    """Optimal umbrella on N+M draws from rbar per trial (Z_ref = Z_tr)."""
    N, M = spec.splits[split_idx]
    m = gaussian_model()
    rows, good = [], []
    for t in range(start, stop):
        try:
            rows.append(
                sample_umbrella(m, spec.theta_tr, spec.Z_tr, q, N + M, trial_seed(spec.root_seed, split_idx, t, sigma_idx + 1))
            )
            good.append(True)
        except EstimationError:
            rows.append(np.zeros(N + M))
            good.append(False)
    if not any(good):
        return None
    pts = np.stack(rows)
    run = batch_umbrella(m.log_phi(pts, spec.theta_tr), q.log_q(pts), cfg)
    run.status = np.where(np.asarray(good), run.status, 1).astype(np.int8)
    return run


def _theta_objective(cost, y, x, lq_y, lq_x, log_z, N, M, block=25):
    """Vectorized objective theta -> J(theta, Z_tr) for a chunk of trials."""
    log_nu = math.log(M / N)
    log_a1, log_a2 = math.log(N / (N + M)), math.log(M / (N + M))
    rule = {"nce-log": NEGATIVE_LOG, "quad": QUADRATIC, "reciprocal": RECIPROCAL}.get(cost)

    def evaluate(TH):
        th = TH[..., None]
        lphi_y = -(y[:, None, :] ** 2) / (2.0 * th * th)
        if cost == "ml":
            log_Z_theta = 0.5 * np.log(2.0 * math.pi * th * th)
            return -compensated_sum(lphi_y - log_Z_theta)
        lphi_x = -(x[:, None, :] ** 2) / (2.0 * th * th)
        if rule is not None:
            return scoring_cost(rule, lphi_y, lq_y[:, None, :], lphi_x, lq_x[:, None, :], log_z, log_nu)[0]
        lphi_u = np.concatenate([lphi_y, lphi_x], axis=-1)
        lq_u = np.concatenate([lq_y, lq_x], axis=-1)[:, None, :]
        return mis_cost(lphi_u, lq_u, log_z, log_a1, log_a2, weighted=(cost == "mis"))[0]

    def f(TH):
        TH = np.asarray(TH, dtype=float)
        parts = [evaluate(TH[:, i : i + block]) for i in range(0, TH.shape[1], block)]
        return np.concatenate(parts, axis=1)

    return f


def _theta_chunk(spec: ExperimentSpec, split_idx: int, start: int, stop: int):
    N, M = spec.splits[split_idx]
    theta = spec.theta_tr
    log_z = math.log(spec.Z_tr)
    y_std, x_std = _standard_draws(spec, split_idx, N, M, start, stop)
    y = theta * y_std
    C = stop - start
    out = {}
    ml_result = None
    for j, sigma in enumerate(spec.sigma_grid):
        q = gaussian_proposal(spec.mu_p, sigma)
        x = spec.mu_p + sigma * x_std
        lq_y, lq_x = q.log_q(y), q.log_q(x)
        for cost in spec.methods:
            if cost == "ml" and ml_result is not None:
                out[cost, j] = ml_result
                continue
            f = _theta_objective(cost, y, x, lq_y, lq_x, log_z, N, M)
            rep = minimize_1d_batch(f, THETA_BRACKET, GOLDEN_TOL, batch_shape=(C,))
            err = np.where(np.isfinite(rep.value_at_min), rep.argmin - theta, np.nan)
            res = (err, np.full(C, float(rep.evaluations)))
            if cost == "ml":
                ml_result = res
            out[cost, j] = res
    return out


def _chunks(spec):
    return [
        (spec, i, start, min(start + spec.chunk_size, spec.replications))
        for i in range(len(spec.splits))
        for start in range(0, spec.replications, spec.chunk_size)
    ]


def _run_task(task):
    spec, split_idx, start, stop = task
    worker = _z_chunk if spec.kind == "z-sweep" else _theta_chunk
    return worker(spec, split_idx, start, stop)


def sweep_errors(spec: ExperimentSpec, workers: int = 1):
    """Per-trial errors for every (method, sigma index, split index).

    Returns a dict mapping (method, sigma_idx, split_idx) to
    (errors, iterations) arrays of length R, in trial order.
    """
    tasks = _chunks(spec)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    merged: dict = {}
    for (_, split_idx, _, _), res in zip(tasks, results):
        for (method, j), (err, it) in res.items():
            merged.setdefault((method, j, split_idx), []).append((err, it))
    return {
        key: (np.concatenate([e for e, _ in parts]), np.concatenate([i for _, i in parts]))
        for key, parts in merged.items()
    }


def _rows(spec, errors):
    scenario = spec.scenario if spec.kind == "z-sweep" else "none"
    rows = []
    for (method, j, split_idx), (err, it) in errors.items():
        N, M = spec.splits[split_idx]
        mse, bias, var, mean_iters, failures = summarize(err, it)
        rows.append(SweepRow(method, spec.sigma_grid[j], N, M, scenario, spec.replications, mse, bias, var, mean_iters, failures))
    rows.sort(key=lambda r: (r.estimator, r.N, r.M, r.sigma_p))
    return rows


def run_z_sweep(spec: ExperimentSpec, workers: int = 1) -> list:
    if spec.kind != "z-sweep":
        raise UsageError("run_z_sweep needs a z-sweep spec")
    return _rows(spec, sweep_errors(spec, workers))


def run_theta_sweep(spec: ExperimentSpec, workers: int = 1) -> list:
    if spec.kind != "theta-sweep":
        raise UsageError("run_theta_sweep needs a theta-sweep spec")
    return _rows(spec, sweep_errors(spec, workers))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def metadata(spec: ExperimentSpec):
    Z0, T = spec.initialization() if spec.kind == "z-sweep" else (None, None)
    return {
        "library_version": __version__,
        "root_seed": spec.root_seed,
        "spec": spec.to_dict(),
        "Z_tr": spec.Z_tr,
        "fixed_point": {"Z0": Z0, "T": T, "mode": "fixed-T (no tolerance)"},
        "solver": {
            "theta_minimizer": "grid scan + golden section",
            "theta_bracket": [THETA_BRACKET.lo, THETA_BRACKET.hi],
            "theta_grid_points": THETA_BRACKET.grid_points,
            "golden_tol": GOLDEN_TOL,
        },
        "seeding": "numpy SeedSequence(root_seed, spawn_key=(split index, trial index)); "
        "common random numbers across sigma_p and methods",
        "almost_ideal_Z0": spec.Z_tr * spec.almost_ideal_factor,
        "multi_bridge": f"K=2 proposals N(mu_p, sigma_p) and N(mu_p, {MULTI_SCALE:g} sigma_p), M split ceil/floor",
        "opt_umbrella": "N+M draws from |phi/Z_tr - q| per trial; the true Z is a harness-only input",
        "mis_cost": "'mis' weights pooled log terms by (alpha1, alpha2); 'mis-equal' weights both by one",
    }


def emit_csv(table, path, spec: Optional[ExperimentSpec] = None):
    """Write the sweep table as CSV plus a ``<path>.meta.json`` sibling."""
    if not table:
        raise ValueError("refusing to write an empty table")
    rows = sorted(table, key=lambda r: (r.estimator, r.N, r.M, r.sigma_p))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([_fmt(getattr(r, k)) for k in CSV_HEADER])
    if spec is not None:
        with open(f"{path}.meta.json", "w", encoding="utf-8") as fh:
            json.dump(metadata(spec), fh, indent=2, sort_keys=True)
            fh.write("\n")
