"""Estimators of the partition function Z from model and proposal samples.

All recursions share one batched fixed-point driver. Arrays of log densities
may carry leading batch axes (one row per independent trial); the sample axis
is always the last one. Each ratio estimator is a bridge identity

    Z_{t+1} = mean_x[b(x; Z_t) phi(x)] / mean_y[b(y; Z_t) q(y)]

for some bridge function b, evaluated entirely in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import (
    DegenerateSamplesError,
    DivergenceError,
    EvaluationError,
    OptimizationError,
    SingularIterateError,
    ZeroDensityError,
)
from .model import Proposal, SampleSet, UnnormalizedModel
from .numerics import LOG_TINY, compensated_sum, log_abs_diff_exp, logmeanexp, logsumexp

OK, DEGENERATE, DIVERGED, SINGULAR = 0, 1, 2, 3

# log Z outside this range over- or underflows to a non-positive or infinite Z
_LOG_Z_MAX = math.log(np.finfo(float).max)
_LOG_Z_MIN = math.log(np.finfo(float).smallest_subnormal)


@dataclass(frozen=True)
class FixedPointConfig:
    """Initial iterate, iteration cap and relative tolerance.

    ``rel_tol=None`` selects fixed-T mode: exactly ``max_iters`` steps are
    taken with no early stopping.
    """

    Z0: float = 1.0
    max_iters: int = 1000
    rel_tol: Optional[float] = 1e-10

    def __post_init__(self):
        if not self.Z0 > 0:
            raise ValueError(f"Z0 must be positive, got {self.Z0}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.rel_tol is not None and not 0 < self.rel_tol < 1:
            raise ValueError("rel_tol must lie in (0, 1)")

    @classmethod
    def fixed(cls, Z0, T):
        return cls(Z0=Z0, max_iters=T, rel_tol=None)


@dataclass(frozen=True)
class EstimatorRun:
    Z_hat: float
    trace: tuple
    converged: bool
    iters_used: int


@dataclass
class BatchRun:
    """Per-trial results of a batched fixed-point run."""

    z_hat: np.ndarray
    log_trace: np.ndarray  # (steps + 1, *batch)
    iters: np.ndarray
    converged: np.ndarray
    status: np.ndarray


@dataclass(frozen=True)
class BridgeFunction:
    """Positive bridge function b, given through log b.

    ``log_b(points, log_phi, log_q, log_Z, N, M)`` receives the sample points,
    the log densities at those points, ``log_Z`` broadcastable against them,
    and the sample counts of the SampleSet it is used with.
    """

    log_b: Callable
    uses_z: bool = True
    name: str = "bridge"


def _log_alphas(N, M):
    return math.log(N / (N + M)), math.log(M / (N + M))


def _optimal_log_b(points, lphi, lq, log_z, N, M):
    a1, a2 = _log_alphas(N, M)
    return -np.logaddexp(a1 + lphi - log_z, a2 + lq)


def _quadratic_log_b(points, lphi, lq, log_z, N, M):
    log_nu = math.log(M / N)
    return lphi + lq - 3.0 * np.logaddexp(lphi, log_nu + log_z + lq)


def _constant_log_b(points, lphi, lq, log_z, N, M):
    return np.zeros(np.broadcast(lphi, lq).shape)


OPTIMAL_BRIDGE = BridgeFunction(_optimal_log_b, True, "optimal")
QUADRATIC_BRIDGE = BridgeFunction(_quadratic_log_b, True, "quadratic")
CONSTANT_BRIDGE = BridgeFunction(_constant_log_b, False, "constant")


def iterate_fixed_point(step, z0, cfg: FixedPointConfig, batch_shape=()) -> BatchRun:
    """Drive ``step(log_z) -> (log_z_new, status)`` from ``z0``.

    Each batch element stops on its own (tolerance met or an error status)
    and keeps its last good iterate afterwards.
    """
    log_z = np.broadcast_to(np.log(np.asarray(z0, dtype=float)), batch_shape).copy()
    done = np.zeros(batch_shape, dtype=bool)
    converged = np.zeros(batch_shape, dtype=bool)
    status = np.zeros(batch_shape, dtype=np.int8)
    iters = np.zeros(batch_shape, dtype=np.int64)
    trace = [log_z.copy()]
    for _ in range(cfg.max_iters):
        with np.errstate(all="ignore"):
            new, code = step(log_z)
        new = np.broadcast_to(new, batch_shape)
        code = np.broadcast_to(code, batch_shape)
        active = ~done
        bad = active & (code != OK)
        status = np.where(bad, code, status)
        good = active & ~bad
        iters = iters + good
        old = log_z
        log_z = np.where(good, new, log_z)
        done = done | bad
        if cfg.rel_tol is not None:
            z_new, z_old = np.exp(log_z), np.exp(old)
            hit = good & (np.abs(z_new - z_old) <= cfg.rel_tol * np.abs(z_new))
            converged = converged | hit
            done = done | hit
        trace.append(log_z.copy())
        if done.all():
            break
    if cfg.rel_tol is None:
        # fixed-T mode: finishing the budget without an error is success
        converged = status == OK
    return BatchRun(np.exp(log_z), np.stack(trace), iters, converged, status)


def _ratio_status(log_num, log_den, new):
    status = np.where(np.isneginf(log_den), DEGENERATE, OK)
    status = np.where((status == OK) & ~_representable(new), DIVERGED, status)
    return status.astype(np.int8)


def _representable(log_z):
    with np.errstate(invalid="ignore"):
        return (log_z < _LOG_Z_MAX) & (log_z > _LOG_Z_MIN)


def bridge_step(log_b, N, M, num_side, den_side):
    """Step closure for Z <- mean_num[b phi] / mean_den[b q].

    ``num_side`` and ``den_side`` are (points, log_phi, log_q) triples.
    """
    px, lphi_x, lq_x = num_side
    py, lphi_y, lq_y = den_side

    def step(log_z):
        lz = np.asarray(log_z)[..., None]
        log_num = logmeanexp(log_b(px, lphi_x, lq_x, lz, N, M) + lphi_x)
        log_den = logmeanexp(log_b(py, lphi_y, lq_y, lz, N, M) + lq_y)
        new = log_num - log_den
        return new, _ratio_status(log_num, log_den, new)

    return step


def mis_step(N, M, lphi_u, lq_u):
    """Step closure for the deterministic-mixture IS recursion."""

    def step(log_z):
        lz = np.asarray(log_z)[..., None]
        new = logmeanexp(lphi_u + _optimal_log_b(None, lphi_u, lq_u, lz, N, M))
        status = np.where(_representable(new), OK, DIVERGED).astype(np.int8)
        return new, status

    return step


def umbrella_step(lphi, lq):
    """Step closure for the optimal umbrella recursion over draws from rbar."""

    def step(log_z):
        lz = np.asarray(log_z)[..., None]
        log_absdiff = log_abs_diff_exp(lphi, lz + lq)
        log_num = logsumexp(lphi - log_absdiff)
        log_den = logsumexp(lq - log_absdiff)
        new = log_num - log_den
        status = _ratio_status(log_num, log_den, new)
        singular = np.any(~(log_absdiff >= LOG_TINY), axis=-1)
        status = np.where(singular, SINGULAR, status).astype(np.int8)
        return new, status

    return step


# ---------------------------------------------------------------------------
# single-sample-set API


def _eval_side(points, theta, m, p):
    lphi = np.asarray(m.log_phi(points, theta), dtype=float)
    lq = np.asarray(p.log_q(points), dtype=float)
    if np.any(np.isnan(lq) | np.isposinf(lq)):
        raise EvaluationError("log_q is not finite on the samples")
    if np.any(np.isnan(lphi) | np.isposinf(lphi)):
        raise EvaluationError("log_phi is not finite on the samples")
    if np.any(np.isneginf(lphi) & np.isfinite(lq)):
        raise EvaluationError("log_phi is -inf where q has positive density")
    return lphi, lq


def _to_run(batch: BatchRun, what: str, z0: float) -> EstimatorRun:
    n = int(batch.iters)
    trace = (float(z0),) + tuple(float(v) for v in np.exp(batch.log_trace[1 : n + 1]))
    code = int(batch.status)
    if code == DEGENERATE:
        raise DegenerateSamplesError(f"{what}: denominator sum is zero")
    if code == DIVERGED:
        raise DivergenceError(f"{what}: iterate became non-finite after {n} steps", trace)
    if code == SINGULAR:
        raise SingularIterateError(f"{what}: |phi - Z q| vanished at Z = {trace[-1]!r}", z=trace[-1], trace=trace)
    return EstimatorRun(trace[-1], trace, bool(batch.converged), n)


def _default_cfg(cfg):
    return FixedPointConfig() if cfg is None else cfg


def optimal_bridge(s: SampleSet, m: UnnormalizedModel, theta, p: Proposal, cfg=None) -> EstimatorRun:
    """Iterated optimal bridge sampling (equivalently, the Z-minimizer of the NCE cost)."""
    return generic_bridge(OPTIMAL_BRIDGE, s, m, theta, p, cfg)


def generic_bridge(b: BridgeFunction, s: SampleSet, m, theta, p, cfg=None) -> EstimatorRun:
    """Bridge identity Z = E_q[b phi] / E_phibar[b q] with sample means.

    A Z-independent ``b`` gives a single ratio; otherwise the current iterate
    is substituted into ``b`` and the identity is iterated.
    """
    cfg = _default_cfg(cfg)
    lphi_y, lq_y = _eval_side(s.y, theta, m, p)
    lphi_x, lq_x = _eval_side(s.x, theta, m, p)
    step = bridge_step(b.log_b, s.N, s.M, (s.x, lphi_x, lq_x), (s.y, lphi_y, lq_y))
    if not b.uses_z:
        cfg = FixedPointConfig(Z0=cfg.Z0, max_iters=1, rel_tol=None)
    return _to_run(iterate_fixed_point(step, cfg.Z0, cfg), f"bridge[{b.name}]", cfg.Z0)


def quadratic_score_iteration(s: SampleSet, m, theta, p, cfg=None) -> EstimatorRun:
    """Z-stationary point of the quadratic scoring rule V(eta) = (1 - eta)^2.

    Identical to the bridge identity with b = phi q / (phi + nu Z q)^3 while
    the plain recursion converges. With N much larger than M the recursion
    can settle into a two-cycle around its fixed point; in tolerance mode the
    fixed point is then located by Brent's method on log F(Z) - log Z between
    the last two iterates, and one more plain step from it closes the trace.
    """
    cfg = _default_cfg(cfg)
    run = generic_bridge(QUADRATIC_BRIDGE, s, m, theta, p, cfg)
    if run.converged or cfg.rel_tol is None or len(run.trace) < 3:
        return run
    lphi_y, lq_y = _eval_side(s.y, theta, m, p)
    lphi_x, lq_x = _eval_side(s.x, theta, m, p)
    step = bridge_step(QUADRATIC_BRIDGE.log_b, s.N, s.M, (s.x, lphi_x, lq_x), (s.y, lphi_y, lq_y))

    def gap(lz):
        with np.errstate(all="ignore"):
            return float(step(lz)[0]) - lz

    a, b = sorted(math.log(v) for v in run.trace[-2:])
    if not (a < b and gap(a) > 0 > gap(b)):
        return run
    root = optimize.brentq(gap, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    z_root = math.exp(root)
    z_next = math.exp(float(step(root)[0]))
    ok = abs(z_next - z_root) <= cfg.rel_tol * z_next
    return EstimatorRun(z_next, run.trace + (z_root, z_next), ok, run.iters_used + 2)


def self_is_with_mix(s: SampleSet, m, theta, p, cfg=None) -> EstimatorRun:
    """Ratio-form mixture IS: both sums run over the pooled samples."""
    cfg = _default_cfg(cfg)
    u = s.pooled
    lphi_u, lq_u = _eval_side(u, theta, m, p)
    side = (u, lphi_u, lq_u)
    step = bridge_step(_optimal_log_b, s.N, s.M, side, side)
    return _to_run(iterate_fixed_point(step, cfg.Z0, cfg), "self-IS-with-mix", cfg.Z0)


def mis_estimator(s: SampleSet, m, theta, p, cfg=None) -> EstimatorRun:
    """Deterministic-mixture MIS, Z_{t+1} = mean_u Z_t phi / (a1 phi + a2 Z_t q)."""
    cfg = _default_cfg(cfg)
    lphi_u, lq_u = _eval_side(s.pooled, theta, m, p)
    step = mis_step(s.N, s.M, lphi_u, lq_u)
    return _to_run(iterate_fixed_point(step, cfg.Z0, cfg), "MIS", cfg.Z0)


def standard_is(s: SampleSet, m, theta, p) -> float:
    """(1/M) sum_m phi(x_m) / q(x_m)."""
    lphi, lq = _eval_side(s.x, theta, m, p)
    if np.any(np.isneginf(lq)):
        raise ZeroDensityError("q(x_m) = 0 for some proposal sample")
    return float(np.exp(logmeanexp(lphi - lq)))


def reverse_is(s: SampleSet, m, theta, p) -> float:
    """[(1/N) sum_n q(y_n) / phi(y_n)]^-1; positively biased."""
    lphi = np.asarray(m.log_phi(s.y, theta), dtype=float)
    if np.any(np.isneginf(lphi)):
        raise ZeroDensityError("phi(y_n) = 0 for some model sample")
    lphi, lq = _eval_side(s.y, theta, m, p)
    return float(np.exp(-logmeanexp(lq - lphi)))


class GeometricEstimate(NamedTuple):
    geo: float
    bad: float


def geometric_mean_estimator(s: SampleSet, m, theta, p) -> GeometricEstimate:
    """sqrt(standard IS x reverse IS), plus the unscaled sqrt(N/M) variant.

    The unscaled value is the Z-stationary point of the reciprocal rule
    V(eta) = 1/eta.
    """
    lphi_x, lq_x = _eval_side(s.x, theta, m, p)
    lphi_y, lq_y = _eval_side(s.y, theta, m, p)
    if np.any(np.isneginf(lq_x)):
        raise ZeroDensityError("q(x_m) = 0 for some proposal sample")
    if np.any(np.isneginf(lphi_y)):
        raise ZeroDensityError("phi(y_n) = 0 for some model sample")
    log_geo = 0.5 * (logmeanexp(lphi_x - lq_x) - logmeanexp(lq_y - lphi_y))
    geo = float(np.exp(log_geo))
    bad = float(np.exp(log_geo + 0.5 * math.log(s.N / s.M)))
    return GeometricEstimate(geo, bad)


def optimal_umbrella(points, m, theta, p, cfg=None) -> EstimatorRun:
    """Optimal umbrella recursion over draws from rbar ∝ |phi/Z - q|.

    With r_i = phi/q at the draws, one step maps Z to the mean of the r_i
    weighted by 1/|r_i - Z|; the fixed points are therefore the medians of
    the r_i, and an odd draw count drives the iterate onto a singular point.
    """
    cfg = _default_cfg(cfg)
    points = np.asarray(points, dtype=float)
    lphi, lq = _eval_side(points, theta, m, p)
    batch = iterate_fixed_point(umbrella_step(lphi, lq), cfg.Z0, cfg)
    if int(batch.status) == SINGULAR:
        n = int(batch.iters)
        log_z = batch.log_trace[n]
        log_absdiff = log_abs_diff_exp(lphi, log_z + lq)
        index = int(np.argmax(~(log_absdiff >= LOG_TINY)))
        z = float(np.exp(log_z))
        trace = (float(cfg.Z0),) + tuple(float(v) for v in np.exp(batch.log_trace[1 : n + 1]))
        raise SingularIterateError(
            f"optimal umbrella: |phi - Z q| vanished at sample {index} with Z = {z!r}",
            z=z,
            index=index,
            trace=trace,
        )
    return _to_run(batch, "optimal umbrella", cfg.Z0)


@dataclass(frozen=True)
class MultiSampleSet:
    """Model draws y plus draws x_k from each of K proposals q_k."""

    y: np.ndarray
    proposals: tuple
    xs: tuple

    def __post_init__(self):
        if len(self.proposals) < 1 or len(self.proposals) != len(self.xs):
            raise ValueError("need one sample array per proposal, K >= 1")
        xs = tuple(np.asarray(x, dtype=float) for x in self.xs)
        if any(len(x) < 1 for x in xs) or len(self.y) < 1:
            raise ValueError("every proposal and the model need at least one sample")
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "proposals", tuple(self.proposals))

    @property
    def N(self):
        return len(self.y)

    @property
    def counts(self):
        return tuple(len(x) for x in self.xs)

    @property
    def M(self):
        return sum(self.counts)


def log_mixture_proposal(points, proposals: Sequence[Proposal], counts):
    """log sum_k (M_k / M) q_k(points): the deterministic mixture of proposals."""
    total = sum(counts)
    terms = np.stack(
        [math.log(mk / total) + np.asarray(q.log_q(points), dtype=float) for q, mk in zip(proposals, counts)],
        axis=-1,
    )
    return logsumexp(terms)


def multi_proposal_bridge(s: MultiSampleSet, m, theta, cfg=None) -> EstimatorRun:
    """Bridge iteration for K proposals, from the (K+1)-class contrastive cost.

    Setting the Z-derivative of that cost to zero gives

        Z = sum_{k,m} N phi(x_km) / D(x_km) / sum_n sum_k M_k q_k(y_n) / D(y_n),
        D(u) = N phi(u) + Z sum_j M_j q_j(u),

    which is the optimal bridge with q replaced by the count-weighted mixture
    of the q_k. For K = 1 it is the same computation as ``optimal_bridge``.
    """
    cfg = _default_cfg(cfg)
    counts = s.counts
    x = np.concatenate(s.xs)

    def side(points):
        lphi = np.asarray(m.log_phi(points, theta), dtype=float)
        lq = log_mixture_proposal(points, s.proposals, counts)
        if np.any(~np.isfinite(lphi)) or np.any(np.isnan(lq) | np.isposinf(lq)):
            raise EvaluationError("non-finite log density on the samples")
        return points, lphi, lq

    step = bridge_step(_optimal_log_b, s.N, s.M, side(x), side(s.y))
    return _to_run(iterate_fixed_point(step, cfg.Z0, cfg), "multi-proposal bridge", cfg.Z0)


# ---------------------------------------------------------------------------
# reverse logistic regression


@dataclass(frozen=True)
class RlrProblem:
    """K unnormalized densities with samples from each; one Z pinned to 1."""

    log_phis: tuple
    samples: tuple
    pinned: int = -1

    def __post_init__(self):
        K = len(self.log_phis)
        if K < 2 or len(self.samples) != K:
            raise ValueError("RLR needs K >= 2 densities, each with a sample array")
        if not -K <= self.pinned < K:
            raise ValueError("pinned index out of range")
        object.__setattr__(self, "samples", tuple(np.asarray(y, dtype=float) for y in self.samples))
        object.__setattr__(self, "log_phis", tuple(self.log_phis))

    @property
    def K(self):
        return len(self.log_phis)


def rlr_estimate(problem: RlrProblem, gtol: float = 1e-9, max_iters: int = 200) -> np.ndarray:
    """Maximum-likelihood Z_k of the multinomial model

        p(a = k | y) = N_k phi_k(y) / Z_k / sum_j N_j phi_j(y) / Z_j,

    optimized over lambda_k = log Z_k with the pinned entry fixed at 0.
    """
    from .solvers import newton_minimize

    K = problem.K
    pinned = problem.pinned % K
    counts = np.array([len(y) for y in problem.samples], dtype=float)
    pooled = np.concatenate(problem.samples)
    labels = np.repeat(np.arange(K), counts.astype(int))
    L = np.stack([np.asarray(f(pooled), dtype=float) for f in problem.log_phis], axis=-1)
    if not np.all(np.isfinite(L)):
        raise EvaluationError("a log density is not finite on the pooled samples")
    L = L + np.log(counts)
    free = np.array([k for k in range(K) if k != pinned])

    def full(lam_free):
        lam = np.zeros(K)
        lam[free] = lam_free
        return lam

    def logits(lam_free):
        return L - full(lam_free)

    def objective(lam_free):
        a = logits(lam_free)
        return -compensated_sum(a[np.arange(len(labels)), labels] - logsumexp(a), axis=0)

    def probs(lam_free):
        a = logits(lam_free)
        return np.exp(a - logsumexp(a)[:, None])

    def gradient(lam_free):
        P = probs(lam_free)
        return (counts - compensated_sum(P, axis=0))[free]

    def hessian(lam_free):
        P = probs(lam_free)[:, free]
        return np.diag(compensated_sum(P, axis=0)) - P.T @ P

    report = newton_minimize(objective, gradient, hessian, np.zeros(K - 1), gtol=gtol, max_iters=max_iters)
    if not report.converged:
        raise OptimizationError("RLR Newton iteration did not reach the gradient tolerance", report.argmin)
    return np.exp(full(report.argmin))


# ---------------------------------------------------------------------------
# batched registry used by the experiment harness


def batch_estimate(estimator_id, N, M, lphi_y, lq_y, lphi_x, lq_x, cfg: FixedPointConfig) -> BatchRun:
    """Run a two-sample estimator on a batch of trials (rows).

    Non-recursive estimators report zero iterations.
    """
    batch_shape = np.broadcast(lphi_y[..., 0], lphi_x[..., 0]).shape
    if estimator_id in ("opt-bridge", "multi-bridge"):
        step = bridge_step(_optimal_log_b, N, M, (None, lphi_x, lq_x), (None, lphi_y, lq_y))
    elif estimator_id == "quad-score":
        step = bridge_step(_quadratic_log_b, N, M, (None, lphi_x, lq_x), (None, lphi_y, lq_y))
    elif estimator_id == "self-is-mix":
        lphi_u = np.concatenate([lphi_y, lphi_x], axis=-1)
        lq_u = np.concatenate([lq_y, lq_x], axis=-1)
        step = bridge_step(_optimal_log_b, N, M, (None, lphi_u, lq_u), (None, lphi_u, lq_u))
    elif estimator_id == "mis":
        lphi_u = np.concatenate([lphi_y, lphi_x], axis=-1)
        lq_u = np.concatenate([lq_y, lq_x], axis=-1)
        step = mis_step(N, M, lphi_u, lq_u)
    elif estimator_id in ("stand-is", "ris", "geo"):
        with np.errstate(all="ignore"):
            log_is = logmeanexp(lphi_x - lq_x)
            log_ris = -logmeanexp(lq_y - lphi_y)
        log_z = {"stand-is": log_is, "ris": log_ris, "geo": 0.5 * (log_is + log_ris)}[estimator_id]
        log_z = np.broadcast_to(log_z, batch_shape)
        status = np.where(np.isfinite(log_z), OK, DIVERGED).astype(np.int8)
        zeros = np.zeros(batch_shape, dtype=np.int64)
        return BatchRun(np.exp(log_z), log_z[None], zeros, status == OK, status)
    else:
        raise ValueError(f"no batched form for estimator {estimator_id!r}")
    return iterate_fixed_point(step, cfg.Z0, cfg, batch_shape)


def batch_umbrella(lphi, lq, cfg: FixedPointConfig) -> BatchRun:
    return iterate_fixed_point(umbrella_step(lphi, lq), cfg.Z0, cfg, lphi.shape[:-1])


def stationary_z(rule, s: SampleSet, m, theta, p, cfg=None) -> float:
    """Z at which the scoring-rule cost has zero Z-derivative.

    Known rules go through their closed form or fixed-point recursion; any
    other rule is minimized numerically in log Z.
    """
    name = getattr(rule, "name", rule)
    if name == "negative-log":
        return optimal_bridge(s, m, theta, p, cfg).Z_hat
    if name == "quadratic":
        return quadratic_score_iteration(s, m, theta, p, cfg).Z_hat
    if name == "reciprocal":
        return geometric_mean_estimator(s, m, theta, p).bad
    from .costs import j_scoring
    from .solvers import Bracket1D, minimize_1d

    report = minimize_1d(
        lambda t: j_scoring(rule, theta, math.exp(t), s, m, p).value,
        Bracket1D(math.log(1e-3), math.log(1e3), 200),
        1e-10,
    )
    return math.exp(report.argmin)
