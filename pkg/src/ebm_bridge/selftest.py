"""Fast invariant checks run by ``ebm-bridge selftest``."""

from __future__ import annotations

import math

import numpy as np

from .costs import QUADRATIC, j_mis, j_nce, j_scoring
from .estimators import (
    FixedPointConfig,
    MultiSampleSet,
    RlrProblem,
    geometric_mean_estimator,
    mis_estimator,
    multi_proposal_bridge,
    optimal_bridge,
    quadratic_score_iteration,
    reverse_is,
    rlr_estimate,
    self_is_with_mix,
    standard_is,
)
from .model import SampleSet, UnnormalizedModel, draw_sample_set, gaussian_model, gaussian_proposal
from .solvers import LOG_Z_BRACKET, fd_gradient, minimize_1d


def _instances(count, seed=20240601):
    rng = np.random.default_rng(seed)
    m = gaussian_model()
    for i in range(count):
        N, M = (int(v) for v in rng.integers(1, 51, size=2))
        sigma = float(np.exp(rng.uniform(math.log(0.3), math.log(5.0))))
        p = gaussian_proposal(0.0, sigma)
        yield m, p, draw_sample_set(m, 1.0, p, N, M, seed + i)


def check_equivalence(count=10):
    worst = 0.0
    for m, p, s in _instances(count):
        zb = optimal_bridge(s, m, 1.0, p).Z_hat
        r = minimize_1d(lambda t: j_nce(1.0, math.exp(t), s, m, p).value, LOG_Z_BRACKET, 1e-10)
        z1 = rlr_estimate(RlrProblem((lambda u: m.log_phi(u, 1.0), p.log_q), (s.y, s.x)))[0]
        worst = max(worst, abs(math.exp(r.argmin) - zb) / zb, abs(z1 - zb) / zb)
    return worst < 1e-6, f"max relative gap {worst:.2e}"


def check_stationarity(count=10):
    worst = 0.0
    for m, p, s in _instances(count):
        z_mix = self_is_with_mix(s, m, 1.0, p).Z_hat
        z_quad = quadratic_score_iteration(s, m, 1.0, p).Z_hat
        worst = max(worst, abs(j_mis(1.0, z_mix, s, m, p).dZ), abs(j_scoring(QUADRATIC, 1.0, z_quad, s, m, p).dZ))
    return worst < 1e-8, f"max |dJ/dZ| {worst:.2e}"


def check_gradients(count=5):
    worst = 0.0
    for m, p, s in _instances(count):
        Z = 2.0
        for f in (
            lambda z: j_nce(1.0, z, s, m, p),
            lambda z: j_mis(1.0, z, s, m, p),
            lambda z: j_scoring(QUADRATIC, 1.0, z, s, m, p),
        ):
            fd = fd_gradient(lambda z: f(float(z)).value, Z)[0]
            exact = f(Z).dZ
            worst = max(worst, abs(fd - exact) / max(abs(exact), 1e-8))
    return worst < 1e-6, f"max relative error {worst:.2e}"


def proportional_instance(c, seed=3):
    """A model with phi = c q exactly on every point."""
    p = gaussian_proposal(0.0, 1.5)
    m = UnnormalizedModel(lambda y, theta: math.log(c) + p.log_q(y), name="proportional")
    rng = np.random.default_rng(seed)
    return m, p, SampleSet(rng.normal(0, 1.5, 7), rng.normal(0, 1.5, 11))


def check_exactness():
    # MIS contracts linearly towards c, so iterate it to rounding level
    cfg = FixedPointConfig(rel_tol=1e-15, max_iters=5000)
    worst = 0.0
    for c in (0.1, 1.0, math.sqrt(2 * math.pi), 100.0):
        m, p, s = proportional_instance(c)
        vals = [
            optimal_bridge(s, m, None, p).Z_hat,
            mis_estimator(s, m, None, p, cfg).Z_hat,
            self_is_with_mix(s, m, None, p).Z_hat,
            quadratic_score_iteration(s, m, None, p).Z_hat,
            standard_is(s, m, None, p),
            reverse_is(s, m, None, p),
            geometric_mean_estimator(s, m, None, p).geo,
        ]
        worst = max(worst, max(abs(v - c) / c for v in vals))
    return worst < 1e-12, f"max relative error {worst:.2e}"


def check_multi_reduction(count=5):
    for m, p, s in _instances(count):
        a = optimal_bridge(s, m, 1.0, p, FixedPointConfig(Z0=0.3))
        b = multi_proposal_bridge(MultiSampleSet(s.y, (p,), (s.x,)), m, 1.0, FixedPointConfig(Z0=0.3))
        if a.trace != b.trace:
            return False, "K=1 trace differs from the optimal bridge"
    return True, "K=1 traces identical"


def check_scale_equivariance():
    base = gaussian_model()
    p = gaussian_proposal(0.0, 2.0)
    s = draw_sample_set(base, 1.0, p, 8, 12, 11)
    worst = 0.0
    for scale in (1e-6, 1e6):
        scaled = UnnormalizedModel(lambda y, th: base.log_phi(y, th) + math.log(scale))
        for est in (optimal_bridge, mis_estimator, self_is_with_mix, quadratic_score_iteration):
            z0 = est(s, base, 1.0, p, FixedPointConfig(Z0=1.0)).Z_hat
            z1 = est(s, scaled, 1.0, p, FixedPointConfig(Z0=scale)).Z_hat
            worst = max(worst, abs(z1 / scale - z0) / z0)
    return worst < 1e-12, f"max relative error {worst:.2e}"


CHECKS = {
    "nce-bridge-rlr-equivalence": check_equivalence,
    "stationarity": check_stationarity,
    "gradient-check": check_gradients,
    "proportional-exactness": check_exactness,
    "multi-proposal-reduction": check_multi_reduction,
    "scale-equivariance": check_scale_equivariance,
}


def run_selftest():
    """Run every check; returns a list of (name, passed, detail)."""
    results = []
    for name, check in CHECKS.items():
        try:
            ok, detail = check()
        except Exception as exc:  # report, keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail))
    return results
