"""Contrastive cost functions over (theta, Z) and their analytic Z-derivatives.

eta(u) = phi(u) / (phi(u) + nu Z q(u)) is the posterior probability that u
came from the model class, with nu = M/N taken from the sample set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .errors import CapabilityError, EvaluationError
from .model import Proposal, SampleSet, UnnormalizedModel
from .numerics import compensated_sum


@dataclass(frozen=True)
class ScoringRule:
    """Loss V(eta) on the predicted model-class probability, with dV/deta.

    Construction checks dV against central differences of V, and for rules
    flagged proper that V is positive and decreasing on (0, 1).
    """

    name: str
    V: Callable
    dV: Callable
    proper: bool = True

    def __post_init__(self):
        grid = np.linspace(0.05, 0.95, 19)
        h = 1e-6
        fd = (self.V(grid + h) - self.V(grid - h)) / (2 * h)
        exact = self.dV(grid)
        err = np.abs(fd - exact) / np.maximum(np.abs(exact), 1e-12)
        if np.any(err > 1e-6):
            raise ValueError(f"dV of rule {self.name!r} disagrees with finite differences of V")
        if self.proper:
            v = self.V(grid)
            if np.any(v <= 0) or np.any(np.diff(v) >= 0):
                raise ValueError(f"proper rule {self.name!r} must be positive and decreasing")


def _neg_log(e):
    with np.errstate(divide="ignore"):
        return -np.log(e)


def _neg_log_d(e):
    with np.errstate(divide="ignore"):
        return -1.0 / e


def _recip(e):
    with np.errstate(divide="ignore", over="ignore"):
        return 1.0 / e


def _recip_d(e):
    with np.errstate(divide="ignore", over="ignore"):
        return -1.0 / (e * e)


NEGATIVE_LOG = ScoringRule("negative-log", _neg_log, _neg_log_d, proper=True)
QUADRATIC = ScoringRule("quadratic", lambda e: (1.0 - e) ** 2, lambda e: -2.0 * (1.0 - e), proper=True)
RECIPROCAL = ScoringRule("reciprocal", _recip, _recip_d, proper=False)

RULES = {r.name: r for r in (NEGATIVE_LOG, QUADRATIC, RECIPROCAL)}


@dataclass(frozen=True)
class CostEvaluation:
    value: float
    dZ: float
    per_term: Optional[tuple] = None
    infinite: bool = False


# ---------------------------------------------------------------------------
# array kernels (sample axis last, any leading batch axes)


def log_odds(lphi, lq, log_z, log_nu):
    """log eta - log(1 - eta) = log phi - log(nu Z q)."""
    with np.errstate(invalid="ignore"):
        out = lphi - (log_nu + log_z + lq)
    both_zero = np.isneginf(lphi) & np.isneginf(lq)
    if np.any(both_zero):
        raise EvaluationError("phi and q are both zero: posterior undefined")
    return out


def log_eta_dot(lphi, lq, log_z, log_nu):
    """log|d eta / dZ| = log(nu phi q) - 2 log(phi + nu Z q)."""
    with np.errstate(invalid="ignore"):
        return log_nu + lphi + lq - 2.0 * np.logaddexp(lphi, log_nu + log_z + lq)


def scoring_terms(rule: ScoringRule, lphi_y, lq_y, lphi_x, lq_x, log_z, log_nu):
    """Per-sample cost and dJ/dZ contributions for model and proposal samples."""
    a_y = log_odds(lphi_y, lq_y, log_z, log_nu)
    a_x = log_odds(lphi_x, lq_x, log_z, log_nu)
    eta_y = expit(a_y)
    comp_x = expit(-a_x)  # 1 - eta(x), from the same log-odds
    ed_y = -np.exp(log_eta_dot(lphi_y, lq_y, log_z, log_nu))
    ed_x = -np.exp(log_eta_dot(lphi_x, lq_x, log_z, log_nu))
    with np.errstate(invalid="ignore"):
        v_y = rule.V(eta_y)
        v_x = rule.V(comp_x)
        d_y = rule.dV(eta_y) * ed_y
        d_x = -rule.dV(comp_x) * ed_x
    return v_y, v_x, d_y, d_x


def scoring_cost(rule, lphi_y, lq_y, lphi_x, lq_x, log_z, log_nu):
    """(value, dZ) of sum V(eta(y)) + sum V(1 - eta(x)) over the last axis."""
    v_y, v_x, d_y, d_x = scoring_terms(rule, lphi_y, lq_y, lphi_x, lq_x, log_z, log_nu)
    value = compensated_sum(v_y) + compensated_sum(v_x)
    dz = compensated_sum(d_y) + compensated_sum(d_x)
    return value, dz


def mis_terms(lphi_u, lq_u, log_z, log_a1, log_a2, weighted=True):
    """Per-sample pooled-mixture cost terms and their Z-derivatives.

    With ``weighted`` each pooled point carries fractional labels (a1, a2):
        -a1 log(phi/D) - a2 log(Z q/D),  D = a1 phi + a2 Z q.
    Without it both labels get weight one.
    """
    log_d = np.logaddexp(log_a1 + lphi_u, log_a2 + log_z + lq_u)
    t_model = -(lphi_u - log_d)
    t_prop = -(log_z + lq_u - log_d)
    # d/dZ: a2 q / D for the model term, -1/Z + a2 q / D for the proposal term
    z = np.exp(log_z)
    r = np.exp(log_a2 + lq_u - log_d)
    if weighted:
        a1, a2 = math.exp(log_a1), math.exp(log_a2)
        return a1 * t_model + a2 * t_prop, (a1 + a2) * r - a2 / z
    return t_model + t_prop, 2.0 * r - 1.0 / z


def mis_cost(lphi_u, lq_u, log_z, log_a1, log_a2, weighted=True):
    terms, dterms = mis_terms(lphi_u, lq_u, log_z, log_a1, log_a2, weighted)
    return compensated_sum(terms), compensated_sum(dterms)


# ---------------------------------------------------------------------------
# sample-set API


def _densities(points, theta, m, p):
    return np.asarray(m.log_phi(points, theta), dtype=float), np.asarray(p.log_q(points), dtype=float)


def _check_z(Z, nu=1.0):
    if not Z > 0:
        raise ValueError(f"Z must be positive, got {Z}")
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")


def eta(u, theta, Z, nu, m: UnnormalizedModel, p: Proposal):
    """Posterior probability phi/(phi + nu Z q) that u is a model sample."""
    _check_z(Z, nu)
    lphi, lq = _densities(u, theta, m, p)
    out = expit(log_odds(lphi, lq, math.log(Z), math.log(nu)))
    return float(out) if np.ndim(out) == 0 else out


def eta_complement(u, theta, Z, nu, m, p):
    """1 - eta, from the same log-odds (accurate when eta is near 1)."""
    _check_z(Z, nu)
    lphi, lq = _densities(u, theta, m, p)
    out = expit(-log_odds(lphi, lq, math.log(Z), math.log(nu)))
    return float(out) if np.ndim(out) == 0 else out


def eta_dot(u, theta, Z, nu, m, p):
    """d eta / dZ = -nu phi q / (phi + nu Z q)^2 (equal to -eta (1 - eta) / Z)."""
    _check_z(Z, nu)
    lphi, lq = _densities(u, theta, m, p)
    log_odds(lphi, lq, math.log(Z), math.log(nu))  # raises when both densities vanish
    out = -np.exp(log_eta_dot(lphi, lq, math.log(Z), math.log(nu)))
    return float(out) if np.ndim(out) == 0 else out


def _evaluation(value, dz, per_term):
    value = float(value)
    infinite = not math.isfinite(value)
    if infinite:
        value = math.inf
    return CostEvaluation(value, float(dz), per_term, infinite)


def j_scoring(rule: ScoringRule, theta, Z, s: SampleSet, m, p) -> CostEvaluation:
    """sum_n V(eta(y_n)) + sum_m V(1 - eta(x_m)) with its Z-derivative."""
    _check_z(Z)
    lphi_y, lq_y = _densities(s.y, theta, m, p)
    lphi_x, lq_x = _densities(s.x, theta, m, p)
    v_y, v_x, d_y, d_x = scoring_terms(rule, lphi_y, lq_y, lphi_x, lq_x, math.log(Z), math.log(s.nu))
    value = compensated_sum(v_y) + compensated_sum(v_x)
    dz = compensated_sum(d_y) + compensated_sum(d_x)
    return _evaluation(value, dz, (v_y, v_x))


def j_nce(theta, Z, s: SampleSet, m, p) -> CostEvaluation:
    """Negative Bernoulli log-likelihood of the model-vs-proposal labels."""
    return j_scoring(NEGATIVE_LOG, theta, Z, s, m, p)


def j_mis(theta, Z, s: SampleSet, m, p, weighted: bool = True) -> CostEvaluation:
    """Pooled-mixture cost: every sample is scored against both classes.

    The default weights the two log terms of each pooled point by the class
    priors (a1, a2); its Z-stationary point is the self-IS-with-mix
    estimator for any N, M. ``weighted=False`` gives both terms weight one,
    which has the same stationary point only when N = M.
    """
    _check_z(Z)
    lphi_u, lq_u = _densities(s.pooled, theta, m, p)
    terms, dterms = mis_terms(lphi_u, lq_u, math.log(Z), math.log(s.alpha1), math.log(s.alpha2), weighted)
    return _evaluation(compensated_sum(terms), compensated_sum(dterms), (terms,))


def j_ml(theta, s: SampleSet, m: UnnormalizedModel) -> float:
    """Negative log-likelihood of the model samples; needs an analytic Z."""
    if m.analytic_log_Z is None:
        raise CapabilityError(f"{m.name} has no analytic partition function")
    lphi = np.asarray(m.log_phi(s.y, theta), dtype=float)
    return float(-compensated_sum(lphi - m.analytic_log_Z(theta)))
