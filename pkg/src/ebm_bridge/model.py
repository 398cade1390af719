"""Unnormalized models, proposals, paired sample sets and umbrella draws."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .errors import CapabilityError, DegenerateDensityError, EvaluationError
from .numerics import as_generator

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class UnnormalizedModel:
    """An energy-based model known through its unnormalized log density.

    ``log_phi(y, theta)`` returns natural-log values with the shape of ``y``
    (for vector-valued points the model decides which trailing axis holds the
    coordinates). ``analytic_log_Z`` and ``sampler`` only exist for test models
    whose partition function is known; ``sampler(theta, count, seed)`` draws
    from the normalized density.
    """

    log_phi: Callable[[Any, Any], np.ndarray]
    analytic_log_Z: Optional[Callable[[Any], float]] = None
    sampler: Optional[Callable[[Any, int, Any], np.ndarray]] = None
    name: str = "model"

    def log_Z(self, theta):
        if self.analytic_log_Z is None:
            raise CapabilityError(f"{self.name} has no analytic partition function")
        return self.analytic_log_Z(theta)

    def sample(self, theta, count, seed):
        if self.sampler is None:
            raise CapabilityError(f"{self.name} has no sampler")
        return self.sampler(theta, count, seed)


@dataclass(frozen=True)
class Proposal:
    """A normalized density q with exact log density and a sampler."""

    log_q: Callable[[Any], np.ndarray]
    sample: Callable[[int, Any], np.ndarray]
    params: dict = field(default_factory=dict)


def gaussian_model() -> UnnormalizedModel:
    """phi(y|theta) = exp(-y^2 / (2 theta^2)), Z(theta) = sqrt(2 pi theta^2)."""

    def log_phi(y, theta):
        y = np.asarray(y, dtype=float)
        theta = np.asarray(theta, dtype=float)
        return -(y * y) / (2.0 * theta * theta)

    def analytic_log_Z(theta):
        theta = np.asarray(theta, dtype=float)
        out = 0.5 * (LOG_2PI + np.log(theta * theta))
        return float(out) if out.ndim == 0 else out

    def sampler(theta, count, seed):
        rng = as_generator(seed)
        return float(theta) * rng.standard_normal(int(count))

    return UnnormalizedModel(log_phi, analytic_log_Z, sampler, name="gaussian")


def gaussian_proposal(mu: float = 0.0, sigma: float = 1.0) -> Proposal:
    """Normal(mu, sigma^2) proposal."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    mu = float(mu)
    sigma = float(sigma)
    log_norm = 0.5 * LOG_2PI + math.log(sigma)

    def log_q(y):
        z = (np.asarray(y, dtype=float) - mu) / sigma
        return -0.5 * z * z - log_norm

    def sample(count, seed):
        rng = as_generator(seed)
        return mu + sigma * rng.standard_normal(int(count))

    return Proposal(log_q, sample, {"family": "gaussian", "mu": mu, "sigma": sigma})


@dataclass(frozen=True)
class ParameterPoint:
    """A candidate (theta, Z) pair."""

    theta: Any
    Z: float

    def __post_init__(self):
        if not self.Z > 0:
            raise ValueError(f"Z must be positive, got {self.Z}")


@dataclass(frozen=True)
class SampleSet:
    """Observed model draws ``y`` (N of them) and proposal draws ``x`` (M)."""

    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if len(y) < 1 or len(x) < 1:
            raise ValueError("a SampleSet needs at least one point on each side")
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def N(self) -> int:
        return len(self.y)

    @property
    def M(self) -> int:
        return len(self.x)

    @property
    def alpha1(self) -> float:
        return self.N / (self.N + self.M)

    @property
    def alpha2(self) -> float:
        return self.M / (self.N + self.M)

    @property
    def nu(self) -> float:
        return self.M / self.N

    @property
    def pooled(self) -> np.ndarray:
        return np.concatenate([self.y, self.x])

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "value"])
            for v in self.y:
                w.writerow(["model", repr(float(v))])
            for v in self.x:
                w.writerow(["proposal", repr(float(v))])


def read_sample_csv(path):
    """Read ``label,value`` rows; returns a dict label -> 1-D array."""
    groups: dict[str, list[float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            groups.setdefault(row["label"].strip(), []).append(float(row["value"]))
    return {k: np.asarray(v) for k, v in groups.items()}


def read_sample_set(path) -> SampleSet:
    groups = read_sample_csv(path)
    unknown = set(groups) - {"model", "proposal"}
    if unknown:
        raise ValueError(f"unknown labels in {path}: {sorted(unknown)}")
    return SampleSet(groups.get("model", np.empty(0)), groups.get("proposal", np.empty(0)))


def log_mixture(y, theta, Z, s: SampleSet, p: Proposal, m: UnnormalizedModel):
    """log(alpha1 phi(y|theta)/Z + alpha2 q(y)) for the deterministic mixture."""
    if not Z > 0:
        raise ValueError(f"Z must be positive, got {Z}")
    lphi = np.asarray(m.log_phi(y, theta), dtype=float)
    lq = np.asarray(p.log_q(y), dtype=float)
    if not np.all(np.isfinite(lphi)):
        raise EvaluationError("log_phi is not finite at the evaluation point")
    if not np.all(np.isfinite(lq)):
        raise EvaluationError("log_q is not finite at the evaluation point")
    out = np.logaddexp(math.log(s.alpha1) + lphi - math.log(Z), math.log(s.alpha2) + lq)
    return float(out) if out.ndim == 0 else out


def draw_sample_set(m: UnnormalizedModel, theta_tr, p: Proposal, N: int, M: int, seed) -> SampleSet:
    """N model draws and M proposal draws from two child streams of ``seed``."""
    if m.sampler is None:
        raise CapabilityError(f"{m.name} has no sampler; observed data must be supplied")
    if N < 1 or M < 1:
        raise ValueError("N and M must be at least 1")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    model_ss, prop_ss = ss.spawn(2)
    y = m.sample(theta_tr, N, np.random.default_rng(model_ss))
    x = p.sample(M, np.random.default_rng(prop_ss))
    return SampleSet(y, x)


def umbrella_accept_prob(y, theta, Z_ref, p: Proposal, m: UnnormalizedModel):
    """|phibar - q| / (phibar + q) at y, i.e. |tanh((log phibar - log q)/2)|."""
    lphibar = np.asarray(m.log_phi(y, theta), dtype=float) - math.log(Z_ref)
    lq = np.asarray(p.log_q(y), dtype=float)
    return np.abs(np.tanh(0.5 * (lphibar - lq)))


def sample_umbrella(
    m: UnnormalizedModel,
    theta,
    Z_ref: float,
    p: Proposal,
    count: int,
    seed,
    *,
    window: int = 1_000_000,
    min_rate: float = 1e-6,
    return_rate: bool = False,
):
    """Draw from rbar(y) ∝ |phi(y|theta)/Z_ref - q(y)| by rejection.

    The envelope is g = (phibar + q)/2, sampled by picking a component with
    probability 1/2; a candidate is kept with probability
    |phibar - q| / (phibar + q). ``m.sampler`` must draw from phi/Z_ref, so
    Z_ref has to be the true partition value at ``theta``. Only scalar
    (1-D) points are supported.
    """
    if m.sampler is None:
        raise CapabilityError(f"{m.name} has no sampler")
    if not Z_ref > 0:
        raise ValueError("Z_ref must be positive")
    rng = as_generator(seed)
    count = int(count)
    out: list[np.ndarray] = []
    n_acc = 0
    n_prop = 0
    batch = max(4096, 4 * count)
    while n_acc < count:
        n_model = int(rng.binomial(batch, 0.5))
        cand = np.concatenate([m.sample(theta, n_model, rng), p.sample(batch - n_model, rng)])
        cand = rng.permutation(cand)
        keep = rng.random(batch) < umbrella_accept_prob(cand, theta, Z_ref, p, m)
        acc = cand[keep]
        out.append(acc)
        n_acc += len(acc)
        n_prop += batch
        if n_prop >= window and n_acc < min_rate * n_prop:
            raise DegenerateDensityError(
                f"umbrella acceptance rate {n_acc / n_prop:.3g} below {min_rate:g} "
                f"after {n_prop} proposals; phi/Z_ref and q coincide"
            )
    draws = np.concatenate(out)[:count]
    if return_rate:
        return draws, n_acc / n_prop
    return draws
