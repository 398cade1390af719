import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from conftest import SQRT_2PI
from ebm_bridge import (
    CapabilityError,
    ParameterPoint,
    SampleSet,
    UnnormalizedModel,
    draw_sample_set,
    gaussian_model,
    gaussian_proposal,
    log_mixture,
    read_sample_set,
    sample_umbrella,
)
from ebm_bridge.errors import DegenerateDensityError, EvaluationError


def test_gaussian_log_z_matches_quadrature(model):
    for theta in (0.3, 1.0, 2.5):
        val, _ = integrate.quad(lambda y: math.exp(model.log_phi(y, theta)), -np.inf, np.inf)
        assert model.log_Z(theta) == pytest.approx(math.log(val), rel=1e-10)


def test_proposal_is_normalized():
    p = gaussian_proposal(0.4, 1.7)
    val, _ = integrate.quad(lambda y: math.exp(p.log_q(y)), -np.inf, np.inf)
    assert val == pytest.approx(1.0, rel=1e-10)


def test_proposal_rejects_nonpositive_sigma():
    with pytest.raises(ValueError):
        gaussian_proposal(0.0, 0.0)


def test_capabilities_missing():
    m = UnnormalizedModel(lambda y, t: -y * y)
    with pytest.raises(CapabilityError):
        m.log_Z(1.0)
    with pytest.raises(CapabilityError):
        draw_sample_set(m, 1.0, gaussian_proposal(), 3, 3, 0)


def test_parameter_point_needs_positive_z():
    ParameterPoint(1.0, 2.0)
    with pytest.raises(ValueError):
        ParameterPoint(1.0, 0.0)


@pytest.mark.parametrize("N,M,a1,nu", [(20, 20, 0.5, 1.0), (5, 35, 0.125, 7.0), (35, 5, 0.875, 1 / 7)])
def test_sample_set_weights(N, M, a1, nu):
    s = SampleSet(np.zeros(N), np.zeros(M))
    assert s.alpha1 == a1
    assert s.nu == pytest.approx(nu, rel=1e-15)
    assert s.alpha1 + s.alpha2 == pytest.approx(1.0, abs=2.3e-16)


@given(st.integers(1, 500), st.integers(1, 500))
def test_weight_identities(N, M):
    s = SampleSet(np.zeros(N), np.zeros(M))
    assert abs(s.alpha1 + s.alpha2 - 1.0) <= 2.3e-16
    assert abs(s.nu * s.alpha1 - s.alpha2) <= 2.3e-16 * max(1.0, s.alpha2)


def test_sample_set_is_read_only():
    s = SampleSet([1.0, 2.0], [3.0])
    with pytest.raises(ValueError):
        s.y[0] = 5.0


def test_empty_sample_set_rejected():
    with pytest.raises(ValueError):
        SampleSet([], [1.0])


def test_log_mixture_identical_densities(model):
    s = SampleSet([0.0], [0.0])
    p = gaussian_proposal(0.0, 1.0)
    assert log_mixture(0.0, 1.0, SQRT_2PI, s, p, model) == pytest.approx(-0.9189385332046727, rel=1e-15)
    for y in (-2.0, 0.3, 4.0):
        assert log_mixture(y, 1.0, SQRT_2PI, s, p, model) == pytest.approx(float(p.log_q(y)), rel=1e-14)


def test_log_mixture_two_term_value(model):
    # direct two-term evaluation at 40 digits
    s = SampleSet([0.0] * 3, [0.0] * 3)
    val = log_mixture(1.0, 1.0, SQRT_2PI, s, gaussian_proposal(0.0, 2.0), model)
    assert val == pytest.approx(-1.5654129220231546, rel=1e-14)


@given(
    st.floats(-8, 8),
    st.floats(0.2, 5),
    st.floats(0.01, 100),
    st.integers(1, 40),
    st.integers(1, 40),
)
def test_log_mixture_dominates_components(y, sigma, Z, N, M):
    m = gaussian_model()
    p = gaussian_proposal(0.0, sigma)
    s = SampleSet(np.zeros(N), np.zeros(M))
    lm = log_mixture(y, 1.0, Z, s, p, m)
    assert lm >= math.log(s.alpha1) + float(m.log_phi(y, 1.0)) - math.log(Z) - 1e-12
    assert lm >= math.log(s.alpha2) + float(p.log_q(y)) - 1e-12


def test_log_mixture_rejects_bad_density():
    m = UnnormalizedModel(lambda y, t: np.where(np.asarray(y) > 0, np.nan, 0.0))
    s = SampleSet([0.0], [0.0])
    with pytest.raises(EvaluationError, match="log_phi"):
        log_mixture(1.0, 1.0, 1.0, s, gaussian_proposal(), m)


def test_draw_sample_set_deterministic(model):
    p = gaussian_proposal(0.0, 1.0)
    a = draw_sample_set(model, 1.0, p, 5, 5, 7)
    b = draw_sample_set(model, 1.0, p, 5, 5, 7)
    assert a.y.tobytes() == b.y.tobytes() and a.x.tobytes() == b.x.tobytes()
    c = draw_sample_set(model, 1.0, p, 5, 5, 8)
    assert not np.array_equal(a.y, c.y)


def test_draw_sample_set_variance(model):
    s = draw_sample_set(model, 1.0, gaussian_proposal(), 100_000, 1, 1)
    # var of the sample variance of a normal is 2 theta^4 / (n - 1)
    se = math.sqrt(2.0 / (len(s.y) - 1))
    assert abs(np.var(s.y, ddof=1) - 1.0) < 3 * se


def test_sample_csv_roundtrip(tmp_path, model):
    s = draw_sample_set(model, 1.0, gaussian_proposal(0, 2), 4, 6, 3)
    path = tmp_path / "s.csv"
    s.to_csv(path)
    assert path.read_text().splitlines()[0] == "label,value"
    r = read_sample_set(path)
    assert np.array_equal(r.y, s.y) and np.array_equal(r.x, s.x)


def _umbrella_cdf(sigma):
    """CDF of |phibar - q| normalized, by adaptive quadrature."""
    p = stats.norm(0, sigma)
    f = lambda y: abs(stats.norm.pdf(y) - p.pdf(y))
    c = math.sqrt(2 * math.log(sigma) * sigma**2 / (sigma**2 - 1))
    pts = [-c, 0.0, c]
    total = sum(integrate.quad(f, a, b)[0] for a, b in zip([-np.inf] + pts, pts + [np.inf]))

    def cdf(x):
        x = np.atleast_1d(x)
        out = np.empty(len(x))
        for i, v in enumerate(x):
            edges = [e for e in pts if e < v]
            segs = zip([-np.inf] + edges, edges + [v])
            out[i] = sum(integrate.quad(f, a, b)[0] for a, b in segs) / total
        return out

    return cdf, total


def test_umbrella_acceptance_rate_matches_quadrature(model):
    _, total = _umbrella_cdf(2.0)
    draws, rate = sample_umbrella(model, 1.0, SQRT_2PI, gaussian_proposal(0, 2), 20_000, 5, return_rate=True)
    assert total / 2 == pytest.approx(0.32267456883476866, rel=1e-8)
    # rate is a binomial proportion over >= 60k proposals
    assert abs(rate - total / 2) < 0.01


def test_umbrella_ks_against_quadrature_cdf(model):
    cdf, _ = _umbrella_cdf(2.0)
    draws = np.sort(sample_umbrella(model, 1.0, SQRT_2PI, gaussian_proposal(0, 2), 20_000, 11))
    grid = np.linspace(-6, 6, 241)
    F = cdf(grid)
    emp = np.searchsorted(draws, grid, side="right") / len(draws)
    assert np.max(np.abs(emp - F)) < 0.015


def test_umbrella_degenerate_when_densities_coincide(model):
    with pytest.raises(DegenerateDensityError):
        sample_umbrella(model, 1.0, SQRT_2PI, gaussian_proposal(0, 1), 10, 0, window=50_000)


def test_umbrella_seed_determinism(model):
    p = gaussian_proposal(0, 2)
    a = sample_umbrella(model, 1.0, SQRT_2PI, p, 100, 42)
    b = sample_umbrella(model, 1.0, SQRT_2PI, p, 100, 42)
    assert np.array_equal(a, b)
