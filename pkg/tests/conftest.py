import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ebm_bridge import SampleSet, UnnormalizedModel, gaussian_model, gaussian_proposal

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SQRT_2PI = math.sqrt(2.0 * math.pi)


@pytest.fixture
def model():
    return gaussian_model()


def proportional_model(c, p):
    """phi = c q exactly, so every ratio estimator sees constant weights."""
    return UnnormalizedModel(lambda y, theta: math.log(c) + p.log_q(y), name=f"{c} q")


def random_instance(rng, n_max=50):
    N, M = (int(v) for v in rng.integers(1, n_max + 1, size=2))
    sigma = float(np.exp(rng.uniform(math.log(0.3), math.log(5.0))))
    p = gaussian_proposal(0.0, sigma)
    s = SampleSet(rng.standard_normal(N), sigma * rng.standard_normal(M))
    return gaussian_model(), p, s


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance lines, which fd capture hides for passing tests."""
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
