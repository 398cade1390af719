"""Exception types raised by estimators, samplers and solvers."""


class EstimationError(Exception):
    """Base class for computation failures (CLI exit code 3)."""


class EvaluationError(EstimationError):
    """A density evaluated to a non-finite value where it must be finite."""


class CapabilityError(EstimationError):
    """The model lacks a required capability (sampler, analytic log Z)."""


class ZeroDensityError(EstimationError):
    """A density that appears in a denominator is exactly zero."""


class DegenerateSamplesError(EstimationError):
    """A denominator sum of a ratio estimator vanished."""


class DivergenceError(EstimationError):
    """A fixed-point iterate became non-finite or non-positive."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = tuple(trace)


class SingularIterateError(EstimationError):
    """An umbrella weight |phi - Z q| vanished at the current iterate."""

    def __init__(self, message, z=None, index=None, trace=()):
        super().__init__(message)
        self.z = z
        self.index = index
        self.trace = tuple(trace)


class DegenerateDensityError(EstimationError):
    """The umbrella density |phi/Z - q| is (numerically) zero everywhere."""


class NoFeasiblePointError(EstimationError):
    """An objective is +inf on every grid point of its bracket."""


class OptimizationError(EstimationError):
    """A descent method found no descent direction before converging."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate
