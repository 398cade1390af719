"""Partition-function estimation for energy-based models.

Contrastive costs (NCE, pooled-mixture, scoring rules), the bridge, mixture
and importance-sampling estimators of Z they reduce to, and an MSE sweep
harness over a Gaussian test family.
"""

__version__ = "0.1.0"

from .costs import (
    NEGATIVE_LOG,
    QUADRATIC,
    RECIPROCAL,
    CostEvaluation,
    ScoringRule,
    eta,
    eta_complement,
    eta_dot,
    j_ml,
    j_mis,
    j_nce,
    j_scoring,
)
from .errors import (
    CapabilityError,
    DegenerateDensityError,
    DegenerateSamplesError,
    DivergenceError,
    EstimationError,
    EvaluationError,
    NoFeasiblePointError,
    OptimizationError,
    SingularIterateError,
    ZeroDensityError,
)
from .estimators import (
    CONSTANT_BRIDGE,
    OPTIMAL_BRIDGE,
    QUADRATIC_BRIDGE,
    BridgeFunction,
    EstimatorRun,
    FixedPointConfig,
    MultiSampleSet,
    RlrProblem,
    generic_bridge,
    geometric_mean_estimator,
    mis_estimator,
    multi_proposal_bridge,
    optimal_bridge,
    optimal_umbrella,
    quadratic_score_iteration,
    reverse_is,
    rlr_estimate,
    self_is_with_mix,
    standard_is,
    stationary_z,
)
from .experiments import ExperimentSpec, SweepRow, emit_csv, run_theta_sweep, run_z_sweep
from .model import (
    ParameterPoint,
    Proposal,
    SampleSet,
    UnnormalizedModel,
    draw_sample_set,
    gaussian_model,
    gaussian_proposal,
    log_mixture,
    read_sample_set,
    sample_umbrella,
)
from .solvers import Bracket1D, SolveReport, alternate_minimize, fd_gradient, minimize_1d
