"""Piecewise-linear regression by (modified) K-plane fitting."""
from .errors import (
    DegenerateSystemError,
    InvalidInputError,
    KPlaneError,
    MonotonicityError,
    ParseError,
    ValidationError,
)
from .model import (
    AffineModel,
    Assignment,
    Dataset,
    FitTrace,
    PiecewiseModel,
    ScalingParams,
    Termination,
    assign_hard,
    mse,
    objective,
    predict,
)
from .solvers import (
    EmptyClusterPolicy,
    MixtureConfig,
    MixtureModel,
    SolverConfig,
    em_e_step,
    em_m_step,
    fit_em,
    fit_kplane,
    fit_mkplane,
    harden,
    hard_update,
    init,
    refine,
)

__version__ = "0.1.0"
