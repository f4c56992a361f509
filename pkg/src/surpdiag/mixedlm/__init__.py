"""Linear mixed-effects regression by profiled REML."""

from .backend import HAVE_COMPILED, NotPositiveDefiniteError, make_factor
from .design import (
    DesignMatrices,
    RandomTerm,
    RegressionSpec,
    build_design,
    standardize,
    theta_dim,
    theta_init,
)
from .reml import (
    FitOptions,
    FitResult,
    FixedEffectsError,
    NonConvergenceError,
    REMLProblem,
    ResidualRecord,
    fit,
    reml_deviance,
    residuals,
)

__all__ = [
    "HAVE_COMPILED", "NotPositiveDefiniteError", "make_factor",
    "DesignMatrices", "RandomTerm", "RegressionSpec", "build_design",
    "standardize", "theta_dim", "theta_init",
    "FitOptions", "FitResult", "FixedEffectsError", "NonConvergenceError",
    "REMLProblem", "ResidualRecord", "fit", "reml_deviance", "residuals",
]
