"""Simulation and single-sample parameter estimation for tumour recurrence."""
from .model import (
    ExpectedClones,
    LimitConstants,
    ModelParams,
    bd_second_moment,
    expected_clones,
    limit_constants,
    mean_curves,
    validate_params,
    zeta,
)

__all__ = [
    "ExpectedClones",
    "LimitConstants",
    "ModelParams",
    "bd_second_moment",
    "expected_clones",
    "limit_constants",
    "mean_curves",
    "validate_params",
    "zeta",
]
__version__ = "0.1.0"
