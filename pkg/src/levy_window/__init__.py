"""Tail-index estimation on a finite-horizon stable scaling window and
horizon-correct risk metrics built on the tau**(1/alpha) law."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .exceptions import (
    DataError,
    DegenerateScaleError,
    DomainError,
    EstimationError,
    FitInfeasibleError,
    LevyWindowError,
    MomentDivergenceError,
    NotALevyWindowError,
    QuadratureError,
)
from .stable import (
    MomentConstants,
    StableParams,
    TailConstants,
    abs_p_moment,
    moment_constants,
    neg_part_p_moment,
    stable_cdf,
    stable_pdf,
    stable_quantile,
    stable_sample,
    tail_constants,
    tail_mean,
    truncated_second_moment,
)
