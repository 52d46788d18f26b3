"""Robust Bayesian-style inference with possibility functions and consistency-based discounting."""

from .core import (
    Consistency,
    ConstantPossibility,
    DegenerateError,
    DomainError,
    GridPossibility,
    InconsistentError,
    PossibilityError,
    PossibilityFunction,
    UnboundedError,
    VarianceUndefinedError,
    bayes_update,
    combine,
    grid_sup,
    likelihood_info,
    mode,
    normalize,
    power,
    pushforward,
    variance,
)
from .engine import DiscountPolicy, SplitConfig, discount_exponent, robust_step, sequential_update, split_step
from .estimators import (
    PossibilisticChangePointDetector,
    PossibilisticKalmanFilter,
    RobustNIWEstimator,
    RobustNormalGamma,
    SoftUniformEstimator,
)
from .families import (
    BetaPoss,
    BinomialLikelihood,
    GammaPoss,
    GaussianLikelihood,
    GaussianPoss,
    InverseGammaPoss,
    InverseWishartPoss,
    NIWPoss,
    NormalGammaPoss,
    ParetoPoss,
    UniformLikelihood,
)

__version__ = "0.1.0"
