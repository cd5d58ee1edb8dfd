"""Short-maturity asymptotics, Monte Carlo and calibration for Asian options
under a Brownian plus Levy-subordinator jump-diffusion."""

from .model import (
    ModelParams,
    Moneyness,
    OptionKind,
    OptionSpec,
    PriceEstimate,
    SubordinatorSpec,
    ValidationError,
    classify,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "ModelParams",
    "Moneyness",
    "OptionKind",
    "OptionSpec",
    "PriceEstimate",
    "SubordinatorSpec",
    "ValidationError",
    "classify",
    "validate",
]
