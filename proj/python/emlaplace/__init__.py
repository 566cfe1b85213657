"""EM mixture fitting with a Laplace posterior approximation."""

from ._core import (
    CoinMixture,
    EmConfig,
    EmTrace,
    GaussianMixture,
    LaplacePosterior,
    MStepError,
    NotAtModeError,
    NotNegativeDefiniteError,
    auxiliary,
    divergence,
    e_step,
    em_fit,
    em_step,
    grad_log_joint,
    hessian,
    hvp,
    laplace_posterior,
    log_joint,
    marginal_by_enumeration,
)

__all__ = [
    "CoinMixture",
    "EmConfig",
    "EmTrace",
    "GaussianMixture",
    "LaplacePosterior",
    "MStepError",
    "NotAtModeError",
    "NotNegativeDefiniteError",
    "auxiliary",
    "divergence",
    "e_step",
    "em_fit",
    "em_step",
    "grad_log_joint",
    "hessian",
    "hvp",
    "laplace_posterior",
    "log_joint",
    "marginal_by_enumeration",
]
