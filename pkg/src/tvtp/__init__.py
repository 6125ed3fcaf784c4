"""Markov-switching autoregressions with covariate-driven transition probabilities."""

from .estimate import EstimationResult, FitOptions, fit
from .estimator import MarkovSwitchingAR
from .exceptions import DomainError, EstimationError, NumericError, SizeError, TVTPError
from .filter import Dataset, InitRule, fisher_score, forward_filter, loglik, smooth
from .mc import MCDesign, MCReport, relabel, run_monte_carlo, summarize
from .mixing import exact_conditional_tv, product_bound, random_mixing_check
from .model import ModelConfig, ParamVector, Variant, design_params, transition_matrices
from .simulate import DgpSpec, simulate_dgp

__all__ = [
    "Dataset",
    "DgpSpec",
    "DomainError",
    "EstimationError",
    "EstimationResult",
    "FitOptions",
    "InitRule",
    "MCDesign",
    "MCReport",
    "MarkovSwitchingAR",
    "ModelConfig",
    "NumericError",
    "ParamVector",
    "SizeError",
    "TVTPError",
    "Variant",
    "exact_conditional_tv",
    "fisher_score",
    "fit",
    "forward_filter",
    "loglik",
    "design_params",
    "product_bound",
    "random_mixing_check",
    "relabel",
    "run_monte_carlo",
    "simulate_dgp",
    "smooth",
    "summarize",
    "transition_matrices",
]
