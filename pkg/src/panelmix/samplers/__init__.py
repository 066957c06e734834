"""Blocked-Gibbs posterior samplers and chain orchestration."""

from panelmix.samplers.transforms import l_of_sigma2, sigma2_of_l
from panelmix.samplers.adapt import AdapterState, adaptive_rwmh
from panelmix.samplers.gibbs import PosteriorDraws, build_model, run_chain

__all__ = [
    "l_of_sigma2",
    "sigma2_of_l",
    "AdapterState",
    "adaptive_rwmh",
    "PosteriorDraws",
    "build_model",
    "run_chain",
]
