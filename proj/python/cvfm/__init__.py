"""Covariate-varying sparse factor model for count tables."""

from ._cvfm import (
    ContractError,
    NumericalError,
    ParseError,
    choose_k_by_pca,
    evaluate,
    fit,
    rounded_pmf,
    sigma_at,
    simulate,
    summarize,
)

__all__ = [
    "ContractError",
    "NumericalError",
    "ParseError",
    "choose_k_by_pca",
    "evaluate",
    "fit",
    "rounded_pmf",
    "sigma_at",
    "simulate",
    "summarize",
]
