"""Composable Bayesian optimization: surrogates, acquisitions, optimizer, suggester."""

from __future__ import annotations

from .acquisition import acq_ei, acq_lcb
from .candidates import generate_candidates, optimize_acquisition
from .forest import ForestModel, forest_fit, forest_predict, iter_leaves
from .gp import (GpFitError, GpModel, SurrogatePosterior, gp_fit, gp_predict,
                 gp_refit_light, matern52)
from .strategy import BatchContext, BoStrategy

__all__ = [
    "BatchContext",
    "BoStrategy",
    "ForestModel",
    "GpFitError",
    "GpModel",
    "SurrogatePosterior",
    "acq_ei",
    "acq_lcb",
    "forest_fit",
    "forest_predict",
    "generate_candidates",
    "gp_fit",
    "gp_predict",
    "gp_refit_light",
    "iter_leaves",
    "matern52",
    "optimize_acquisition",
]
