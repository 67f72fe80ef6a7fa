"""Acquisition functions over surrogate posteriors (minimization canonical)."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

from .gp import SurrogatePosterior

SIGMA_FLOOR = 1e-12
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def acq_ei(posterior: SurrogatePosterior, f_best: float) -> np.ndarray:
    """Expected improvement below ``f_best``; degenerate sigma falls back to max(gap, 0)."""
    mean = np.asarray(posterior.mean, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(posterior.var, dtype=float), 0.0))
    gap = f_best - mean
    ei = np.maximum(gap, 0.0)
    ok = sigma >= SIGMA_FLOOR
    if np.any(ok):
        z = gap[ok] / sigma[ok]
        phi = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
        ei_ok = gap[ok] * ndtr(z) + sigma[ok] * phi
        ei = ei.copy()
        ei[ok] = np.maximum(ei_ok, 0.0)
    return ei


def acq_lcb(posterior: SurrogatePosterior, kappa: float) -> np.ndarray:
    """Lower confidence bound mean - kappa*sigma (smaller is more promising)."""
    mean = np.asarray(posterior.mean, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(posterior.var, dtype=float), 0.0))
    return mean - kappa * sigma
