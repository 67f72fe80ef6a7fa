"""Gaussian-process surrogate: Matérn-5/2 ARD kernel, multi-start LML fit.

Targets are standardized to zero mean / unit variance before fitting and
predictions are mapped back, so the prior mean is the data mean and the
kernel grid is scale-free. Hyperparameters come from a coarse grid followed
by coordinate ascent with multiplicative steps; every accepted step increases
the log marginal likelihood, so the search is monotone by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

NOISE_FLOOR = 1e-8
JITTER_MAX = 1e-2

_LS_GRID = (0.05, 0.1, 0.3, 1.0, 3.0)
_SIGNAL_GRID = (0.5, 1.0, 2.0)
_NOISE_GRID = (1e-8, 1e-6, 1e-4, 1e-2)
_STEP_FACTORS = (0.25, 0.5, 2.0, 4.0)
_MAX_SWEEPS = 8


@dataclass(frozen=True)
class SurrogatePosterior:
    """Predictive mean and (non-negative) variance per query point."""

    mean: np.ndarray
    var: np.ndarray


@dataclass
class GpModel:
    x: np.ndarray
    y: np.ndarray            # standardized targets
    y_mean: float
    y_std: float
    length_scales: np.ndarray
    signal_var: float
    noise_var: float
    chol: np.ndarray         # lower factor of K + noise*I (+ jitter)
    alpha: np.ndarray
    jitter: float
    log_marginal: float


class GpFitError(Exception):
    pass


def matern52(x1: np.ndarray, x2: np.ndarray, length_scales: np.ndarray,
             signal_var: float) -> np.ndarray:
    d = (x1[:, None, :] - x2[None, :, :]) / length_scales
    r = np.sqrt(np.maximum((d * d).sum(axis=-1), 0.0))
    sr5 = math.sqrt(5.0) * r
    return signal_var * (1.0 + sr5 + (5.0 / 3.0) * r * r) * np.exp(-sr5)


def _factorize(k: np.ndarray, noise_var: float) -> tuple[np.ndarray, float]:
    """Cholesky of K + noise*I with jitter escalation (x10 up to JITTER_MAX)."""
    n = k.shape[0]
    jitter = 0.0
    while True:
        try:
            factor, _ = cho_factor(k + (noise_var + jitter) * np.eye(n), lower=True)
            return np.tril(factor), jitter
        except np.linalg.LinAlgError:
            jitter = 1e-10 if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX:
                raise GpFitError("covariance not positive definite even at max jitter") from None


def _log_marginal(x: np.ndarray, y: np.ndarray, length_scales: np.ndarray,
                  signal_var: float, noise_var: float) -> float:
    k = matern52(x, x, length_scales, signal_var)
    try:
        chol, _ = _factorize(k, noise_var)
    except GpFitError:
        return -np.inf
    alpha = cho_solve((chol, True), y)
    n = len(y)
    return float(-0.5 * y @ alpha - np.log(np.diag(chol)).sum() - 0.5 * n * math.log(2 * math.pi))


def gp_fit(x: np.ndarray, y: np.ndarray) -> GpModel:
    """Fit kernel hyperparameters by maximizing the log marginal likelihood."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if x.shape[0] != y.shape[0] or x.shape[0] < 1:
        raise GpFitError(f"shape mismatch: {x.shape} vs {y.shape}")
    if not np.isfinite(x).all() or not np.isfinite(y).all():
        raise GpFitError("non-finite training data")
    d = x.shape[1]

    y_mean = float(y.mean())
    y_std = float(y.std())
    if y_std < 1e-12:
        y_std = 1.0
    ys = (y - y_mean) / y_std

    best_params = None
    best_lml = -np.inf
    for ls in _LS_GRID:
        for sv in _SIGNAL_GRID:
            for nv in _NOISE_GRID:
                lml = _log_marginal(x, ys, np.full(d, ls), sv, nv)
                if lml > best_lml:
                    best_lml = lml
                    best_params = (np.full(d, ls), sv, nv)
    if best_params is None:
        raise GpFitError("no admissible hyperparameters")

    length_scales, signal_var, noise_var = best_params
    length_scales = length_scales.copy()
    for _ in range(_MAX_SWEEPS):
        improved = False
        for dim in range(d + 2):
            for factor in _STEP_FACTORS:
                if dim < d:
                    trial_ls = length_scales.copy()
                    trial_ls[dim] = min(max(trial_ls[dim] * factor, 1e-3), 1e3)
                    trial = (trial_ls, signal_var, noise_var)
                elif dim == d:
                    trial = (length_scales, min(max(signal_var * factor, 1e-4), 1e4), noise_var)
                else:
                    trial = (length_scales, signal_var,
                             min(max(noise_var * factor, NOISE_FLOOR), 1.0))
                lml = _log_marginal(x, ys, *trial)
                if lml > best_lml + 1e-10:
                    best_lml = lml
                    length_scales, signal_var, noise_var = trial
                    length_scales = length_scales.copy()
                    improved = True
        if not improved:
            break

    noise_var = max(noise_var, NOISE_FLOOR)
    k = matern52(x, x, length_scales, signal_var)
    chol, jitter = _factorize(k, noise_var)
    alpha = cho_solve((chol, True), ys)
    return GpModel(x=x, y=ys, y_mean=y_mean, y_std=y_std, length_scales=length_scales,
                   signal_var=signal_var, noise_var=noise_var, chol=chol, alpha=alpha,
                   jitter=jitter, log_marginal=best_lml)


def gp_predict(model: GpModel, xq: np.ndarray) -> SurrogatePosterior:
    """Latent posterior at the query points, un-standardized."""
    xq = np.atleast_2d(np.asarray(xq, dtype=float))
    ks = matern52(xq, model.x, model.length_scales, model.signal_var)
    mean_s = ks @ model.alpha
    v = solve_triangular(model.chol, ks.T, lower=True)
    var_s = np.maximum(model.signal_var - (v * v).sum(axis=0), 0.0)
    return SurrogatePosterior(mean=mean_s * model.y_std + model.y_mean,
                              var=var_s * model.y_std ** 2)


def gp_refit_light(model: GpModel, x_extra: np.ndarray, y_extra: np.ndarray) -> GpModel:
    """Re-factorize with extra rows, keeping the fitted hyperparameters."""
    x_extra = np.atleast_2d(np.asarray(x_extra, dtype=float))
    y_extra = np.asarray(y_extra, dtype=float).ravel()
    x = np.vstack([model.x, x_extra])
    ys = np.concatenate([model.y, (y_extra - model.y_mean) / model.y_std])
    k = matern52(x, x, model.length_scales, model.signal_var)
    chol, jitter = _factorize(k, model.noise_var)
    alpha = cho_solve((chol, True), ys)
    return GpModel(x=x, y=ys, y_mean=model.y_mean, y_std=model.y_std,
                   length_scales=model.length_scales, signal_var=model.signal_var,
                   noise_var=model.noise_var, chol=chol, alpha=alpha, jitter=jitter,
                   log_marginal=model.log_marginal)
