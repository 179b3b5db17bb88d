"""Small weighted least-squares helpers shared by the analysis modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class FitError(RuntimeError):
    """Raised when a fit is singular or cannot converge."""


@dataclass(frozen=True)
class LinearFit:
    params: np.ndarray
    cov: np.ndarray
    chi2: float
    dof: int

    @property
    def errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))


def weighted_linear_fit(design, y, sigma=None) -> LinearFit:
    """Solve ``y ~ design @ params``.

    With strictly positive ``sigma`` the covariance uses the absolute errors.
    Without them the fit is unweighted and the covariance is scaled by the
    residual variance, so data lying exactly on the model give zero error.
    """
    A = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = A.shape
    absolute = sigma is not None and np.all(np.asarray(sigma, dtype=float) > 0)
    w = 1.0 / np.asarray(sigma, dtype=float) if absolute else np.ones(n)
    Aw = A * w[:, None]
    yw = y * w
    if np.linalg.matrix_rank(Aw) < k:
        raise FitError("design matrix is rank deficient")
    params, *_ = np.linalg.lstsq(Aw, yw, rcond=None)
    resid = yw - Aw @ params
    chi2 = float(resid @ resid)
    dof = n - k
    cov = np.linalg.inv(Aw.T @ Aw)
    if not absolute:
        cov = cov * (chi2 / dof if dof > 0 else 0.0)
    return LinearFit(params=params, cov=cov, chi2=chi2, dof=dof)


def line_fit(x, y, sigma=None) -> LinearFit:
    """Fit ``y = intercept + slope * x``; params are (intercept, slope)."""
    x = np.asarray(x, dtype=float)
    return weighted_linear_fit(np.column_stack([np.ones_like(x), x]), y, sigma)


def binomial_estimate(successes, shots):
    """Fraction and standard error; the error uses the (k+1)/(N+2) estimate so
    that all-dark or all-bright points still carry finite weight."""
    k = np.asarray(successes, dtype=float)
    n = np.asarray(shots, dtype=float)
    p = k / n
    p_tilde = (k + 1.0) / (n + 2.0)
    return p, np.sqrt(p_tilde * (1.0 - p_tilde) / n)
