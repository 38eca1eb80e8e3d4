"""Closed-form algebra for offset-diagonal matrices and Gaussian ratios.

An offset-diagonal matrix has the form ``A * I + B * 1 1^T``. The covariance
of ``n`` noisy observations of one scalar is of this form, which lets the
tracker update and score clusters in O(n) instead of O(n^3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


class SingularMatrixError(ValueError):
    """Raised when an offset-diagonal matrix has no inverse."""


class DegenerateUpdateError(ValueError):
    """Raised when the innovation variance of an update is not positive."""


@dataclass(frozen=True)
class OffsetDiag:
    """The matrix ``diag_coeff * I + offset_coeff * 1 1^T`` of size ``dim``."""

    dim: int
    diag_coeff: float
    offset_coeff: float

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")

    def is_singular(self) -> bool:
        a, b = self.diag_coeff, self.offset_coeff
        if a == 0.0:
            return True
        return abs(self.dim * b + a) < 1e-12 * max(abs(a), 1.0)

    def dense(self) -> np.ndarray:
        return self.diag_coeff * np.eye(self.dim) + self.offset_coeff * np.ones((self.dim, self.dim))


def offset_diag_inverse(m: OffsetDiag) -> OffsetDiag:
    """Inverse of ``A I + B 1 1^T``, which is again offset-diagonal.

    Raises
    ------
    SingularMatrixError
        If ``A == 0`` or ``B == -A / dim`` to relative tolerance 1e-12.
    """
    if m.is_singular():
        raise SingularMatrixError(f"offset-diagonal matrix is singular: {m}")
    a, b, n = m.diag_coeff, m.offset_coeff, m.dim
    return OffsetDiag(n, 1.0 / a, -b / (n * a * b + a * a))


def offset_diag_det(m: OffsetDiag) -> float:
    """Determinant ``A^(dim-1) * (A + dim * B)``."""
    a, b, n = m.diag_coeff, m.offset_coeff, m.dim
    return a ** (n - 1) * (a + n * b)


def offset_diag_logdet(m: OffsetDiag) -> float:
    """Log-determinant of a positive-definite offset-diagonal matrix."""
    a, b, n = m.diag_coeff, m.offset_coeff, m.dim
    return (n - 1) * math.log(a) + math.log(a + n * b)


def gaussian_ratio_product(x: float, ys, var: float) -> float:
    """Product over ``ys`` of ``N(y | x, var) / N(y | ybar, var)``.

    Equals ``exp(-n (ybar - x)^2 / (2 var))``.
    """
    ys = np.asarray(ys, dtype=float)
    n = ys.size
    ybar = float(ys.mean())
    return math.exp(-n * (ybar - x) ** 2 / (2.0 * var))


def pooled_mean_identity(n_x: float, x_mean: float, n_y: float, y_mean: float) -> float:
    """``n_x (zbar - xbar)^2 + n_y (zbar - ybar)^2`` for the pooled mean ``zbar``.

    Returned via the closed form ``n_x n_y / (n_x + n_y) * (xbar - ybar)^2``.
    """
    return n_x * n_y / (n_x + n_y) * (x_mean - y_mean) ** 2


def fast_gaussian_update(prior_mean, prior_cov, obs_count: int, obs_mean_per_dim, noise_var: float):
    """Condition a window state on ``n`` noisy observations of its first entry.

    Parameters
    ----------
    prior_mean : array of shape (w,) or (w, D)
        Prior mean. Columns are spatial dimensions sharing one covariance.
    prior_cov : array of shape (w, w)
        Prior covariance, shared across dimensions.
    obs_count : int
        Number of observations ``n >= 1``.
    obs_mean_per_dim : float or array of shape (D,)
        Sample mean of the observations in each dimension.
    noise_var : float
        Observation noise variance.

    Returns
    -------
    (posterior_mean, posterior_cov)
    """
    prior_mean = np.asarray(prior_mean, dtype=float)
    prior_cov = np.asarray(prior_cov, dtype=float)
    gain_col = prior_cov[:, 0]
    innov = obs_count * prior_cov[0, 0] + noise_var
    if not innov > 0.0:
        raise DegenerateUpdateError(f"innovation variance {innov} is not positive")
    scale = obs_count / innov
    resid = np.asarray(obs_mean_per_dim, dtype=float) - prior_mean[0]
    post_mean = prior_mean + scale * np.multiply.outer(gain_col, resid)
    post_cov = prior_cov - scale * np.outer(gain_col, gain_col)
    post_cov = 0.5 * (post_cov + post_cov.T)
    return post_mean, post_cov


def fast_marginal_loglik(pred_mean_1: float, pred_var_1: float, ys, noise_var: float) -> float:
    """``log N(ys | m 1, v 1 1^T + s I)`` evaluated in O(n)."""
    ys = np.asarray(ys, dtype=float)
    n = ys.size
    ybar = float(ys.mean())
    sq_dev = float(np.sum((ys - ybar) ** 2))
    return marginal_loglik_from_stats(pred_mean_1, pred_var_1, n, ybar, sq_dev, noise_var)


def marginal_loglik_from_stats(pred_mean_1, pred_var_1, n, ybar, sq_dev, noise_var):
    """Same as :func:`fast_marginal_loglik` from sufficient statistics.

    ``sq_dev`` is ``sum((y - ybar)^2)``. Inputs broadcast, so arrays of
    clusters, tracks and classes can be scored at once.
    """
    total = noise_var + n * pred_var_1
    logdet = (n - 1) * np.log(noise_var) + np.log(total)
    quad = sq_dev / noise_var + n * (ybar - pred_mean_1) ** 2 / total
    return -0.5 * (n * LOG_2PI + logdet + quad)


def isotropic_loglik_at_mean(n, sq_dev, noise_var, dims: int = 1):
    """``sum log N(y | ybar, s I)`` over ``n`` points with the given ``sq_dev``.

    ``sq_dev`` is summed over dimensions.
    """
    return -0.5 * (n * dims * (LOG_2PI + np.log(noise_var)) + sq_dev / noise_var)


def log_sum_exp(x, axis=None):
    """``log(sum(exp(x)))`` for short arrays; all ``-inf`` gives ``-inf``."""
    x = np.asarray(x, dtype=float)
    top = np.max(x, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - top), axis=axis, keepdims=True)) + top
    return out.squeeze(axis) if axis is not None else float(out.reshape(()))
