"""Integrated squared-exponential motion model on a sliding position window.

The state of a track holds its most recent positions, newest first. A track
younger than the window uses a growing transition that appends one position
per step; afterwards a fixed-size transition slides the window.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import ndtr

_SQRT_2PI = math.sqrt(2.0 * math.pi)
COND_LIMIT = 1e12


class IllConditionedGramWarning(RuntimeWarning):
    """A Gram matrix was too ill-conditioned and was regularized."""


@dataclass(frozen=True)
class IseClassParams:
    sigma2: float
    ell: float
    window: int = 10
    step: float = 1.0

    def __post_init__(self):
        if not (self.sigma2 > 0 and self.ell > 0 and self.step > 0):
            raise ValueError(f"sigma2, ell and step must be positive: {self}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")


@dataclass(frozen=True)
class TransitionPair:
    """Transition matrix, its prediction coefficients and the driving noise.

    ``f_matrix`` maps a state of ``window_len`` positions to the next state.
    Only the first entry of the next state receives noise, with variance
    ``noise_var``.
    """

    f_matrix: np.ndarray
    coeffs: np.ndarray
    noise_var: float
    window_len: int
    regularized: bool = False


def se_cov(t, t2, params: IseClassParams):
    return params.sigma2 * np.exp(-((np.asarray(t) - t2) ** 2) / (2.0 * params.ell**2))


def xi(x, a, b):
    """Antiderivative of ``Phi((x - a) / b)`` in ``x``."""
    z = (np.asarray(x, dtype=float) - a) / b
    density = np.exp(-0.5 * z * z) / (b * _SQRT_2PI)
    return (x - a) * ndtr(z) + b * b * density


def ise_cov(t, t2, params: IseClassParams):
    """Covariance of the SE process integrated over ``[0, t]`` and ``[0, t2]``."""
    t = np.asarray(t, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    ell, s2 = params.ell, params.sigma2
    return _SQRT_2PI * ell * s2 * (xi(t, 0.0, ell) + xi(0.0, t2, ell) - xi(t, t2, ell)) - s2 * ell * ell


def gram(times, params: IseClassParams) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    g = ise_cov(times[:, None], times[None, :], params)
    return 0.5 * (g + g.T)


def _regression(train_times, target_time, params: IseClassParams):
    """Coefficients and residual variance of GP regression onto ``target_time``."""
    train_times = np.asarray(train_times, dtype=float)
    if train_times.size == 0:
        return np.zeros(0), float(ise_cov(target_time, target_time, params)), False
    cgram = gram(train_times, params)
    cross = ise_cov(train_times, target_time, params)
    regularized = False
    if np.linalg.cond(cgram) > COND_LIMIT:
        warnings.warn(
            f"iSE Gram matrix for sigma2={params.sigma2}, ell={params.ell}, "
            f"size {train_times.size} exceeds condition number {COND_LIMIT:g}; adding jitter",
            IllConditionedGramWarning,
            stacklevel=3,
        )
        cgram = cgram + 1e-9 * params.sigma2 * params.ell**2 * np.eye(train_times.size)
        regularized = True
    coeffs = cho_solve(cho_factor(cgram, lower=True), cross)
    resid = float(ise_cov(target_time, target_time, params) - cross @ coeffs)
    if resid < -1e-9:
        raise ValueError(f"negative transition noise {resid} for {params}")
    return coeffs, max(resid, 0.0), regularized


def mature_transition(params: IseClassParams) -> TransitionPair:
    d, step = params.window, params.step
    times = step * np.arange(d - 1, 0, -1, dtype=float)
    f, q, reg = _regression(times, d * step, params)
    mat = np.zeros((d, d))
    mat[0, : d - 1] = f
    mat[0, d - 1] = 1.0 - f.sum()
    mat[1:, :-1] = np.eye(d - 1)
    return TransitionPair(mat, f, q, d, reg)


def growing_transition(params: IseClassParams, age: int) -> TransitionPair:
    """Transition for a state of ``age`` positions into ``age + 1`` positions."""
    if not 1 <= age < params.window:
        raise ValueError(f"age must be in [1, {params.window - 1}], got {age}")
    step = params.step
    times = step * np.arange(age, 0, -1, dtype=float)
    g, r, reg = _regression(times, (age + 1) * step, params)
    mat = np.zeros((age + 1, age))
    mat[0, :] = g
    mat[0, age - 1] += 1.0 - g.sum()
    mat[1:, :] = np.eye(age)
    return TransitionPair(mat, g, r, age, reg)


class ClassDynamics:
    """All transitions of one class, built once and indexed by state length."""

    def __init__(self, params: IseClassParams):
        self.params = params
        self._by_len = {}
        for w in range(1, params.window):
            self._by_len[w] = growing_transition(params, w)
        self._by_len[params.window] = mature_transition(params)

    def transition(self, state_len: int) -> TransitionPair:
        return self._by_len[min(state_len, self.params.window)]

    def predict(self, mean: np.ndarray, cov: np.ndarray):
        """Kalman predict of a ``(w, D)`` mean and shared ``(w, w)`` covariance."""
        tr = self.transition(cov.shape[0])
        fm = tr.f_matrix
        new_mean = fm @ mean
        new_cov = fm @ cov @ fm.T
        new_cov[0, 0] += tr.noise_var
        return new_mean, 0.5 * (new_cov + new_cov.T)


@functools.lru_cache(maxsize=64)
def dynamics_for(params: IseClassParams) -> ClassDynamics:
    return ClassDynamics(params)


def build_dynamics(class_params) -> list[ClassDynamics]:
    return [dynamics_for(p) for p in class_params]
