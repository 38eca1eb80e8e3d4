"""Conjugate posteriors for Poisson rates, noise variance and class labels."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .structured import log_sum_exp, marginal_loglik_from_stats


@dataclass(frozen=True)
class GammaPosterior:
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError(f"Gamma shape and rate must be positive: {self}")

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    def mse(self, truth: float) -> float:
        """``E[(x - truth)^2]`` under this posterior."""
        a, b = self.shape, self.rate
        return a * (a + 1.0) / (b * b) - 2.0 * truth * a / b + truth * truth


@dataclass(frozen=True)
class InvGammaPosterior:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 1 and self.scale > 0):
            raise ValueError(f"InvGamma needs shape > 1 and scale > 0: {self}")

    @property
    def mean(self) -> float:
        return self.scale / (self.shape - 1.0)

    def mse(self, truth: float) -> float:
        """``E[(x - truth)^2]``; NaN when the second moment does not exist."""
        a, b = self.shape, self.scale
        if a <= 2.0:
            return math.nan
        second = b * b / ((a - 1.0) * (a - 2.0))
        return second - 2.0 * truth * self.mean + truth * truth


@dataclass(frozen=True)
class ForgettingConfig:
    lambda_gamma: float = 1.0
    lambda_mu: float = 1.0
    lambda_s2: float = 1.0

    def __post_init__(self):
        for name in ("lambda_gamma", "lambda_mu", "lambda_s2"):
            val = getattr(self, name)
            if not 0.0 < val <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {val}")


def update_birth_rate(post: GammaPosterior, eta_k: int) -> GammaPosterior:
    if eta_k < 0:
        raise ValueError("eta_k must be non-negative")
    return GammaPosterior(post.shape + eta_k, post.rate + 1.0)


def update_rate(post: GammaPosterior, n_ki: int, active: bool = True) -> GammaPosterior:
    if n_ki < 0:
        raise ValueError("n_ki must be non-negative")
    if not active:
        return post
    return GammaPosterior(post.shape + n_ki, post.rate + 1.0)


def noise_stats(assoc_groups, dims: int):
    """Degrees of freedom and half the squared deviations of the groups.

    Each group is an ``(n, D)`` array of one track's observations at one step.
    """
    dof = 0.0
    ss = 0.0
    for group in assoc_groups:
        group = np.asarray(group, dtype=float).reshape(len(group), -1)
        n = group.shape[0]
        if n <= 1:
            continue
        dof += 0.5 * dims * (n - 1)
        ss += 0.5 * float(np.sum((group - group.mean(axis=0)) ** 2))
    return dof, ss


def update_noise_var(post: InvGammaPosterior, assoc_groups, dims: int | None = None) -> InvGammaPosterior:
    groups = list(assoc_groups)
    if dims is None:
        dims = np.asarray(groups[0]).reshape(len(groups[0]), -1).shape[1] if groups else 1
    dof, ss = noise_stats(groups, dims)
    return InvGammaPosterior(post.shape + dof, post.scale + ss)


def apply_forgetting(post, baseline, lam: float):
    """Pull a posterior toward its baseline: ``(1 - lam) * baseline + lam * post``."""
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lambda must lie in (0, 1], got {lam}")
    if lam == 1.0:
        return post
    if isinstance(post, GammaPosterior):
        return GammaPosterior(
            (1.0 - lam) * baseline.shape + lam * post.shape,
            (1.0 - lam) * baseline.rate + lam * post.rate,
        )
    return replace(
        post,
        shape=(1.0 - lam) * baseline.shape + lam * post.shape,
        scale=(1.0 - lam) * baseline.scale + lam * post.scale,
    )


def class_logliks(pred_mean_1, pred_var_1, n: int, ybar, sq_dev, noise_var: float):
    """Per-class log marginal likelihood of one observation group.

    ``pred_mean_1`` has shape ``(Nc, D)``, ``pred_var_1`` shape ``(Nc,)``;
    ``ybar`` and ``sq_dev`` are per-dimension statistics of the group.
    """
    ll = marginal_loglik_from_stats(pred_mean_1, np.asarray(pred_var_1)[:, None], n, ybar, sq_dev, noise_var)
    return ll.sum(axis=-1)


def update_class_probs(probs, per_class_pred, obs_group, noise_var_mean: float) -> np.ndarray:
    """Reweight class probabilities by each class's predictive likelihood.

    ``per_class_pred`` lists ``(mean_1, var_1)`` per class, where ``mean_1``
    holds the predicted current position per dimension.
    """
    probs = np.asarray(probs, dtype=float)
    group = np.asarray(obs_group, dtype=float)
    if group.size == 0:
        return probs
    group = group.reshape(group.shape[0], -1)
    means = np.array([np.atleast_1d(m) for m, _ in per_class_pred], dtype=float)
    vars_ = np.array([v for _, v in per_class_pred], dtype=float)
    ybar = group.mean(axis=0)
    sq_dev = np.sum((group - ybar) ** 2, axis=0)
    ll = class_logliks(means, vars_, group.shape[0], ybar, sq_dev, noise_var_mean)
    return posterior_class_probs(probs, ll)


def posterior_class_probs(probs, class_ll) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logp = np.log(probs) + class_ll
    top = log_sum_exp(logp)
    if not np.isfinite(top):
        return np.asarray(probs, dtype=float)
    out = np.exp(logp - top)
    return out / out.sum()
