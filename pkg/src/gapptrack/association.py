"""Per-particle proposal of cluster associations.

Each cluster is first assigned to clutter, an existing track or "new";
clusters marked new are then grouped into new tracks one at a time. Every
choice is drawn from an explicit distribution whose log-probability is
accumulated, so the particle weight can divide the proposal out.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .structured import LOG_2PI, isotropic_loglik_at_mean, log_sum_exp, marginal_loglik_from_stats

CLUTTER = 0
LOGIT_FLOOR = 700.0


class ForcedClutterWarning(RuntimeWarning):
    """Every association option had zero weight; the cluster went to clutter."""


@dataclass
class AssociationDraw:
    """Sampled labels for one frame.

    ``initial`` uses ``0`` for clutter, ``1..T`` for existing tracks and
    ``T + 1`` for "new". ``final`` replaces "new" with ``T + 1 + iota`` for
    the ``iota``-th new track.
    """

    initial: np.ndarray
    final: np.ndarray
    log_q: float
    new_track_count: int
    n_existing: int

    def datum_labels(self, clusters) -> np.ndarray:
        out = np.zeros(sum(c.size for c in clusters.clusters), dtype=int)
        for lab, c in zip(self.final, clusters.clusters):
            out[list(c.members)] = lab
        return out


def existing_track_loglik(pred_first_mean, pred_first_var, log_class_probs, sizes, means, sq_devs, noise_var):
    """Class-mixture log marginal likelihood of every cluster under every track.

    Parameters
    ----------
    pred_first_mean : (T, Nc, D) predicted current positions
    pred_first_var : (T, Nc) predicted variance of the current position
    log_class_probs : (T, Nc)
    sizes : (G,), means : (G, D), sq_devs : (G, D) cluster statistics

    Returns
    -------
    (G, T) array
    """
    n = sizes[:, None, None, None]
    ll = marginal_loglik_from_stats(
        pred_first_mean[None],
        pred_first_var[None, :, :, None],
        n,
        means[:, None, None, :],
        sq_devs[:, None, None, :],
        noise_var,
    ).sum(axis=-1)
    return log_sum_exp(ll + log_class_probs[None], axis=-1)


def new_track_loglik(sizes, sq_dev_totals, noise_var: float, density: float, dims: int):
    """Approximate marginal likelihood of a new track's observations.

    The unknown position is integrated over all space rather than the scene.
    """
    sizes = np.asarray(sizes, dtype=float)
    return (
        math.log(density)
        + 0.5 * dims * (LOG_2PI + np.log(noise_var) - np.log(sizes))
        + isotropic_loglik_at_mean(sizes, sq_dev_totals, noise_var, dims)
    )


def initial_assoc_logits(clusters, existing_ll, track_log_rates, clutter_post, birth_post, det_prior, noise_var, density):
    """Log-weights of every cluster over ``[clutter, tracks..., new]``.

    ``existing_ll`` is the ``(G, T)`` output of :func:`existing_track_loglik`
    for the active tracks and ``track_log_rates`` their ``log(alpha/beta)``.
    """
    n = clusters.sizes
    dims = clusters.dims
    n_tracks = existing_ll.shape[1] if existing_ll.ndim == 2 else 0
    out = np.empty((len(n), n_tracks + 2))
    out[:, 0] = n * (math.log(clutter_post.mean) + math.log(density))
    if n_tracks:
        out[:, 1:-1] = existing_ll + n[:, None] * np.asarray(track_log_rates)[None, :]
    p_birth = -math.expm1(birth_post.shape * math.log(birth_post.rate / (1.0 + birth_post.rate)))
    with np.errstate(divide="ignore"):
        new = (
            math.log(p_birth)
            + n * math.log(det_prior.mean)
            + new_track_loglik(n, clusters.sq_devs.sum(axis=1), noise_var, density, dims)
        )
    out[:, -1] = np.where(n >= 2, new, -np.inf)
    return out


def _normalize(logits):
    logits = np.asarray(logits, dtype=float)
    top = logits.max()
    if not np.isfinite(top):
        return None
    logits = np.where(logits < top - LOGIT_FLOOR, -np.inf, logits)
    logp = logits - log_sum_exp(logits)
    return logp


def sample_initial(logits: np.ndarray, rng):
    """Draw one initial label per cluster; returns ``(labels, log_q)``."""
    logits = np.asarray(logits, dtype=float)
    n_cl = len(logits)
    u = rng.random(n_cl)
    if n_cl == 0:
        return np.empty(0, dtype=int), 0.0
    top = logits.max(axis=1, keepdims=True)
    dead = ~np.isfinite(top[:, 0])
    if dead.any():
        warnings.warn("all association weights are zero; forcing clutter", ForcedClutterWarning, stacklevel=2)
        logits = np.where(dead[:, None], 0.0, logits)
        top = np.where(dead[:, None], 0.0, top)
    floored = np.where(logits < top - LOGIT_FLOOR, -np.inf, logits)
    logp = floored - log_sum_exp(floored, axis=1)[:, None]
    cdf = np.cumsum(np.exp(logp), axis=1)
    labels = np.minimum(np.sum(cdf <= (u * cdf[:, -1])[:, None], axis=1), logits.shape[1] - 1)
    log_q = 0.0
    for g in range(n_cl):
        if dead[g]:
            labels[g] = CLUTTER
            continue
        while not np.isfinite(logp[g, labels[g]]):
            labels[g] -= 1
        log_q += logp[g, labels[g]]
    return labels, float(log_q)


def new_track_option_logits(size, mean, group_sizes, group_means, noise_var, density, birth_post, dims):
    """Log-weights for a "new" cluster: join each started new track, or start one."""
    k_new = len(group_sizes)
    out = np.empty(k_new + 1)
    if k_new:
        nu = np.asarray(group_sizes, dtype=float)
        d2 = np.sum((np.asarray(group_means) - mean) ** 2, axis=1)
        out[:k_new] = 0.5 * dims * np.log(size * nu / (size + nu)) - size * nu * d2 / (2.0 * noise_var * (size + nu))
    out[k_new] = (
        math.log(density)
        + 0.5 * dims * (LOG_2PI + math.log(noise_var))
        + math.log(birth_post.shape + k_new)
        - math.log(birth_post.rate + 1.0)
    )
    return out


def resolve_new_tracks(new_clusters, clusters, noise_var, density, birth_post, rng):
    """Group the clusters marked "new" into new tracks, in cluster order.

    Returns
    -------
    (track_of_cluster, log_q, count)
        ``track_of_cluster`` maps each entry of ``new_clusters`` to its new
        track index.
    """
    sizes: list[float] = []
    means: list[np.ndarray] = []
    assign = []
    log_q = 0.0
    dims = clusters.dims
    for g in new_clusters:
        n = clusters.sizes[g]
        ybar = clusters.means[g]
        if not sizes:
            choice = 0
        else:
            logp = _normalize(new_track_option_logits(n, ybar, sizes, means, noise_var, density, birth_post, dims))
            cdf = np.cumsum(np.exp(logp))
            choice = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(logp) - 1)
            while not np.isfinite(logp[choice]):
                choice -= 1
            log_q += logp[choice]
        if choice == len(sizes):
            sizes.append(n)
            means.append(ybar.copy())
        else:
            tot = sizes[choice] + n
            means[choice] = (sizes[choice] * means[choice] + n * ybar) / tot
            sizes[choice] = tot
        assign.append(choice)
    return np.asarray(assign, dtype=int), log_q, len(sizes)


def rate_count_logmass(alpha, beta, counts):
    """``sum log[Gamma(a + n) / Gamma(a) * b^a / (b + 1)^(a + n)]``."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    counts = np.asarray(counts, dtype=float)
    return float(np.sum(gammaln(alpha + counts) - gammaln(alpha) + alpha * np.log(beta) - (alpha + counts) * np.log1p(beta)))


def birth_count_logmass(eps: float, xi: float, eta: int) -> float:
    return float(
        gammaln(eps + eta) - gammaln(eps) - gammaln(eta + 1) + eps * math.log(xi) - (eps + eta) * math.log1p(xi)
    )


def assoc_prior_logmass(alphas, betas, counts, eps: float, xi: float, eta: int) -> float:
    """Count prior of one frame's labels, marginalized over the Poisson rates.

    ``alphas``, ``betas`` and ``counts`` cover clutter and every track that is
    active at this step, new tracks included with their baseline prior.
    """
    return rate_count_logmass(alphas, betas, counts) + birth_count_logmass(eps, xi, eta)
