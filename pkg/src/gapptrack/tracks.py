"""Per-track Gaussian state over a position window, one state per class."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .conjugate import posterior_class_probs
from .structured import DegenerateUpdateError, marginal_loglik_from_stats

ID_STRIDE = 1_000_000


def make_track_id(birth_step: int, first_cluster: int) -> int:
    """Identifier shared by all particles that start a track from the same cluster."""
    return birth_step * ID_STRIDE + first_cluster


@dataclass(frozen=True)
class DeletionHeuristics:
    max_pos_std: float = 50.0
    max_miss_streak: int = 3
    min_expected_rate: float = 0.5
    scene_margin: float = 0.1

    def __post_init__(self):
        if not (self.max_pos_std > 0 and self.max_miss_streak > 0 and self.min_expected_rate > 0 and self.scene_margin >= 0):
            raise ValueError(f"deletion heuristics must be positive: {self}")


@dataclass(frozen=True)
class GroupStats:
    """Size, per-dimension mean and per-dimension squared deviations."""

    n: int
    mean: np.ndarray
    sq_dev: np.ndarray

    @classmethod
    def of_clusters(cls, clusters, idx) -> "GroupStats":
        idx = list(idx)
        sizes = clusters.sizes[idx]
        n = float(sizes.sum())
        mean = sizes @ clusters.means[idx] / n
        sq = clusters.sq_devs[idx].sum(axis=0) + sizes @ (clusters.means[idx] - mean) ** 2
        return cls(int(n), mean, sq)

    @classmethod
    def of_points(cls, pts) -> "GroupStats":
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        mean = pts.mean(axis=0)
        return cls(len(pts), mean, np.sum((pts - mean) ** 2, axis=0))


@dataclass(eq=False)
class TrackBelief:
    """Belief about one track inside one particle.

    ``means`` has shape ``(Nc, w, D)`` and ``covs`` shape ``(Nc, w, w)``;
    window entries run newest first. A track that is inactive but still in a
    particle was deleted by sampling and can be revived (``revivable``);
    its fields then evolve exactly like an active track that sees no data,
    while ``beta_at_death`` keeps the rate posterior frozen at deletion.
    """

    id: int
    birth_step: int
    means: np.ndarray
    covs: np.ndarray
    class_probs: np.ndarray
    alpha: float
    beta: float
    last_assoc_step: int
    miss_streak: int = 0
    active: bool = True
    revivable: bool = False
    death_step: int | None = None
    beta_at_death: float | None = None
    # quantities of the latest step, used by the revival kernel
    pred_means: np.ndarray | None = None
    pred_covs: np.ndarray | None = None
    prior_class_probs: np.ndarray | None = None
    prior_alpha: float | None = None
    prior_beta: float | None = None
    prior_miss_streak: int = 0
    prior_last_assoc_step: int | None = None
    stats_at_k: GroupStats | None = None
    clusters_at_k: tuple[int, ...] = ()
    revived_at: int | None = None
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def window(self) -> int:
        return self.covs.shape[1]

    def evolve(self, **changes) -> "TrackBelief":
        changes.setdefault("cache", {})
        return replace(self, **changes)

    def position_mean(self) -> np.ndarray:
        return self.class_probs @ self.means[:, 0, :]

    def position_var(self) -> np.ndarray:
        """Per-dimension variance of the class mixture of current positions."""
        first = self.means[:, 0, :]
        mix = self.class_probs @ first
        second = self.class_probs @ (self.covs[:, 0, 0][:, None] + first**2)
        return np.maximum(second - mix**2, 0.0)

    def position_std(self) -> float:
        return float(math.sqrt(self.position_var().max()))


def heuristic_deletion(track: TrackBelief, heuristics: DeletionHeuristics, scene) -> bool:
    """Initial survival: False when any deletion heuristic fires.

    Cached on the track, so ``heuristics`` and ``scene`` must stay fixed per run.
    """
    hit = track.cache.get("keep")
    if hit is None:
        hit = track.cache["keep"] = _passes_heuristics(track, heuristics, scene)
    return hit


def _passes_heuristics(track, heuristics, scene) -> bool:
    if track.miss_streak >= heuristics.max_miss_streak:
        return False
    if track.alpha / track.beta < heuristics.min_expected_rate:
        return False
    lo, hi = scene.expanded(heuristics.scene_margin)
    pos = track.position_mean()
    if np.any(pos < lo) or np.any(pos > hi):
        return False
    return track.position_std() <= heuristics.max_pos_std


def sample_survival(initial_survival: bool, psi: float, rng) -> bool:
    return bool(initial_survival) and rng.random() < psi


def predict_track(track: TrackBelief, dynamics) -> tuple[np.ndarray, np.ndarray]:
    """Per-class Kalman predict, cached on the (shared, immutable) track."""
    hit = track.cache.get("pred")
    if hit is not None:
        return hit
    means = []
    covs = []
    for c, dyn in enumerate(dynamics):
        m, v = dyn.predict(track.means[c], track.covs[c])
        means.append(m)
        covs.append(v)
    out = (np.stack(means), np.stack(covs))
    track.cache["pred"] = out
    return out


def class_mixture_loglik(pred_means, pred_covs, log_class_probs, stats: GroupStats, noise_var: float):
    """Per-class log-likelihoods and their class-mixture log-sum."""
    ll = marginal_loglik_from_stats(
        pred_means[:, 0, :], pred_covs[:, 0, 0][:, None], stats.n, stats.mean[None, :], stats.sq_dev[None, :], noise_var
    ).sum(axis=1)
    with np.errstate(divide="ignore"):
        tot = np.logaddexp.reduce(ll + log_class_probs)
    return ll, float(tot)


def kalman_update_classes(pred_means, pred_covs, stats: GroupStats, noise_var: float):
    """Fast update of every class state with ``n`` observations of position."""
    gain = pred_covs[:, :, 0]
    innov = stats.n * pred_covs[:, 0, 0] + noise_var
    if np.any(innov <= 0):
        raise DegenerateUpdateError(f"innovation variance {innov} is not positive")
    scale = stats.n / innov
    resid = stats.mean[None, :] - pred_means[:, 0, :]
    means = pred_means + scale[:, None, None] * gain[:, :, None] * resid[:, None, :]
    covs = pred_covs - scale[:, None, None] * gain[:, :, None] * gain[:, None, :]
    covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
    return means, covs


def update_track(track: TrackBelief, pred, stats: GroupStats, noise_var: float, k: int, clusters_at_k=()):
    """Posterior of a track that received ``stats`` at step ``k``.

    Returns the updated track and its class-mixture log marginal likelihood.
    """
    pred_means, pred_covs = pred
    with np.errstate(divide="ignore"):
        logpi = np.log(track.class_probs)
    class_ll, mix_ll = class_mixture_loglik(pred_means, pred_covs, logpi, stats, noise_var)
    means, covs = kalman_update_classes(pred_means, pred_covs, stats, noise_var)
    new = track.evolve(
        means=means,
        covs=covs,
        class_probs=posterior_class_probs(track.class_probs, class_ll),
        alpha=track.alpha + stats.n,
        beta=track.beta + 1.0,
        last_assoc_step=k,
        miss_streak=0,
        pred_means=pred_means,
        pred_covs=pred_covs,
        prior_class_probs=track.class_probs,
        prior_alpha=track.alpha,
        prior_beta=track.beta,
        prior_miss_streak=track.miss_streak,
        prior_last_assoc_step=track.last_assoc_step,
        stats_at_k=stats,
        clusters_at_k=tuple(clusters_at_k),
        revived_at=None,
    )
    return new, mix_ll


def coast_track(track: TrackBelief, pred) -> TrackBelief:
    """Advance a track one step with no associated observations."""
    pred_means, pred_covs = pred
    return track.evolve(
        means=pred_means,
        covs=pred_covs,
        beta=track.beta + 1.0,
        miss_streak=track.miss_streak + 1,
        pred_means=pred_means,
        pred_covs=pred_covs,
        prior_class_probs=track.class_probs,
        prior_alpha=track.alpha,
        prior_beta=track.beta,
        prior_miss_streak=track.miss_streak,
        prior_last_assoc_step=track.last_assoc_step,
        stats_at_k=None,
        clusters_at_k=(),
        revived_at=None,
    )


def init_track(stats: GroupStats, noise_var: float, class_prior, det_prior, k: int, track_id: int, clusters_at_k=()) -> TrackBelief:
    n_classes = len(class_prior)
    dims = len(stats.mean)
    means = np.broadcast_to(stats.mean, (n_classes, 1, dims)).copy()
    covs = np.full((n_classes, 1, 1), noise_var / stats.n)
    return TrackBelief(
        id=track_id,
        birth_step=k,
        means=means,
        covs=covs,
        class_probs=np.asarray(class_prior, dtype=float).copy(),
        alpha=det_prior.shape + stats.n,
        beta=det_prior.rate + 1.0,
        last_assoc_step=k,
        prior_class_probs=np.asarray(class_prior, dtype=float).copy(),
        prior_alpha=det_prior.shape,
        prior_beta=det_prior.rate,
        stats_at_k=stats,
        clusters_at_k=tuple(clusters_at_k),
    )


def last_data_before(track: TrackBelief, k: int) -> int:
    """Latest step before ``k`` at which the track received observations."""
    if track.last_assoc_step < k:
        return track.last_assoc_step
    return track.prior_last_assoc_step if track.prior_last_assoc_step is not None else -(10**9)


def within_revival_window(death_step: int, last_data: int, k: int, d_zeta: int) -> bool:
    """Deleted at ``death_step`` with data last at ``last_data``: still revivable at ``k``?"""
    kappa_prime = max(last_data, k - d_zeta)
    return death_step > 2 * k - d_zeta - kappa_prime


def revival_validity(track: TrackBelief, k: int, d_zeta: int) -> bool:
    """Whether a track deleted by sampling may still be revived at step ``k``."""
    if track.active or track.death_step is None or not track.revivable:
        return False
    return within_revival_window(track.death_step, last_data_before(track, k), k, d_zeta)
