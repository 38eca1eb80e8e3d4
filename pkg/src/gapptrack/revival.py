"""Revival and split moves applied to each particle after weighting.

A track deleted by sampling within the lookback can absorb a track born at
the current step (revival); an active track whose latest data are isolated
can be cut retroactively with that data re-born as a new track (split).
Both moves leave the target posterior invariant, so weights are untouched.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from .association import new_track_loglik
from .conjugate import GammaPosterior
from .structured import log_sum_exp
from .tracks import (
    GroupStats,
    TrackBelief,
    class_mixture_loglik,
    init_track,
    last_data_before,
    make_track_id,
    update_track,
    within_revival_window,
)


def _count_logmass(alpha, beta0, n, exposure):
    return gammaln(alpha + n) - gammaln(alpha) + alpha * math.log(beta0) - (alpha + n) * math.log(beta0 + exposure)


def revival_log_ratio(ghost: TrackBelief, stats: GroupStats, k: int, model, birth_prior: GammaPosterior, n_new: int, noise_var: float) -> float:
    """Log posterior ratio of attaching a new track's data to ``ghost``.

    ``n_new`` counts the new tracks at ``k`` in the current sample, the
    candidate included.
    """
    cfg = model.config
    det = cfg.detection_prior
    with np.errstate(divide="ignore"):
        logpi = np.log(ghost.class_probs)
    _, ll_revived = class_mixture_loglik(ghost.means, ghost.covs, logpi, stats, noise_var)
    ll_new = float(new_track_loglik(stats.n, stats.sq_dev.sum(), noise_var, model.density, model.dims))
    gap = k - ghost.death_step + 1
    count = _count_logmass(ghost.alpha, ghost.beta_at_death, stats.n, gap) - _count_logmass(det.shape, det.rate, stats.n, 1)
    births = math.log(n_new) + math.log(birth_prior.rate + 1.0) - math.log(birth_prior.shape + n_new - 1.0)
    psi = cfg.survival_prob
    survival = gap * math.log(psi) - math.log1p(-psi)
    return ll_revived - ll_new + count + births + survival


def revivable_tracks(tracks) -> list[TrackBelief]:
    return [t for t in tracks if not t.active and t.revivable]


def revival_logits(new_track: TrackBelief, tracks, k: int, model, birth_prior, n_new: int, noise_var: float):
    """Log-weights over ``[no revival] + revivable tracks``; the first is 0."""
    ghosts = revivable_tracks(tracks)
    logits = np.zeros(len(ghosts) + 1)
    for i, g in enumerate(ghosts):
        logits[i + 1] = revival_log_ratio(g, new_track.stats_at_k, k, model, birth_prior, n_new, noise_var)
    return logits, ghosts


def kappa_prime(track: TrackBelief, k: int, d_zeta: int) -> int:
    return max(last_data_before(track, k), k - d_zeta)


def revival_log_accept(log_norm: float, revived: TrackBelief, k: int, d_zeta: int) -> float:
    """``log(Z / (k - kappa'))``: the normalizer over the number of split times."""
    return log_norm - math.log(k - kappa_prime(revived, k, d_zeta))


def revive(ghost: TrackBelief, new_track: TrackBelief, noise_var: float, k: int) -> TrackBelief:
    """Reactivate ``ghost`` and give it the new track's data at ``k``."""
    # ghost fields already include this step's zero-data advance
    base = ghost.evolve(
        active=True,
        revivable=False,
        death_step=None,
        beta_at_death=None,
        beta=ghost.beta - 1.0,
        miss_streak=ghost.miss_streak - 1,
    )
    out, _ = update_track(base, (ghost.means, ghost.covs), new_track.stats_at_k, noise_var, k, new_track.clusters_at_k)
    out.revived_at = k
    return out


def split_ghost(track: TrackBelief, split_step: int, k: int) -> TrackBelief:
    """The deleted-at-``split_step`` version of an active track, advanced to ``k``."""
    return track.evolve(
        active=False,
        revivable=True,
        death_step=split_step,
        means=track.pred_means,
        covs=track.pred_covs,
        class_probs=track.prior_class_probs,
        alpha=track.prior_alpha,
        beta=track.prior_beta + 1.0,
        beta_at_death=track.prior_beta - (k - split_step),
        miss_streak=track.prior_miss_streak + 1,
        last_assoc_step=track.prior_last_assoc_step,
        stats_at_k=None,
        clusters_at_k=(),
        revived_at=None,
    )


def split_eligible(track: TrackBelief, k: int, allow_resplit: bool) -> bool:
    if not track.active or track.birth_step >= k or track.stats_at_k is None:
        return False
    return allow_resplit or track.revived_at != k


def split_proposal(track: TrackBelief, k: int, d_zeta: int, rng) -> int:
    """Uniform split time over ``kappa' + 1 .. k``."""
    return int(rng.integers(kappa_prime(track, k, d_zeta) + 1, k + 1))


def split_log_accept(track: TrackBelief, split_step: int, tracks, k: int, model, birth_prior, n_new: int, noise_var: float) -> float:
    """``log((k - kappa') / Z)`` with ``Z`` evaluated in the split sample.

    Returns ``-inf`` when no revival could undo the split.
    """
    d_zeta = model.config.revival.d_zeta
    ghost = split_ghost(track, split_step, k)
    if not within_revival_window(split_step, last_data_before(track, k), k, d_zeta):
        return -math.inf
    others = revivable_tracks(t for t in tracks if t is not track)
    logits = [0.0]
    for g in others + [ghost]:
        logits.append(revival_log_ratio(g, track.stats_at_k, k, model, birth_prior, n_new + 1, noise_var))
    return math.log(k - kappa_prime(track, k, d_zeta)) - log_sum_exp(logits)


def apply_kernel(particle, clusters, k: int, model, rng):
    """One sweep of revivals over new tracks, then splits over old tracks.

    Returns the updated particle and a list of accepted moves.
    """
    cfg = model.config
    d_zeta = cfg.revival.d_zeta
    noise_var = particle.noise_post.mean
    birth_prior = particle.birth_prior or particle.birth_post
    tracks = list(particle.tracks)
    n_new = sum(1 for t in tracks if t.active and t.birth_step == k)
    events = []

    for nt in [t for t in tracks if t.active and t.birth_step == k]:
        logits, ghosts = revival_logits(nt, tracks, k, model, birth_prior, n_new, noise_var)
        if not ghosts:
            continue
        log_norm = log_sum_exp(logits)
        probs = np.exp(logits - log_norm)
        choice = int(rng.choice(len(probs), p=probs))
        if choice == 0:
            continue
        ghost = ghosts[choice - 1]
        log_lam = revival_log_accept(log_norm, ghost, k, d_zeta)
        if math.log(rng.random()) < log_lam:
            tracks[tracks.index(ghost)] = revive(ghost, nt, noise_var, k)
            tracks.remove(nt)
            n_new -= 1
            events.append(("revive", k, nt.id, ghost.id, math.exp(min(log_lam, 700.0))))

    for tr in list(tracks):
        if not split_eligible(tr, k, cfg.revival.allow_resplit_of_revived):
            continue
        split_step = split_proposal(tr, k, d_zeta, rng)
        log_lam = split_log_accept(tr, split_step, tracks, k, model, birth_prior, n_new, noise_var)
        if math.log(rng.random()) < log_lam:
            ghost = split_ghost(tr, split_step, k)
            new_id = make_track_id(k, min(tr.clusters_at_k))
            born = init_track(tr.stats_at_k, noise_var, cfg.class_prior, cfg.detection_prior, k, new_id, tr.clusters_at_k)
            tracks[tracks.index(tr)] = ghost
            tracks.append(born)
            n_new += 1
            events.append(("split", k, tr.id, split_step, new_id, math.exp(min(log_lam, 700.0))))

    out = particle.copy()
    out.tracks = tracks
    out.birth_post = GammaPosterior(birth_prior.shape + n_new, birth_prior.rate + 1.0)
    return out, events
