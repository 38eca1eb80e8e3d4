"""Small hand-built tracking scenes shared by the filter and acceptance tests."""

from __future__ import annotations

import math

import numpy as np

from gapptrack.clustering import cluster_frame, fixed_clusters
from gapptrack.config import RevivalConfig, TrackerConfig
from gapptrack.conjugate import GammaPosterior, InvGammaPosterior
from gapptrack.filter import FilterModel, Particle, ParticleTracker, predict_track
from gapptrack.revival import revival_log_accept, revival_logits, revive, split_ghost, split_log_accept
from gapptrack.structured import log_sum_exp
from gapptrack.tracks import (
    GroupStats,
    coast_track,
    init_track,
    make_track_id,
    update_track,
    within_revival_window,
)
from gapptrack.world import SceneConfig
from oracles import enumerate_association_posterior

SMALL_SCENE = SceneConfig(((0.0, 20.0), (0.0, 20.0)), 1.0, 5)


def small_config(particles: int, **kw) -> TrackerConfig:
    kw.setdefault("survival_prob", 0.9)
    kw.setdefault("birth_prior", GammaPosterior(0.5, 1.0))
    # mean 1 like the default, concentrated enough that one frame barely moves it
    kw.setdefault("noise_prior", InvGammaPosterior(20.0, 19.0))
    return TrackerConfig(particles=particles, scene=SMALL_SCENE, **kw)


def seeded_track(cfg, model, centre, rng, index):
    """A track started at step 0 and updated at step 1 around ``centre``."""
    s = cfg.noise_prior.mean
    first = centre + rng.normal(0.0, 1.0, (2, 2))
    tr = init_track(GroupStats.of_points(first), s, cfg.class_prior, cfg.detection_prior, 0, make_track_id(0, index))
    second = centre + rng.normal(0.0, 1.0, (3, 2))
    tr, _ = update_track(tr, predict_track(tr, model.dynamics), GroupStats.of_points(second), s, 1)
    return tr


def small_scene(seed: int, particles: int, n_tracks=None, n_obs=None, groups=None, clutter_prob=0.25):
    """Tracker at step 2 with up to 2 tracks and up to 3 observations.

    Each track draws one true position from its predictive. Each
    observation is uniform clutter with probability ``clutter_prob``,
    otherwise a random track's true position plus model noise. Clusters are the
    filter's own clustering of the frame at the prior noise level unless
    ``groups`` prescribes the partition.
    """
    rng = np.random.default_rng(seed)
    cfg = small_config(particles)
    tracker = ParticleTracker(cfg, seed)
    model = tracker.model
    s = cfg.noise_prior.mean
    n_tracks = int(rng.integers(1, 3)) if n_tracks is None else n_tracks
    tracks = [seeded_track(cfg, model, rng.uniform(6, 14, 2), rng, i) for i in range(n_tracks)]
    truth = []
    for tr in tracks:
        pm, pc = predict_track(tr, model.dynamics)
        c = rng.choice(len(cfg.class_prior), p=tr.class_probs)
        truth.append(pm[c, 0] + math.sqrt(pc[c, 0, 0]) * rng.normal(size=2))
    n_obs = int(rng.integers(1, 4)) if n_obs is None else n_obs
    obs = []
    for _ in range(n_obs):
        if rng.random() < clutter_prob:
            obs.append(rng.uniform(0, 20, 2))
        else:
            obs.append(truth[rng.integers(n_tracks)] + math.sqrt(s) * rng.normal(size=2))
    if groups is None:
        clusters = cluster_frame(np.array(obs), s, cfg.merge_scale, dims=2)
    else:
        clusters = fixed_clusters(np.array(obs), groups, s, dims=2)
    base = Particle(tracks, cfg.clutter_prior, cfg.birth_prior, cfg.noise_prior, -math.log(particles))
    tracker.particles = [base.copy() for _ in range(particles)]
    return tracker, tracks, clusters


def particle_posterior(tracker, record, tracks) -> dict:
    """Weighted distribution over (surviving ids, cluster labels) of one step."""
    out: dict = {}
    for terms, w in zip(tracker.last_terms, record.weights):
        alive = tuple(i for i, ok in terms.survived if ok)
        survivors = [tr for tr in tracks if tr.id in alive]
        labels = []
        for g, lab in enumerate(terms.labels):
            if lab == 0:
                labels.append(0)
            elif lab <= len(survivors):
                labels.append(("t", survivors[lab - 1].id))
            else:
                labels.append(("new", terms.new_track_of_cluster[g] % 1_000_000))
        key = (alive, tuple(labels))
        out[key] = out.get(key, 0.0) + float(w)
    return out


def exact_posterior(tracker, tracks, clusters) -> dict:
    cfg = tracker.config
    preds = [predict_track(tr, tracker.model.dynamics) for tr in tracks]
    return enumerate_association_posterior(
        tracks, preds, clusters, cfg, tracker.model.density, cfg.noise_prior, cfg.clutter_prior, cfg.birth_prior
    )


def total_variation(p: dict, q: dict) -> float:
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in set(p) | set(q))


def scene_tv(seed: int, particles: int, **kw) -> float:
    tracker, tracks, clusters = small_scene(seed, particles, **kw)
    record = tracker.step(2, clusters.observations, clusters=clusters)
    return total_variation(particle_posterior(tracker, record, tracks), exact_posterior(tracker, tracks, clusters))


def make_ghost(track, death_step: int, k: int, model):
    """``track`` (as it stood after ``death_step - 1``) deleted by sampling at
    ``death_step`` and advanced without data to ``k``, as the filter does."""
    ghost = track
    for step in range(death_step, k + 1):
        nxt = coast_track(ghost, predict_track(ghost, model.dynamics))
        if step == death_step:
            nxt.active = False
            nxt.revivable = True
            nxt.death_step = death_step
            nxt.beta_at_death = ghost.beta
        ghost = nxt
    return ghost


def advance_with_data(track, model, rng, k: int, noise_var: float = 1.0):
    """Update ``track`` at step ``k`` with two or three points near its prediction."""
    pred = predict_track(track, model.dynamics)
    centre = track.class_probs @ pred[0][:, 0, :]
    pts = centre + rng.normal(0.0, 1.0, (int(rng.integers(2, 4)), centre.size))
    return update_track(track, pred, GroupStats.of_points(pts), noise_var, k)[0]


BIRTHS = GammaPosterior(0.5, 1.0)


def revival_model(d_zeta=3, psi=0.9):
    cfg = small_config(10, tracker="gapp-reaction", revival=RevivalConfig(d_zeta), survival_prob=psi)
    return FilterModel(cfg)


def history(model, rng, last_data, index=0):
    """A track with data at steps 0..``last_data``."""
    cfg = model.config
    tr = seeded_track(cfg, model, rng.uniform(6, 14, 2), rng, index)
    for step in range(2, last_data + 1):
        tr = advance_with_data(tr, model, rng, step)
    return tr


def new_track(points, k, s, model, first_cluster=0):
    cfg = model.config
    return init_track(GroupStats.of_points(points), s, cfg.class_prior, cfg.detection_prior, k, make_track_id(k, first_cluster), (first_cluster,))


def _valid_death(rng, k, d_zeta):
    """A death step whose ghost (with data the step before) is still revivable at ``k``."""
    options = [d for d in range(2, k + 1) if within_revival_window(d, d - 1, k, d_zeta)]
    return int(rng.choice(options))


def revival_scene(seed):
    rng = np.random.default_rng(seed)
    d_zeta = int(rng.integers(2, 6))
    model = revival_model(d_zeta, psi=float(rng.uniform(0.6, 0.99)))
    k = int(rng.integers(3, 8))
    death = _valid_death(rng, k, d_zeta)
    before = history(model, rng, death - 1)
    ghost = make_ghost(before, death, k, model)
    s = float(rng.uniform(0.5, 2.0))
    centre = ghost.class_probs @ ghost.means[:, 0, :]
    pts = centre + rng.normal(0, 1.5, (int(rng.integers(2, 4)), 2))
    nt = new_track(pts, k, s, model, first_cluster=0)
    tracks = [ghost, nt]
    if rng.random() < 0.5:
        other_death = _valid_death(rng, k, d_zeta)
        tracks.insert(0, make_ghost(history(model, rng, other_death - 1, index=1), other_death, k, model))
    n_new = 1
    if rng.random() < 0.5:
        tracks.append(new_track(rng.uniform(0, 20, (2, 2)), k, s, model, first_cluster=1))
        n_new = 2
    return model, k, s, before, ghost, nt, pts, tracks, n_new


def revive_then_split(seed):
    """Revive the scene's ghost, then undo it by a split at the death step.

    Returns ``(log_accept_revive, log_accept_split, ghost, rebuilt_ghost)``.
    """
    model, k, s, _, ghost, nt, _, tracks, n_new = revival_scene(seed)
    logits, _ = revival_logits(nt, tracks, k, model, BIRTHS, n_new, s)
    log_lam = revival_log_accept(log_sum_exp(logits), ghost, k, model.config.revival.d_zeta)
    revived = revive(ghost, nt, s, k)
    after = [revived if t is ghost else t for t in tracks if t is not nt]
    log_back = split_log_accept(revived, ghost.death_step, after, k, model, BIRTHS, n_new - 1, s)
    return log_lam, log_back, ghost, split_ghost(revived, ghost.death_step, k)
