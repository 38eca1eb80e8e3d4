"""Rao-Blackwellised particle filter over associations, births and deaths.

Each particle carries the Gaussian beliefs of its tracks plus conjugate
posteriors of the clutter rate, birth rate and noise variance. A step
resamples if needed, clusters the frame once, then moves every particle
independently with its own random stream.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .association import (
    assoc_prior_logmass,
    existing_track_loglik,
    initial_assoc_logits,
    new_track_loglik,
    resolve_new_tracks,
    sample_initial,
)
from .clustering import ClusterSet, cluster_frame, pooled_noise_estimate
from .conjugate import GammaPosterior, InvGammaPosterior, apply_forgetting
from .config import TrackerConfig
from .dynamics import build_dynamics
from .tracks import (
    GroupStats,
    TrackBelief,
    coast_track,
    heuristic_deletion,
    init_track,
    last_data_before,
    make_track_id,
    predict_track,
    revival_validity,
    update_track,
    within_revival_window,
)

PARTICLE_STREAM = 1
RESAMPLE_STREAM = 2
KERNEL_STREAM = 3


class DegenerateWeightsWarning(RuntimeWarning):
    """Every particle weight vanished; weights were reset to uniform."""


@dataclass(eq=False)
class Particle:
    tracks: list[TrackBelief]
    clutter_post: GammaPosterior
    birth_post: GammaPosterior
    noise_post: InvGammaPosterior
    log_weight: float = 0.0
    # birth-rate prior of the current step, needed to re-derive the birth
    # posterior after the revival kernel changes the number of new tracks
    birth_prior: GammaPosterior | None = None
    flagged: bool = False

    def copy(self) -> "Particle":
        return Particle(
            list(self.tracks), self.clutter_post, self.birth_post, self.noise_post,
            self.log_weight, self.birth_prior, self.flagged,
        )

    def active_tracks(self) -> list[TrackBelief]:
        return [t for t in self.tracks if t.active]

    def new_track_count(self, k: int) -> int:
        return sum(1 for t in self.tracks if t.active and t.birth_step == k)


@dataclass
class StepTerms:
    """All components of one particle's weight increment at one step."""

    log_lik: float
    log_prior: float
    log_q: float
    log_survival: float
    labels: np.ndarray
    new_track_of_cluster: dict = field(default_factory=dict)
    survived: tuple = ()

    @property
    def increment(self) -> float:
        return weight_increment(self.log_lik, self.log_prior, self.log_q, self.log_survival)


def weight_increment(log_lik: float, log_prior: float, log_q: float, log_survival: float) -> float:
    """``log u = log P + log prior mass - log Q + survival correction``.

    Returns ``-inf`` for any non-finite combination.
    """
    val = log_lik + log_prior - log_q + log_survival
    return val if math.isfinite(val) else -math.inf


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w * w))


def systematic_resample(weights, rng) -> np.ndarray:
    """Ancestor indices by systematic resampling."""
    w = np.asarray(weights, dtype=float)
    n = len(w)
    positions = (rng.random() + np.arange(n)) / n
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, positions, side="right"), n - 1)


def resample(particles: list[Particle], weights, ess_threshold: float, rng):
    """Resample when ESS falls below ``ess_threshold * J``.

    Returns ``(particles, ancestors, resampled)``; weights reset to uniform.
    """
    n = len(particles)
    if effective_sample_size(weights) >= ess_threshold * n:
        return particles, np.arange(n), False
    anc = systematic_resample(weights, rng)
    out = []
    for a in anc:
        p = particles[a].copy()
        p.log_weight = -math.log(n)
        out.append(p)
    return out, anc, True


def normalize_log_weights(log_w) -> np.ndarray:
    log_w = np.asarray(log_w, dtype=float)
    top = logsumexp(log_w)
    if not np.isfinite(top):
        warnings.warn("all particle weights vanished; resetting to uniform", DegenerateWeightsWarning, stacklevel=2)
        return np.full(len(log_w), -math.log(len(log_w)))
    return log_w - top


class FilterModel:
    """Static pieces shared by every particle: config, dynamics, scene."""

    def __init__(self, config: TrackerConfig):
        self.config = config
        self.dynamics = build_dynamics(config.class_params)
        self.scene = config.scene
        self.density = config.scene.density
        self.dims = config.scene.dims
        psi = config.survival_prob
        self.log_one_minus_psi = math.log1p(-psi) if psi < 1.0 else -math.inf

    def initial_particle(self, log_weight: float = 0.0) -> Particle:
        c = self.config
        return Particle([], c.clutter_prior, c.birth_prior, c.noise_prior, log_weight)


def _existing_columns(tracks, preds, clusters: ClusterSet, noise_var: float, key):
    """Per-track log-likelihood of every cluster, memoized on shared tracks."""
    n_tr = len(tracks)
    out = np.empty((len(clusters), n_tr))
    todo = []
    for t, tr in enumerate(tracks):
        hit = tr.cache.get("assoc")
        if hit is not None and hit[0] == key:
            out[:, t] = hit[1]
        else:
            todo.append(t)
    if todo and len(clusters):
        pm = np.stack([preds[t][0][:, 0, :] for t in todo])
        pv = np.stack([preds[t][1][:, 0, 0] for t in todo])
        with np.errstate(divide="ignore"):
            lp = np.log(np.stack([tracks[t].class_probs for t in todo]))
        ll = existing_track_loglik(pm, pv, lp, clusters.sizes, clusters.means, clusters.sq_devs, noise_var)
        for col, t in enumerate(todo):
            out[:, t] = ll[:, col]
            tracks[t].cache["assoc"] = (key, ll[:, col].copy())
    return out


def step_particle(p: Particle, clusters: ClusterSet, k: int, model: FilterModel, rng) -> tuple[Particle, StepTerms]:
    """Move one particle from step ``k - 1`` to ``k``."""
    cfg = model.config
    fg = cfg.forgetting
    lam_mu = fg.lambda_mu
    clutter_prior = apply_forgetting(p.clutter_post, cfg.clutter_prior, lam_mu)
    birth_prior = apply_forgetting(p.birth_post, cfg.birth_prior, fg.lambda_gamma)
    noise_prior = apply_forgetting(p.noise_post, cfg.noise_prior, fg.lambda_s2)
    s2_prev = noise_prior.mean
    density = model.density
    dims = model.dims
    revival_on = cfg.revival_enabled
    d_zeta = cfg.revival.d_zeta

    # deletion: heuristics on the k-1 state, then Bernoulli survival
    n_heuristic = 0
    survivors: list[int] = []
    slots: list[tuple[str, TrackBelief]] = []
    survived = []
    for tr in p.tracks:
        if not heuristic_deletion(tr, cfg.heuristics, model.scene):
            if tr.active:
                n_heuristic += 1
            continue
        if tr.active:
            if rng.random() < cfg.survival_prob:
                survivors.append(len(slots))
                slots.append(("active", tr))
                survived.append((tr.id, True))
            else:
                survived.append((tr.id, False))
                if revival_on and within_revival_window(k, last_data_before(tr, k), k, d_zeta):
                    slots.append(("ghost", tr))
        elif revival_validity(tr, k, d_zeta):
            slots.append(("ghost", tr))

    active = [slots[i][1] for i in survivors]
    preds = [predict_track(tr, model.dynamics) for tr in active]
    n_act = len(active)
    if n_act:
        existing = _existing_columns(active, preds, clusters, s2_prev, (k, id(clusters), s2_prev))
        log_rates = np.array([math.log(tr.alpha / tr.beta) for tr in active])
    else:
        existing = np.zeros((len(clusters), 0))
        log_rates = np.zeros(0)
    logits = initial_assoc_logits(
        clusters, existing, log_rates, clutter_prior, birth_prior, cfg.detection_prior, s2_prev, density
    )
    labels, log_q = sample_initial(logits, rng)
    new_clusters = np.flatnonzero(labels == n_act + 1)
    assign, log_q_new, eta = resolve_new_tracks(new_clusters, clusters, s2_prev, density, birth_prior, rng)
    log_q += log_q_new
    final = labels.copy()
    final[new_clusters] = n_act + 1 + assign

    # group clusters per destination
    groups_active = [[] for _ in range(n_act)]
    groups_new = [[] for _ in range(eta)]
    clutter_count = 0
    for g, lab in enumerate(final):
        if lab == 0:
            clutter_count += int(clusters.sizes[g])
        elif lab <= n_act:
            groups_active[lab - 1].append(g)
        else:
            groups_new[lab - n_act - 1].append(g)
    stats_active = [GroupStats.of_clusters(clusters, gr) if gr else None for gr in groups_active]
    stats_new = [GroupStats.of_clusters(clusters, gr) for gr in groups_new]

    # conjugate hyperparameter updates
    dof = 0.0
    ss = 0.0
    for st in stats_active + stats_new:
        if st is not None and st.n > 1:
            dof += 0.5 * dims * (st.n - 1)
            ss += 0.5 * float(st.sq_dev.sum())
    noise_post = InvGammaPosterior(noise_prior.shape + dof, noise_prior.scale + ss)
    clutter_post = GammaPosterior(clutter_prior.shape + clutter_count, clutter_prior.rate + 1.0)
    birth_post = GammaPosterior(birth_prior.shape + eta, birth_prior.rate + 1.0)
    s2 = noise_post.mean

    # track updates, likelihood and count-prior terms
    log_lik = clutter_count * math.log(density) if clutter_count else 0.0
    alphas = [clutter_prior.shape]
    betas = [clutter_prior.rate]
    counts = [clutter_count]
    new_list: list[TrackBelief] = []
    act_i = 0
    for kind, tr in slots:
        if kind == "active":
            st = stats_active[act_i]
            pred = preds[act_i]
            if st is not None:
                upd, mix_ll = update_track(tr, pred, st, s2, k, groups_active[act_i])
                log_lik += mix_ll
            else:
                upd = coast_track(tr, pred)
            if lam_mu != 1.0:
                rp = apply_forgetting(GammaPosterior(upd.alpha, upd.beta), cfg.detection_prior, lam_mu)
                upd.alpha, upd.beta = rp.shape, rp.rate
            alphas.append(tr.alpha)
            betas.append(tr.beta)
            counts.append(0 if st is None else st.n)
            new_list.append(upd)
            act_i += 1
        else:
            pred = predict_track(tr, model.dynamics)
            ghost = coast_track(tr, pred)
            if tr.active:
                ghost.active = False
                ghost.revivable = True
                ghost.death_step = k
                ghost.beta_at_death = tr.beta
            new_list.append(ghost)
    det = cfg.detection_prior
    new_of_cluster = {}
    for i, st in enumerate(stats_new):
        first = int(min(groups_new[i]))
        tid = make_track_id(k, first)
        new_list.append(init_track(st, s2, cfg.class_prior, det, k, tid, groups_new[i]))
        for g in groups_new[i]:
            new_of_cluster[g] = tid
        log_lik += float(new_track_loglik(st.n, st.sq_dev.sum(), s2, density, dims))
        alphas.append(det.shape)
        betas.append(det.rate)
        counts.append(st.n)
    log_prior = assoc_prior_logmass(alphas, betas, counts, birth_prior.shape, birth_prior.rate, eta)
    log_surv = n_heuristic * model.log_one_minus_psi if n_heuristic else 0.0

    terms = StepTerms(log_lik, log_prior, log_q, log_surv, final, new_of_cluster, tuple(survived))
    inc = terms.increment
    out = Particle(new_list, clutter_post, birth_post, noise_post, p.log_weight + inc, birth_prior, not math.isfinite(inc))
    return out, terms


@dataclass
class StepRecord:
    k: int
    weights: np.ndarray
    ancestors: np.ndarray
    resampled: bool
    bandwidth: float
    n_clusters: int
    particles: list[Particle] = field(repr=False)
    revival_events: list = field(default_factory=list)
    flagged: int = 0


class ParticleTracker:
    """Runs the filter over frames; optionally applies the revival kernel."""

    def __init__(self, config: TrackerConfig, seed: int = 0):
        self.config = config
        self.model = FilterModel(config)
        self.seed = int(seed)
        n = config.particles
        self.particles = [self.model.initial_particle(-math.log(n)) for _ in range(n)]
        self.last_terms: list[StepTerms] = []

    def weights(self) -> np.ndarray:
        lw = np.array([p.log_weight for p in self.particles])
        return np.exp(lw - logsumexp(lw))

    def rng(self, stream: int, k: int, j: int = 0):
        return np.random.default_rng([self.seed, stream, k, j])

    def step(self, k: int, observations, clusters: ClusterSet | None = None) -> StepRecord:
        cfg = self.config
        w = self.weights()
        self.particles, ancestors, resampled = resample(self.particles, w, cfg.ess_threshold, self.rng(RESAMPLE_STREAM, k))
        if resampled:
            w = self.weights()
        if clusters is None:
            bandwidth = pooled_noise_estimate(w, [p.noise_post for p in self.particles])
            clusters = cluster_frame(observations, bandwidth, cfg.merge_scale, dims=self.model.dims)
        out = []
        terms = []
        for j, p in enumerate(self.particles):
            q, t = step_particle(p, clusters, k, self.model, self.rng(PARTICLE_STREAM, k, j))
            out.append(q)
            terms.append(t)
        log_w = normalize_log_weights([p.log_weight for p in out])
        for p, lw in zip(out, log_w):
            p.log_weight = float(lw)
        events = []
        if cfg.revival_enabled:
            from .revival import apply_kernel

            for j, p in enumerate(out):
                out[j], ev = apply_kernel(p, clusters, k, self.model, self.rng(KERNEL_STREAM, k, j))
                events.extend((j, *e) for e in ev)
        self.particles = out
        self.last_terms = terms
        return StepRecord(
            k, np.exp(log_w), np.asarray(ancestors), resampled, clusters.bandwidth, len(clusters),
            out, events, sum(p.flagged for p in out),
        )

    def run(self, frames):
        for frame in frames:
            yield self.step(frame.k, frame.observations)
