"""Tracking metrics: GOSPA, weighted SIAP and hyperparameter aRMSE."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .conjugate import GammaPosterior, InvGammaPosterior
from .estimates import StepSnapshot, point_estimates


@dataclass(frozen=True)
class GospaConfig:
    order: float = 2.0
    cutoff: float = 10.0
    alpha: float = 2.0

    def __post_init__(self):
        if self.order < 1 or self.cutoff <= 0 or not 0 < self.alpha <= 2:
            raise ValueError(f"invalid GOSPA parameters: {self}")


def gospa(truth, estimates, config: GospaConfig = GospaConfig()) -> float:
    """GOSPA distance between two finite point sets of equal dimension."""
    x = np.asarray(truth, dtype=float)
    y = np.asarray(estimates, dtype=float)
    nx = 0 if x.size == 0 else len(np.atleast_2d(x))
    ny = 0 if y.size == 0 else len(np.atleast_2d(y))
    p, c = config.order, config.cutoff
    unmatched = c**p / config.alpha * abs(nx - ny)
    if nx == 0 or ny == 0:
        return float(unmatched ** (1.0 / p))
    cost = np.minimum(cdist(np.atleast_2d(x), np.atleast_2d(y)), c) ** p
    rows, cols = linear_sum_assignment(cost)
    # fsum: exact symmetry under swapping the sets
    return float((math.fsum(cost[rows, cols]) + unmatched) ** (1.0 / p))


@dataclass
class TruthStep:
    ids: np.ndarray
    positions: np.ndarray
    classes: np.ndarray
    rates: np.ndarray


def truth_at(objects, k: int, dims: int) -> TruthStep:
    alive = [o for o in objects if o.active_at(k)]
    return TruthStep(
        np.array([o.id for o in alive], dtype=np.int64),
        np.array([o.position_at(k) for o in alive], dtype=float).reshape(len(alive), dims),
        np.array([o.class_label for o in alive], dtype=np.int64),
        np.array([o.detection_rate for o in alive], dtype=float),
    )


def associate(truth_pos: np.ndarray, track_pos: np.ndarray, gate: float) -> np.ndarray:
    """Index of each track's nearest truth within ``gate``, else -1."""
    if len(track_pos) == 0 or len(truth_pos) == 0:
        return np.full(len(track_pos), -1, dtype=np.int64)
    d = cdist(track_pos, truth_pos)
    nearest = d.argmin(axis=1)
    ok = d[np.arange(len(track_pos)), nearest] < gate
    return np.where(ok, nearest, -1)


@dataclass
class SiapReport:
    continuity: float
    ambiguity: float
    spuriousness: float
    positional: float
    break_rate: float

    @property
    def milli_breaks(self) -> float:
        return 1000.0 * self.break_rate

    def to_dict(self) -> dict:
        return {
            "C": float(self.continuity),
            "A": float(self.ambiguity),
            "S": float(self.spuriousness),
            "P": float(self.positional),
            "R": float(self.break_rate),
            "mR": float(self.milli_breaks),
        }


def _lineage(steps: list[StepSnapshot]) -> np.ndarray:
    """``path[k, j]``: index at step ``k`` of final particle ``j``'s ancestor."""
    n_steps = len(steps)
    n_final = len(steps[-1].particles)
    path = np.empty((n_steps, n_final), dtype=np.int64)
    path[-1] = np.arange(n_final)
    for k in range(n_steps - 1, 0, -1):
        path[k - 1] = steps[k].ancestors[path[k]]
    return path


def siap(truths: list[TruthStep], steps: list[StepSnapshot], gate: float = 10.0) -> SiapReport:
    """Weighted SIAP over a run; ``truths[k]`` pairs with ``steps[k]``."""
    truth_steps = 0
    w_assoc_truth = w_assoc_track = w_unassoc = w_tracks = w_err = 0.0
    for tr, st in zip(truths, steps):
        truth_steps += len(tr.ids)
        for part in st.particles:
            a = associate(tr.positions, part.positions, gate)
            hit = a >= 0
            w = part.weight
            w_assoc_truth += w * len(np.unique(a[hit]))
            w_assoc_track += w * hit.sum()
            w_unassoc += w * (~hit).sum()
            w_tracks += w * len(a)
            if hit.any():
                w_err += w * np.linalg.norm(part.positions[hit] - tr.positions[a[hit]], axis=1).sum()

    breaks = assoc_time = 0.0
    if steps:
        path = _lineage(steps)
        final_w = np.array([p.weight for p in steps[-1].particles])
        for j in range(path.shape[1]):
            last: dict[int, int] = {}
            n_breaks = n_assoc = 0
            for k, (tr, st) in enumerate(zip(truths, steps)):
                part = st.particles[path[k, j]]
                a = associate(tr.positions, part.positions, gate)
                for ti in np.unique(a[a >= 0]):
                    mine = np.flatnonzero(a == ti)
                    d = np.linalg.norm(part.positions[mine] - tr.positions[ti], axis=1)
                    tid = int(part.ids[mine[d.argmin()]])
                    key = int(tr.ids[ti])
                    if key in last and last[key] != tid:
                        n_breaks += 1
                    last[key] = tid
                    n_assoc += 1
            breaks += final_w[j] * n_breaks
            assoc_time += final_w[j] * n_assoc

    nan = math.nan
    return SiapReport(
        continuity=w_assoc_truth / truth_steps if truth_steps else nan,
        ambiguity=w_assoc_track / w_assoc_truth if w_assoc_truth else nan,
        spuriousness=w_unassoc / w_tracks if w_tracks else nan,
        positional=w_err / w_assoc_track if w_assoc_track else nan,
        break_rate=breaks / assoc_time if assoc_time else nan,
    )


def gospa_series(truths: list[TruthStep], steps: list[StepSnapshot], config: GospaConfig = GospaConfig(), threshold: float = 0.5) -> list[float]:
    """Per-step GOSPA of the point estimates against the truth."""
    return [
        gospa(tr.positions, np.array([e.position for e in point_estimates(st, threshold)]), config)
        for tr, st in zip(truths, steps)
    ]


def mean_gospa(truths: list[TruthStep], steps: list[StepSnapshot], config: GospaConfig = GospaConfig(), threshold: float = 0.5) -> float:
    vals = gospa_series(truths, steps, config, threshold)
    return float(np.mean(vals)) if vals else math.nan


@dataclass
class ArmseReport:
    noise_var: float
    birth_rate: float
    clutter_rate: float
    detection_rate: float
    classification: float

    def to_dict(self) -> dict:
        return {
            "s2": float(self.noise_var),
            "gamma": float(self.birth_rate),
            "mu0": float(self.clutter_rate),
            "mu_pos": float(self.detection_rate),
            "class": float(self.classification),
        }


def _mixture_rmse(steps, pick, truth: float, inverse: bool = False) -> float:
    per_step = []
    for st in steps:
        m = 0.0
        for part in st.particles:
            a, b = pick(part)
            post = InvGammaPosterior(a, b) if inverse else GammaPosterior(a, b)
            m += part.weight * post.mse(truth)
        per_step.append(math.sqrt(m) if math.isfinite(m) else math.nan)
    return float(np.mean(per_step)) if per_step else math.nan


def armse(truths: list[TruthStep], steps: list[StepSnapshot], params, gate: float = 10.0) -> ArmseReport:
    """Time-averaged posterior RMSE of each hyperparameter and of the class.

    Detection-rate and class errors are taken per associated truth step;
    noise variance is NaN while its posterior lacks a second moment.
    """
    s2 = _mixture_rmse(steps, lambda p: p.noise, params.noise_var, inverse=True)
    gamma = _mixture_rmse(steps, lambda p: p.birth, params.birth_rate)
    mu0 = _mixture_rmse(steps, lambda p: p.clutter, params.clutter_rate)
    rate_err, class_err = [], []
    for tr, st in zip(truths, steps):
        for ti in range(len(tr.ids)):
            w_tot = m_rate = m_cls = 0.0
            for part in st.particles:
                a = associate(tr.positions, part.positions, gate)
                mine = np.flatnonzero(a == ti)
                if mine.size == 0:
                    continue
                d = np.linalg.norm(part.positions[mine] - tr.positions[ti], axis=1)
                i = mine[d.argmin()]
                w = part.weight
                w_tot += w
                m_rate += w * GammaPosterior(part.rate_shape[i], part.rate_rate[i]).mse(tr.rates[ti])
                m_cls += w * (1.0 - part.class_probs[i, tr.classes[ti]])
            if w_tot > 0:
                rate_err.append(math.sqrt(m_rate / w_tot))
                class_err.append(math.sqrt(max(m_cls / w_tot, 0.0)))
    return ArmseReport(
        noise_var=s2,
        birth_rate=gamma,
        clutter_rate=mu0,
        detection_rate=float(np.mean(rate_err)) if rate_err else math.nan,
        classification=float(np.mean(class_err)) if class_err else math.nan,
    )
