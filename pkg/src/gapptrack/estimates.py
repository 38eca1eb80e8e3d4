"""Compact per-step summaries of the particle set and point estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ParticleSnapshot:
    weight: float
    ids: np.ndarray
    positions: np.ndarray
    position_vars: np.ndarray
    rate_shape: np.ndarray
    rate_rate: np.ndarray
    class_probs: np.ndarray
    clutter: tuple[float, float]
    birth: tuple[float, float]
    noise: tuple[float, float]


@dataclass
class StepSnapshot:
    k: int
    ancestors: np.ndarray
    particles: list[ParticleSnapshot]


def snapshot_particle(p, weight: float, dims: int, n_classes: int) -> ParticleSnapshot:
    act = p.active_tracks()
    return ParticleSnapshot(
        weight=float(weight),
        ids=np.array([t.id for t in act], dtype=np.int64),
        positions=np.array([t.position_mean() for t in act], dtype=float).reshape(len(act), dims),
        position_vars=np.array([t.position_var() for t in act], dtype=float).reshape(len(act), dims),
        rate_shape=np.array([t.alpha for t in act], dtype=float),
        rate_rate=np.array([t.beta for t in act], dtype=float),
        class_probs=np.array([t.class_probs for t in act], dtype=float).reshape(len(act), n_classes),
        clutter=(p.clutter_post.shape, p.clutter_post.rate),
        birth=(p.birth_post.shape, p.birth_post.rate),
        noise=(p.noise_post.shape, p.noise_post.scale),
    )


def snapshot(record, dims: int, n_classes: int) -> StepSnapshot:
    parts = [snapshot_particle(p, w, dims, n_classes) for p, w in zip(record.particles, record.weights)]
    return StepSnapshot(record.k, np.asarray(record.ancestors), parts)


@dataclass
class TrackEstimate:
    id: int
    existence: float
    position: np.ndarray
    std: np.ndarray
    class_probs: np.ndarray


def point_estimates(step: StepSnapshot, threshold: float = 0.5) -> list[TrackEstimate]:
    """Tracks whose weighted existence reaches ``threshold``, ordered by id.

    Existence of an id is the total weight of particles holding it active;
    position, spread and class probabilities are moments of the weighted
    mixture over those particles.
    """
    mass: dict[int, float] = {}
    first: dict[int, np.ndarray] = {}
    second: dict[int, np.ndarray] = {}
    cls: dict[int, np.ndarray] = {}
    for part in step.particles:
        w = part.weight
        for i, tid in enumerate(part.ids.tolist()):
            mu = part.positions[i]
            mass[tid] = mass.get(tid, 0.0) + w
            first[tid] = first.get(tid, 0.0) + w * mu
            second[tid] = second.get(tid, 0.0) + w * (part.position_vars[i] + mu * mu)
            cls[tid] = cls.get(tid, 0.0) + w * part.class_probs[i]
    out = []
    for tid in sorted(mass):
        m = mass[tid]
        if m >= threshold and m > 0:
            mean = first[tid] / m
            std = np.sqrt(np.maximum(second[tid] / m - mean * mean, 0.0))
            out.append(TrackEstimate(tid, m, mean, std, cls[tid] / m))
    return out
