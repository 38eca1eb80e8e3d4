"""Deterministic pre-clustering of a frame by kernel-density mode matching."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_SHIFT_ITERS = 200


@dataclass(frozen=True)
class Cluster:
    members: tuple[int, ...]
    mean: np.ndarray
    argmax_mean: np.ndarray

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class ClusterSet:
    clusters: list[Cluster]
    bandwidth: float
    dims: int
    observations: np.ndarray = field(repr=False)
    converged: bool = True

    def __post_init__(self):
        n_cl = len(self.clusters)
        self.sizes = np.array([c.size for c in self.clusters], dtype=float)
        self.means = np.array([c.mean for c in self.clusters], dtype=float).reshape(n_cl, self.dims)
        # per-dimension sum of squared deviations from the cluster mean
        self.sq_devs = np.zeros((n_cl, self.dims))
        for i, c in enumerate(self.clusters):
            pts = self.observations[list(c.members)]
            self.sq_devs[i] = np.sum((pts - c.mean) ** 2, axis=0)

    def __len__(self) -> int:
        return len(self.clusters)

    def points(self, idx: int) -> np.ndarray:
        return self.observations[list(self.clusters[idx].members)]


def pooled_noise_estimate(weights, noise_posts) -> float:
    """Weighted average of each particle's noise-variance posterior mean."""
    w = np.asarray(weights, dtype=float)
    means = np.array([p.mean for p in noise_posts], dtype=float)
    return float(w @ means)


def _shift_all(starts: np.ndarray, obs: np.ndarray, bandwidth_var: float):
    x = starts.copy()
    tol = 1e-4 * np.sqrt(bandwidth_var)
    moving = np.ones(len(x), dtype=bool)
    for _ in range(MAX_SHIFT_ITERS):
        idx = np.flatnonzero(moving)
        if idx.size == 0:
            break
        xs = x[idx]
        d2 = np.sum((xs[:, None, :] - obs[None, :, :]) ** 2, axis=-1)
        logw = -0.5 * d2 / bandwidth_var
        logw -= logw.max(axis=1, keepdims=True)
        w = np.exp(logw)
        new = (w @ obs) / w.sum(axis=1, keepdims=True)
        step = np.sqrt(np.sum((new - xs) ** 2, axis=1))
        x[idx] = new
        moving[idx[step < tol]] = False
    return x, not moving.any()


def ksd_mode(start, observations, bandwidth_var: float):
    """Mean-shift ascent of the Gaussian kernel density from ``start``.

    Returns
    -------
    (mode, converged)
    """
    obs = np.atleast_2d(np.asarray(observations, dtype=float))
    start = np.atleast_1d(np.asarray(start, dtype=float))
    modes, ok = _shift_all(start[None, :], obs, bandwidth_var)
    return modes[0], ok


def cluster_frame(observations, bandwidth_var: float, merge_scale: float = 0.5, dims: int | None = None) -> ClusterSet:
    """Group a frame's observations whose density modes coincide.

    Observations are taken in order; each joins the first cluster whose
    mean mode lies within ``merge_scale * sqrt(bandwidth_var)`` of its own
    mode, otherwise it opens a new cluster.
    """
    obs = np.asarray(observations, dtype=float)
    if dims is None:
        dims = obs.shape[1] if obs.ndim == 2 else 1
    obs = obs.reshape(-1, dims)
    if len(obs) == 0:
        return ClusterSet([], bandwidth_var, dims, obs)
    modes, converged = _shift_all(obs, obs, bandwidth_var)
    radius = merge_scale * np.sqrt(bandwidth_var)
    members: list[list[int]] = []
    centres: list[np.ndarray] = []
    for l, z in enumerate(modes):
        for c, centre in enumerate(centres):
            if np.sqrt(np.sum((z - centre) ** 2)) < radius:
                members[c].append(l)
                centres[c] = modes[members[c]].mean(axis=0)
                break
        else:
            members.append([l])
            centres.append(z.copy())
    clusters = [Cluster(tuple(m), obs[m].mean(axis=0), centres[c]) for c, m in enumerate(members)]
    return ClusterSet(clusters, bandwidth_var, dims, obs, converged)


def fixed_clusters(observations, groups, bandwidth_var: float = 1.0, dims: int | None = None) -> ClusterSet:
    """ClusterSet with a prescribed partition, bypassing mode finding."""
    obs = np.asarray(observations, dtype=float)
    if dims is None:
        dims = obs.shape[1] if obs.ndim == 2 else 1
    obs = obs.reshape(-1, dims)
    clusters = []
    for g in groups:
        g = tuple(int(i) for i in g)
        mean = obs[list(g)].mean(axis=0)
        clusters.append(Cluster(g, mean, mean.copy()))
    return ClusterSet(clusters, bandwidth_var, dims, obs)
