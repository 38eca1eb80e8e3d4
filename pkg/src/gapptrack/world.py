"""Generative model of objects, births, deaths and Poisson observations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import IseClassParams, build_dynamics


@dataclass(frozen=True)
class SceneConfig:
    bounds: tuple[tuple[float, float], ...] = ((0.0, 1000.0), (0.0, 1000.0))
    step: float = 1.0
    horizon: int = 100

    def __post_init__(self):
        if not 1 <= len(self.bounds) <= 3:
            raise ValueError("scene must have 1 to 3 dimensions")
        if self.volume <= 0:
            raise ValueError(f"scene volume must be positive: {self.bounds}")

    @property
    def dims(self) -> int:
        return len(self.bounds)

    @property
    def volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.bounds]))

    @property
    def density(self) -> float:
        return 1.0 / self.volume

    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds], dtype=float)

    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds], dtype=float)

    def expanded(self, frac: float):
        """Lower and upper corners grown by ``frac`` of the width on each side."""
        lo, hi = self.lower(), self.upper()
        pad = frac * (hi - lo)
        return lo - pad, hi + pad


@dataclass(frozen=True)
class GenParams:
    clutter_rate: float
    birth_rate: float
    noise_var: float
    survival_prob: float = 0.98
    class_prior: tuple[float, ...] = (0.5, 0.5)
    class_params: tuple[IseClassParams, ...] = (IseClassParams(100.0, 4.0), IseClassParams(10.0, 1.0))
    detection_rate_range: tuple[float, float] = (3.0, 6.0)
    forced_initial_object: bool = True
    no_birth_tail: int = 10

    def __post_init__(self):
        if self.clutter_rate < 0 or self.birth_rate < 0 or self.noise_var < 0:
            raise ValueError("rates and noise variance must be non-negative")
        if not 0.0 < self.survival_prob <= 1.0:
            raise ValueError("survival_prob must lie in (0, 1]")
        if abs(sum(self.class_prior) - 1.0) > 1e-9 or len(self.class_prior) != len(self.class_params):
            raise ValueError("class_prior must be a distribution over class_params")

    def to_dict(self) -> dict:
        return {
            "clutter_rate": self.clutter_rate,
            "birth_rate": self.birth_rate,
            "noise_var": self.noise_var,
            "survival_prob": self.survival_prob,
            "class_prior": list(self.class_prior),
            "class_params": [[p.sigma2, p.ell, p.window, p.step] for p in self.class_params],
            "detection_rate_range": list(self.detection_rate_range),
            "forced_initial_object": self.forced_initial_object,
            "no_birth_tail": self.no_birth_tail,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenParams":
        return cls(
            clutter_rate=d["clutter_rate"],
            birth_rate=d["birth_rate"],
            noise_var=d["noise_var"],
            survival_prob=d["survival_prob"],
            class_prior=tuple(d["class_prior"]),
            class_params=tuple(IseClassParams(s, l, int(w), t) for s, l, w, t in d["class_params"]),
            detection_rate_range=tuple(d["detection_rate_range"]),
            forced_initial_object=d["forced_initial_object"],
            no_birth_tail=d["no_birth_tail"],
        )


@dataclass
class TrueObject:
    id: int
    birth_step: int
    death_step: int | None
    class_label: int
    detection_rate: float
    positions: np.ndarray

    def active_at(self, k: int) -> bool:
        return self.birth_step <= k < self.birth_step + len(self.positions)

    def position_at(self, k: int) -> np.ndarray:
        return self.positions[k - self.birth_step]


@dataclass
class Frame:
    k: int
    observations: np.ndarray


@dataclass
class ScenarioDataset:
    step: float
    dims: int
    bounds: tuple[tuple[float, float], ...]
    seed: int | None
    frames: list[Frame]
    truth_params: GenParams | None = None
    objects: list[TrueObject] = field(default_factory=list)
    labels: list[list[int]] | None = None

    @property
    def scene(self) -> SceneConfig:
        return SceneConfig(self.bounds, self.step, len(self.frames))

    @property
    def has_truth(self) -> bool:
        return self.labels is not None


def _simulate_track(dyn, length: int, dims: int, rng) -> np.ndarray:
    state = np.zeros((1, dims))
    out = np.empty((length, dims))
    out[0] = 0.0
    for t in range(1, length):
        tr = dyn.transition(state.shape[0])
        state = tr.f_matrix @ state
        state[0] += np.sqrt(tr.noise_var) * rng.standard_normal(dims)
        out[t] = state[0]
    return out


def _place(rel: np.ndarray, scene: SceneConfig, rng):
    """Translate so the start is uniform over the central 60% of the scene,
    conditioned on the whole trajectory staying within bounds grown by 10%
    per side. Returns None when no such translation exists."""
    lo, hi = scene.lower(), scene.upper()
    width = hi - lo
    start_lo, start_hi = lo + 0.2 * width, hi - 0.2 * width
    exp_lo, exp_hi = scene.expanded(0.1)
    lo_ok = np.maximum(start_lo, exp_lo - rel.min(axis=0))
    hi_ok = np.minimum(start_hi, exp_hi - rel.max(axis=0))
    if np.any(lo_ok > hi_ok):
        return None
    return rel + (lo_ok + (hi_ok - lo_ok) * rng.random(rel.shape[1]))


def generate_scenario(config: SceneConfig, gen: GenParams, seed: int, max_redraws: int = 1000) -> ScenarioDataset:
    rng = np.random.default_rng(seed)
    dims, horizon = config.dims, config.horizon
    class_params = tuple(
        IseClassParams(p.sigma2, p.ell, p.window, config.step) for p in gen.class_params
    )
    dyns = build_dynamics(class_params)
    window = max(p.window for p in class_params)
    last_birth = horizon - gen.no_birth_tail if gen.no_birth_tail else horizon

    objects: list[TrueObject] = []
    for k in range(horizon):
        if k >= last_birth:
            break
        n_new = rng.poisson(gen.birth_rate)
        if k == 0 and gen.forced_initial_object:
            n_new += 1
        for _ in range(n_new):
            cls = int(rng.choice(len(class_params), p=np.asarray(gen.class_prior)))
            lo_r, hi_r = gen.detection_rate_range
            rate = float(lo_r + (hi_r - lo_r) * rng.random())
            length = 1
            while k + length < horizon:
                if length >= window and rng.random() >= gen.survival_prob:
                    break
                length += 1
            death = k + length if k + length < horizon else None
            for _ in range(max_redraws):
                rel = _simulate_track(dyns[cls], length, dims, rng)
                placed = _place(rel, config, rng)
                if placed is not None:
                    break
            else:
                raise RuntimeError(f"could not place a trajectory of length {length} in {config.bounds}")
            objects.append(TrueObject(len(objects) + 1, k, death, cls, rate, placed))

    lo, hi = config.lower(), config.upper()
    noise_sd = np.sqrt(gen.noise_var)
    frames, labels = [], []
    for k in range(horizon):
        pts, src = [], []
        for obj in objects:
            if obj.active_at(k):
                n = rng.poisson(obj.detection_rate)
                pts.append(obj.position_at(k) + noise_sd * rng.standard_normal((n, dims)))
                src.extend([obj.id] * n)
        n0 = rng.poisson(gen.clutter_rate)
        pts.append(lo + (hi - lo) * rng.random((n0, dims)))
        src.extend([0] * n0)
        obs = np.concatenate(pts, axis=0) if pts else np.zeros((0, dims))
        order = rng.permutation(len(obs))
        frames.append(Frame(k, obs[order]))
        labels.append([src[i] for i in order])
    return ScenarioDataset(config.step, dims, tuple(config.bounds), seed, frames, gen, objects, labels)


def sample_default_params(seed: int) -> GenParams:
    rng = np.random.default_rng(seed)
    return GenParams(
        clutter_rate=float(rng.uniform(10.0, 15.0)),
        birth_rate=float(rng.uniform(0.02, 0.1)),
        noise_var=float(rng.uniform(0.5, 2.0)),
    )
