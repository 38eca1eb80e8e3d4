"""Tracker configuration, named presets and JSON config files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .conjugate import ForgettingConfig, GammaPosterior, InvGammaPosterior
from .dynamics import IseClassParams
from .tracks import DeletionHeuristics
from .world import SceneConfig

TRACKERS = ("gapp-class", "gapp-reaction")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class RevivalConfig:
    d_zeta: int = 3
    allow_resplit_of_revived: bool = False

    def __post_init__(self):
        if self.d_zeta < 1:
            raise ConfigError(f"d_zeta must be >= 1, got {self.d_zeta}")


@dataclass(frozen=True)
class TrackerConfig:
    tracker: str = "gapp-class"
    particles: int = 50
    scene: SceneConfig = field(default_factory=SceneConfig)
    class_params: tuple[IseClassParams, ...] = (IseClassParams(100.0, 4.0), IseClassParams(10.0, 1.0))
    class_prior: tuple[float, ...] = (0.5, 0.5)
    clutter_prior: GammaPosterior = GammaPosterior(9.0, 0.75)
    detection_prior: GammaPosterior = GammaPosterior(4.0, 1.0)
    birth_prior: GammaPosterior = GammaPosterior(0.05, 1.0)
    noise_prior: InvGammaPosterior = InvGammaPosterior(3.0, 2.0)
    survival_prob: float = 0.98
    heuristics: DeletionHeuristics = DeletionHeuristics()
    revival: RevivalConfig = RevivalConfig()
    forgetting: ForgettingConfig = ForgettingConfig()
    ess_threshold: float = 0.5
    merge_scale: float = 0.5

    def __post_init__(self):
        if self.tracker not in TRACKERS:
            raise ConfigError(f"tracker must be one of {TRACKERS}, got {self.tracker!r}")
        if self.particles < 1:
            raise ConfigError(f"particles must be >= 1, got {self.particles}")
        if len(self.class_prior) != len(self.class_params) or abs(sum(self.class_prior) - 1.0) > 1e-9:
            raise ConfigError("class_prior must be a distribution over class_params")
        if not 0.0 < self.survival_prob <= 1.0:
            raise ConfigError("survival_prob must lie in (0, 1]")
        if not 0.0 <= self.ess_threshold <= 1.0:
            raise ConfigError("ess_threshold must lie in [0, 1]")
        steps = {p.step for p in self.class_params}
        if steps != {self.scene.step}:
            raise ConfigError(f"class step sizes {steps} differ from the scene step {self.scene.step}")

    @property
    def revival_enabled(self) -> bool:
        return self.tracker == "gapp-reaction"

    def with_overrides(self, **kw) -> "TrackerConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "tracker": self.tracker,
            "particles": self.particles,
            "scene": {"bounds": [list(b) for b in self.scene.bounds], "step": self.scene.step, "horizon": self.scene.horizon},
            "class_params": [[p.sigma2, p.ell, p.window] for p in self.class_params],
            "class_prior": list(self.class_prior),
            "clutter_prior": [self.clutter_prior.shape, self.clutter_prior.rate],
            "detection_prior": [self.detection_prior.shape, self.detection_prior.rate],
            "birth_prior": [self.birth_prior.shape, self.birth_prior.rate],
            "noise_prior": [self.noise_prior.shape, self.noise_prior.scale],
            "survival_prob": self.survival_prob,
            "heuristics": {
                "max_pos_std": self.heuristics.max_pos_std,
                "max_miss_streak": self.heuristics.max_miss_streak,
                "min_expected_rate": self.heuristics.min_expected_rate,
                "scene_margin": self.heuristics.scene_margin,
            },
            "revival": {"d_zeta": self.revival.d_zeta, "allow_resplit_of_revived": self.revival.allow_resplit_of_revived},
            "forgetting": {
                "lambda_gamma": self.forgetting.lambda_gamma,
                "lambda_mu": self.forgetting.lambda_mu,
                "lambda_s2": self.forgetting.lambda_s2,
            },
            "ess_threshold": self.ess_threshold,
            "merge_scale": self.merge_scale,
        }


def _synthetic() -> TrackerConfig:
    return TrackerConfig()


def _radar() -> TrackerConfig:
    return TrackerConfig(
        particles=100,
        class_params=(IseClassParams(40.0, 2.0), IseClassParams(100.0, 8.0)),
        clutter_prior=GammaPosterior(10.0, 1.0),
        detection_prior=GammaPosterior(50.0, 10.0),
        birth_prior=GammaPosterior(0.01, 1.0),
        noise_prior=InvGammaPosterior(1.6e3, 64e3),
        heuristics=DeletionHeuristics(max_pos_std=1000.0),
    )


PRESETS = {"synthetic": _synthetic, "radar": _radar}


def preset(name: str) -> TrackerConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def config_from_dict(d: dict, base: TrackerConfig | None = None) -> TrackerConfig:
    """Overlay a (possibly partial) config dict on a preset.

    The optional ``"preset"`` key selects the base; it defaults to "synthetic".
    """
    d = dict(d)
    base = base or preset(d.pop("preset", "synthetic"))
    d.pop("preset", None)
    kw = {}
    try:
        scene = base.scene
        if "scene" in d:
            s = d.pop("scene")
            scene = SceneConfig(
                tuple(tuple(float(x) for x in b) for b in s.get("bounds", scene.bounds)),
                float(s.get("step", scene.step)),
                int(s.get("horizon", scene.horizon)),
            )
            kw["scene"] = scene
        if "class_params" in d:
            kw["class_params"] = tuple(
                IseClassParams(float(c[0]), float(c[1]), int(c[2]) if len(c) > 2 else 10, scene.step)
                for c in d.pop("class_params")
            )
        elif "scene" in kw:
            kw["class_params"] = tuple(replace(p, step=scene.step) for p in base.class_params)
        for key in ("clutter_prior", "detection_prior", "birth_prior"):
            if key in d:
                kw[key] = GammaPosterior(*map(float, d.pop(key)))
        if "noise_prior" in d:
            kw["noise_prior"] = InvGammaPosterior(*map(float, d.pop("noise_prior")))
        if "heuristics" in d:
            kw["heuristics"] = replace(base.heuristics, **d.pop("heuristics"))
        if "revival" in d:
            kw["revival"] = replace(base.revival, **d.pop("revival"))
        if "forgetting" in d:
            kw["forgetting"] = replace(base.forgetting, **d.pop("forgetting"))
        if "class_prior" in d:
            kw["class_prior"] = tuple(float(x) for x in d.pop("class_prior"))
        for key in ("tracker", "particles", "survival_prob", "ess_threshold", "merge_scale"):
            if key in d:
                kw[key] = d.pop(key)
        if d:
            raise ConfigError(f"unknown config keys: {sorted(d)}")
        return replace(base, **kw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None, base: TrackerConfig | None = None) -> TrackerConfig:
    if path is None:
        return base or preset("synthetic")
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return config_from_dict(raw, base)
