"""Multi-object tracking with integrated-GP dynamics and a particle filter."""

from .config import ConfigError, RevivalConfig, TrackerConfig, load_config, preset
from .filter import ParticleTracker
from .world import GenParams, SceneConfig, generate_scenario

__all__ = [
    "ConfigError",
    "GenParams",
    "ParticleTracker",
    "RevivalConfig",
    "SceneConfig",
    "TrackerConfig",
    "generate_scenario",
    "load_config",
    "preset",
]
