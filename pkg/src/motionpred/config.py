"""Tracker configuration and its INI file form.

Every tunable lives in :class:`TrackerConfig`. On disk it is an INI file
with ``[tracker]``, ``[kalman]``, ``[ransac]`` and ``[ablation]`` sections;
missing keys keep their defaults and unknown keys are rejected.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .geometry import RansacConfig
from .kalman import KalmanModel


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrackerConfig:
    n: int = 10
    theta_v: float = 5.0
    theta_d: float = 0.7
    reinit_skip: int = 5
    handoff_velocity_inflation: float = 2.0
    scale_tolerance: float = 0.1
    seed: int = 0
    # kalman noise, as standard deviations
    q_pos: float = 1.0
    q_size: float = 1.0
    q_vel: float = 0.25
    r_pos: float = 4.0
    r_size: float = 4.0
    init_pos_std: float = 10.0
    init_size_std: float = 10.0
    init_vel_std: float = 10.0
    ransac: RansacConfig = field(default_factory=RansacConfig)
    # ablation switches: motion decouple, motion prediction, adaptive search region
    md: bool = True
    mp: bool = True
    asr: bool = True
    fixed_k: float = 2.0

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError("tracker.n must be >= 2")
        if not 0.0 <= self.theta_d <= 1.0:
            raise ConfigError("tracker.theta_d must lie in [0, 1]")
        if self.reinit_skip < 0:
            raise ConfigError("tracker.reinit_skip must be >= 0")
        if not np.isfinite(self.theta_v):
            raise ConfigError("tracker.theta_v must be finite")
        if self.handoff_velocity_inflation < 1.0:
            raise ConfigError("tracker.handoff_velocity_inflation must be >= 1")
        if self.fixed_k <= 0:
            raise ConfigError("ablation.fixed_k must be > 0")

    @property
    def kalman_model(self) -> KalmanModel:
        return KalmanModel.constant_velocity(self.q_pos, self.q_size, self.q_vel,
                                             self.r_pos, self.r_size)

    @property
    def initial_covariance(self) -> np.ndarray:
        p, s, v = self.init_pos_std, self.init_size_std, self.init_vel_std
        return np.diag(np.square([p, p, s, s, v, v]))

    def with_ablation(self, md: bool, mp: bool, asr: bool) -> "TrackerConfig":
        return dataclasses.replace(self, md=md, mp=mp, asr=asr)


_SECTIONS = {
    "tracker": ("n", "theta_v", "theta_d", "reinit_skip", "handoff_velocity_inflation",
                "scale_tolerance", "seed"),
    "kalman": ("q_pos", "q_size", "q_vel", "r_pos", "r_size",
               "init_pos_std", "init_size_std", "init_vel_std"),
    "ablation": ("md", "mp", "asr", "fixed_k"),
}


def _coerce(parser: configparser.ConfigParser, section: str, key: str, default):
    try:
        if isinstance(default, bool):
            return parser.getboolean(section, key)
        if isinstance(default, int):
            return parser.getint(section, key)
        return parser.getfloat(section, key)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: {exc}") from exc


def config_from_ini(text: str) -> TrackerConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    defaults = TrackerConfig()
    kwargs = {}
    ransac_defaults = RansacConfig()
    ransac_kwargs = {}
    for section in parser.sections():
        if section == "ransac":
            allowed = {f.name: getattr(ransac_defaults, f.name)
                       for f in dataclasses.fields(RansacConfig)}
            target = ransac_kwargs
        elif section in _SECTIONS:
            allowed = {k: getattr(defaults, k) for k in _SECTIONS[section]}
            target = kwargs
        else:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in allowed:
                raise ConfigError(f"{section}.{key}: unknown key")
            target[key] = _coerce(parser, section, key, allowed[key])
    try:
        kwargs["ransac"] = RansacConfig(**ransac_kwargs)
        return TrackerConfig(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> TrackerConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_ini(fh.read())


def config_to_ini(cfg: TrackerConfig) -> str:
    parser = configparser.ConfigParser()
    for section, keys in _SECTIONS.items():
        parser[section] = {k: str(getattr(cfg, k)).lower() if isinstance(getattr(cfg, k), bool)
                           else repr(getattr(cfg, k)) for k in keys}
    parser["ransac"] = {f.name: repr(getattr(cfg.ransac, f.name))
                        for f in dataclasses.fields(RansacConfig)}
    lines = []
    for section in ("tracker", "kalman", "ransac", "ablation"):
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in parser[section].items())
        lines.append("")
    return "\n".join(lines)
