"""Scenario configuration: one JSON-loadable structure covering every
simulation parameter, with the published experiment values as defaults."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .dynamics import KinematicLimits
from .highway import IdmParams, RewardConfig, RoadGeometry, SafeSetSpec
from .modes import ReachabilityConfig
from .orca import BcConfig


class ConfigError(ValueError):
    """Raised when a configuration fails validation."""


@dataclass(frozen=True)
class SimulationParams:
    dt: float = 0.1  # base simulation step
    controller_period: float = 0.1
    mm_period: float = 0.5  # mode-management decision period
    max_steps: int = 200
    success_hold_steps: int = 10
    v_ego: float = 20.0
    ego_lane: int = 0
    target_lane: int = 1
    density: float = 1.0
    crashed_count: int = 0
    spawn_min_gap: float = 15.0
    spawn_window: tuple[float, float] = (15.0, 135.0)


@dataclass(frozen=True)
class EpisodeConfig:
    road: RoadGeometry = field(default_factory=RoadGeometry)
    limits: KinematicLimits = field(default_factory=KinematicLimits)
    idm: IdmParams = field(default_factory=IdmParams)
    reward: RewardConfig = field(default_factory=RewardConfig)
    bc: BcConfig = field(default_factory=BcConfig)
    reach: ReachabilityConfig = field(default_factory=ReachabilityConfig)
    safety: SafeSetSpec = field(default_factory=SafeSetSpec)
    sim: SimulationParams = field(default_factory=SimulationParams)

    def validate(self) -> "EpisodeConfig":
        self.limits.validate()
        self.idm.validate()
        self.bc.validate()
        self.reach.validate()
        sim = self.sim
        if sim.dt <= 0.0 or sim.max_steps < 1:
            raise ConfigError("dt must be positive and max_steps at least 1")
        for period, name in ((sim.controller_period, "controller_period"), (sim.mm_period, "mm_period")):
            ratio = period / sim.dt
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ConfigError(f"{name} must be a positive multiple of dt")
        if not (sim.mm_period > self.reach.t_ac and sim.mm_period > self.reach.t_bc):
            raise ConfigError("mm_period must exceed both controller intervals")
        if abs(sim.mm_period - self.reach.dt_mm) > 1e-9:
            raise ConfigError("sim.mm_period and reach.dt_mm must agree")
        if abs(sim.dt - self.reach.sim_dt) > 1e-9:
            raise ConfigError("sim.dt and reach.sim_dt must agree")
        if abs(sim.controller_period - self.reach.controller_period) > 1e-9:
            raise ConfigError("controller periods in sim and reach must agree")
        if not (0 <= sim.ego_lane < self.road.lane_count):
            raise ConfigError("ego_lane outside the road")
        if not (0 <= sim.target_lane < self.road.lane_count):
            raise ConfigError("target_lane outside the road")
        if abs(self.safety.road_width - self.road.width) > 1e-9:
            raise ConfigError("safety.road_width must equal the road width")
        if sim.density < 0.0 or sim.crashed_count < 0:
            raise ConfigError("density and crashed_count must be non-negative")
        return self


_SECTION_TYPES = {
    "road": RoadGeometry,
    "limits": KinematicLimits,
    "idm": IdmParams,
    "reward": RewardConfig,
    "bc": BcConfig,
    "reach": ReachabilityConfig,
    "safety": SafeSetSpec,
    "sim": SimulationParams,
}


def _build_section(cls, base, overrides: dict, path: str):
    valid = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - valid
    if unknown:
        raise ConfigError(f"unknown keys in {path}: {sorted(unknown)}")
    coerced = {}
    for key, value in overrides.items():
        if key == "spawn_window":
            value = tuple(float(v) for v in value)
        current = getattr(base, key)
        if isinstance(current, int) and not isinstance(current, bool):
            if isinstance(value, float) and value.is_integer():
                value = int(value)  # JSON numbers arrive as floats
        coerced[key] = value
    try:
        return dataclasses.replace(base, **coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value in {path}: {exc}") from exc


def config_from_dict(data: dict | None) -> EpisodeConfig:
    """Build an EpisodeConfig from (possibly partial) nested overrides."""
    base = EpisodeConfig()
    if not data:
        return base.validate()
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(data) - set(_SECTION_TYPES)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    sections = {}
    for name, cls in _SECTION_TYPES.items():
        overrides = data.get(name, {})
        if not isinstance(overrides, dict):
            raise ConfigError(f"section {name} must be an object")
        sections[name] = _build_section(cls, getattr(base, name), overrides, name)
    return EpisodeConfig(**sections).validate()


def config_to_dict(config: EpisodeConfig) -> dict:
    out = {}
    for name in _SECTION_TYPES:
        section = dataclasses.asdict(getattr(config, name))
        for key, value in section.items():
            if isinstance(value, tuple):
                section[key] = list(value)
        out[name] = section
    return out


def load_config(path) -> EpisodeConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def default_config() -> EpisodeConfig:
    return EpisodeConfig().validate()


def with_overrides(config: EpisodeConfig, **section_overrides) -> EpisodeConfig:
    """Functional update of nested sections, e.g.
    with_overrides(cfg, sim={"density": 2.0})."""
    merged = config_to_dict(config)
    for name, overrides in section_overrides.items():
        if name not in merged:
            raise ConfigError(f"unknown config section {name}")
        merged[name].update(overrides)
    return config_from_dict(merged)
