"""Scenario configuration: YAML in, validated dataclasses out."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml

SCHEMA_VERSION = 1
MAX_ANCHORS = 4


class ConfigError(ValueError):
    pass


@dataclass
class BarConfig:
    name: str
    p0: list[float]
    p1: list[float]
    radius: float = 0.03
    label: str = "bar"


@dataclass
class RobotConfig:
    position: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    mass: float = 8.0
    camera_offset: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.6])
    damping: float = 3.0


@dataclass
class AnchorConfig:
    target: str
    pad: list[float]  # takeoff pad / winch exit, relative to the robot
    mirrored: bool = False
    yaw: float = 0.0
    odom_u: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    odom_phi: float = 0.0


@dataclass
class CameraConfig:
    sweep: list[list[float]] = field(default_factory=lambda: [[0.0, 0.5]])  # [yaw, pitch] rad
    dwell: float = 0.5  # s per sweep pose
    rate: float = 20.0  # processed frames per second
    width: int = 240
    height: int = 180
    focal: float = 170.0


@dataclass
class NoiseOverrides:
    sigma_velocity: float = 0.02
    sigma_odom_position: float = 0.02
    sigma_odom_velocity: float = 0.05
    sigma_odom_yaw: float = 0.02
    odom_drift_u: float = 0.0
    odom_drift_phi: float = 0.0
    sigma_depth: float = 0.005
    sigma_accel: float = 0.5
    sigma_cam: float = 0.05
    detector_center_px: float = 3.0
    detector_scale: float = 0.05
    detector_false_negative: float = 0.1
    detector_dropout: float = 0.05


@dataclass
class DriveStep:
    name: str
    tensions: list[float]
    duration: float
    direction: Optional[list[float]] = None  # expected displacement direction


@dataclass
class MissionConfig:
    target_ready_trace: float = 0.01
    target_min_hits: int = 3
    target_threshold: float = 0.3
    anchor_threshold: float = 0.5
    takeoff_height: float = 1.0
    reach_tolerance: float = 0.10
    concurrent_tying: bool = False
    camera_fix_during_tying: bool = True
    hold_tensions: list[float] = field(default_factory=lambda: [20.0])
    hold_duration: float = 1.0
    drive: list[DriveStep] = field(default_factory=list)
    budgets: dict[str, float] = field(default_factory=lambda: {
        "recognize": 30.0, "launch": 30.0, "tie": 120.0, "tension": 10.0, "reel": 60.0})


@dataclass
class ScenarioConfig:
    name: str
    bars: list[BarConfig]
    anchors: list[AnchorConfig]
    robot: RobotConfig = field(default_factory=RobotConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    noise: NoiseOverrides = field(default_factory=NoiseOverrides)
    mission: MissionConfig = field(default_factory=MissionConfig)
    tick_rate: float = 20.0
    duration: float = 300.0
    seed: int = 0
    schema_version: int = SCHEMA_VERSION

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_rate

    def validate(self) -> "ScenarioConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if not 1 <= len(self.anchors) <= MAX_ANCHORS:
            raise ConfigError(f"anchor count must be in [1, {MAX_ANCHORS}], got {len(self.anchors)}")
        names = [b.name for b in self.bars]
        if len(set(names)) != len(names):
            raise ConfigError("bar names must be unique")
        for a in self.anchors:
            if a.target not in names:
                raise ConfigError(f"anchor target {a.target!r} is not a known bar")
            if len(a.pad) != 3 or len(a.odom_u) != 3:
                raise ConfigError("anchor pad and odom_u need three components")
        for b in self.bars:
            if b.radius <= 0:
                raise ConfigError(f"bar {b.name!r} radius must be positive")
            if b.label not in ("bar", "branch"):
                raise ConfigError(f"bar {b.name!r} label must be bar or branch")
        if self.tick_rate <= 0 or self.duration < 0:
            raise ConfigError("tick_rate must be positive and duration non-negative")
        n = len(self.anchors)
        if len(self.mission.hold_tensions) not in (1, n):
            raise ConfigError("hold_tensions needs one value or one per anchor")
        for step in self.mission.drive:
            if len(step.tensions) not in (1, n):
                raise ConfigError(f"drive step {step.name!r} needs one tension or one per anchor")
            if any(t < 0 or t > 180.0 for t in step.tensions):
                raise ConfigError(f"drive step {step.name!r} tension outside [0, 180] N")
        if not self.camera.sweep:
            raise ConfigError("camera sweep needs at least one pose")
        return self

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _build(cls, data: Any):
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict[str, Any]) -> ScenarioConfig:
    data = dict(data)
    try:
        data["bars"] = [_build(BarConfig, b) for b in data.get("bars", [])]
        data["anchors"] = [_build(AnchorConfig, a) for a in data.get("anchors", [])]
        if "robot" in data:
            data["robot"] = _build(RobotConfig, data["robot"])
        if "camera" in data:
            data["camera"] = _build(CameraConfig, data["camera"])
        if "noise" in data:
            data["noise"] = _build(NoiseOverrides, data["noise"])
        if "mission" in data:
            m = dict(data["mission"])
            m["drive"] = [_build(DriveStep, s) for s in m.get("drive", [])]
            data["mission"] = _build(MissionConfig, m)
        cfg = _build(ScenarioConfig, data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    with path.open() as fh:
        data = yaml.safe_load(fh)
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def save_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(dump_config(cfg))


PRESET_DIR = Path(__file__).parent / "scenarios"


def preset_path(name: str) -> Path:
    return PRESET_DIR / f"{name}.yaml"


def load_preset(name: str, seed: Optional[int] = None) -> ScenarioConfig:
    cfg = load_config(preset_path(name))
    if seed is not None:
        cfg.seed = seed
    return cfg
