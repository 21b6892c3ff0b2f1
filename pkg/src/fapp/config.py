"""Experiment configuration and the three standard petal-path cases."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .baseline import TrackerGains
from .errors import ConfigError
from .flatness import QuadrotorParams
from .mpc import ConstraintSpec, OcpWeights
from .path import BezierPath
from .simulator import NO_WIND, WindMode, WindModel

SCHEMA_VERSION = 1
CONTROLLERS = ("fapp", "baseline")

PETAL_CONTROL_POINTS = (
    (0.0, 0.0, 1.0, 0.0),
    (3.0, 2.0, 0.0, 0.0),
    (3.0, -2.0, 0.0, 0.0),
    (0.0, 0.0, 1.0, 0.0),
)

CASE_OFFSETS = {
    "i": (0.05, 0.05, 0.0),
    "ii": (-0.8, 0.8, 0.3),
    "iii": (0.05, 0.05, 0.0),
}

CASE_III_WIND = WindModel(mode=WindMode.CONSTANT_FORCE, force=(0.0, -1.5, 0.0),
                          start=2.0, duration=4.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one closed-loop episode."""

    control_points: tuple = PETAL_CONTROL_POINTS
    weights: OcpWeights = field(default_factory=OcpWeights)
    constraints: ConstraintSpec = field(default_factory=ConstraintSpec)
    quad: QuadrotorParams = field(default_factory=QuadrotorParams)
    gains: TrackerGains = field(default_factory=TrackerGains)
    initial_offset: tuple = CASE_OFFSETS["i"]
    initial_theta_dot: float = 0.0
    wind: WindModel = NO_WIND
    duration: float = 12.0
    controller: str = "fapp"
    seed: int = 0
    mpc_dt: float = 0.1
    horizon: int = 10
    sim_dt: float = 1.0 / 200.0
    control_decimation: int = 3
    stop_at_path_end: bool = True
    reference_file: str | None = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "control_points",
                           tuple(tuple(float(c) for c in pt) for pt in self.control_points))
        object.__setattr__(self, "initial_offset", tuple(float(c) for c in self.initial_offset))
        self.validate()

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version {self.schema_version}")
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"controller must be one of {CONTROLLERS}, got {self.controller!r}")
        if not (self.duration >= 0 and math.isfinite(self.duration)):
            raise ConfigError("duration must be a finite non-negative number")
        if not (self.initial_theta_dot >= 0 and math.isfinite(self.initial_theta_dot)):
            raise ConfigError("initial_theta_dot must be finite and non-negative")
        if len(self.initial_offset) != 3:
            raise ConfigError("initial_offset must be a 3-vector")
        if self.horizon < 1 or self.control_decimation < 1:
            raise ConfigError("horizon and control_decimation must be positive")
        if not (self.mpc_dt > 0 and self.sim_dt > 0):
            raise ConfigError("time steps must be positive")
        if len(self.control_points) < 2 or any(len(pt) != 4 for pt in self.control_points):
            raise ConfigError("control_points must list at least two 4-vectors")

    @property
    def degree(self):
        return len(self.control_points) - 1

    def path(self):
        try:
            return BezierPath(self.control_points)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def control_dt(self):
        return self.control_decimation * self.sim_dt

    def to_dict(self):
        data = asdict(self)
        data["path"] = {"degree": self.degree,
                        "control_points": [list(pt) for pt in data.pop("control_points")]}
        data["wind"]["mode"] = self.wind.mode.value
        data["wind"]["duration"] = _finite_or_none(self.wind.duration)
        return _listify(data)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        try:
            path = data.pop("path")
            if len(path["control_points"]) != int(path["degree"]) + 1:
                raise ConfigError("path degree does not match the number of control points")
            wind = dict(data.pop("wind", {}))
            if wind.get("duration", math.inf) is None:
                wind["duration"] = math.inf
            kwargs = dict(
                control_points=path["control_points"],
                weights=OcpWeights(**data.pop("weights", {})),
                constraints=ConstraintSpec(**data.pop("constraints", {})),
                quad=QuadrotorParams(**data.pop("quad", {})),
                gains=TrackerGains(**data.pop("gains", {})),
                wind=WindModel(**wind),
            )
            known = {f.name for f in fields(cls)}
            unknown = set(data) - known
            if unknown:
                raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
            kwargs.update(data)
            return cls(**kwargs)
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def save(self, filename):
        with open(filename, "w") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, filename):
        try:
            with open(filename) as fh:
                return cls.from_json(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {filename}: {exc}") from exc


def _finite_or_none(value):
    return None if math.isinf(value) else value


def _listify(obj):
    if isinstance(obj, dict):
        return {k: _listify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_listify(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def case_config(case, controller="fapp", **overrides):
    """Configuration of experiment case ``"i"``, ``"ii"`` or ``"iii"``."""
    if case not in CASE_OFFSETS:
        raise ConfigError(f"unknown case {case!r}")
    wind = CASE_III_WIND if case == "iii" else NO_WIND
    cfg = ExperimentConfig(initial_offset=CASE_OFFSETS[case], wind=wind, controller=controller)
    return replace(cfg, **overrides) if overrides else cfg
