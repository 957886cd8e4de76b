"""Run configuration: every tunable in one flat dotted-key file.

Files hold one `section.key = value` per line (a TOML subset). The file is
read by pydantic-settings' TOML source; command-line overrides arrive as
init kwargs, so they win over file values and merge per section. Environment
variables are deliberately not a source so a run is reproducible from its
config file and seed alone.
"""

from __future__ import annotations

import json
import os
import sys
import tempfile
from contextvars import ContextVar
from pathlib import Path
from typing import Any, Literal

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict, TomlConfigSettingsSource

from wmr.errors import ConfigError


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class RunSection(_Section):
    seed: int = 1
    envs: int = 256
    iters: int = 500
    steps_per_iter: int = 24
    variant: Literal["wmr", "no-cutoff", "random-cmd", "ppo-only"] = "wmr"
    out_dir: str = "runs"
    checkpoint_every: int = 50
    workers: int = 0
    eval_episodes: int = 64


class RobotSection(_Section):
    torso_mass: float = 10.0
    torso_size: list[float] = [0.2, 0.3, 0.3]
    hip_mass: float = 0.3
    hip_radius: float = 0.05
    thigh_mass: float = 1.0
    thigh_length: float = 0.4
    shank_mass: float = 1.0
    shank_length: float = 0.4
    link_radius: float = 0.03
    hip_offset: list[float] = [0.0236, 0.1, -0.15]
    foot_half_length: float = 0.08
    q_default: list[float] = [0.0, -0.3, 0.6, 0.0, -0.3, 0.6]
    q_lower: list[float] = [-0.5, -1.6, 0.0, -0.5, -1.6, 0.0]
    q_upper: list[float] = [0.5, 1.0, 2.2, 0.5, 1.0, 2.2]
    kp: list[float] = [60.0, 80.0, 80.0, 60.0, 80.0, 80.0]
    kd: list[float] = [2.0, 2.0, 2.0, 2.0, 2.0, 2.0]
    torque_limit: list[float] = [35.0, 35.0, 35.0, 35.0, 35.0, 35.0]

    @model_validator(mode="after")
    def _check(self):
        n = len(self.q_default)
        if n != 6:
            raise ValueError("robot.q_default needs 6 entries (two legs of hip-roll, hip-pitch, knee)")
        for name in ("q_lower", "q_upper", "kp", "kd", "torque_limit"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"robot.{name} needs {n} entries")
        if any(lo >= hi for lo, hi in zip(self.q_lower, self.q_upper)):
            raise ValueError("robot joint limits need lower < upper")
        masses = (self.torso_mass, self.hip_mass, self.thigh_mass, self.shank_mass)
        if min(masses) <= 0:
            raise ValueError("robot link masses must be positive")
        return self


class SimSection(_Section):
    dt: float = 0.002
    decimation: int = 10
    episode_seconds: float = 20.0


class ContactSection(_Section):
    k_n: float = 1.0e4
    c_n: float = 100.0
    k_t: float = 1.0e3
    threshold: float = 1.0


class RandomizationSection(_Section):
    enabled: bool = True
    friction: list[float] = [0.2, 1.5]
    payload: list[float] = [-2.0, 2.0]
    gravity: list[float] = [-0.1, 0.1]
    stiffness: list[float] = [0.8, 1.2]
    damping: list[float] = [0.8, 1.2]
    motor_offset: list[float] = [-0.1, 0.1]
    restitution: list[float] = [0.0, 0.0]

    @field_validator("friction", "payload", "gravity", "stiffness", "damping", "motor_offset", "restitution")
    @classmethod
    def _interval(cls, v):
        if len(v) != 2 or v[0] > v[1]:
            raise ValueError("ranges are [low, high] with low <= high")
        return v

    @field_validator("friction", "stiffness", "damping")
    @classmethod
    def _positive(cls, v):
        if v[0] <= 0:
            raise ValueError("friction, stiffness and damping draws must stay positive")
        return v


class NoiseSection(_Section):
    enabled: bool = True
    ang_vel: float = 0.2
    gravity: float = 0.1
    joint_pos: float = 0.01
    joint_vel: float = 1.5


class TerrainSection(_Section):
    kinds: list[Literal["flat", "random-rough", "boxes", "pyramid-slope", "thresholds", "stairs"]] = [
        "flat", "random-rough", "boxes", "pyramid-slope", "thresholds", "stairs"
    ]
    max_level: int = 9
    initial_level: int = 0
    resolution: float = 0.05
    size: float = 8.0
    curriculum: bool = True
    promote: float = 0.8
    demote: float = 0.4

    @model_validator(mode="after")
    def _check(self):
        if not self.kinds:
            raise ValueError("terrain.kinds needs at least one kind")
        if not 0 <= self.demote <= self.promote:
            raise ValueError("terrain thresholds need 0 <= demote <= promote")
        if not 0 <= self.initial_level <= self.max_level:
            raise ValueError("terrain.initial_level must lie in [0, max_level]")
        return self


class CommandSection(_Section):
    source: Literal["random", "synthetic", "trajectory-file"] = "synthetic"
    vx: list[float] = [-1.0, 1.0]
    vy: list[float] = [-0.5, 0.5]
    yaw: list[float] = [-1.0, 1.0]
    bound_lin: float = 1.5
    bound_yaw: float = 1.5
    resample_seconds: float = 5.0
    time_constant: float = 2.0
    synthetic_mean: list[float] = [0.3, 0.0, 0.0]
    synthetic_std: list[float] = [0.3, 0.2, 0.4]
    trajectory_file: str = ""


class RewardSection(_Section):
    scale: float = 0.02
    sigma_vel: float = 0.25
    sigma_ang: float = 0.25
    tracking_lin_vel: float = 1.0
    tracking_ang_vel: float = 1.0
    termination: float = -200.0
    lin_vel_z: float = -1.0
    energy: float = -0.001
    ang_vel_xy: float = -0.05
    joint_acc: float = -2.5e-7
    action_rate: float = -0.01
    orientation: float = -2.0
    joint_pos_limit: float = -2.0
    soft_limit_factor: float = 0.9
    joint_deviation: list[float] = [-0.1, -0.05, -0.05, -0.1, -0.05, -0.05]
    feet_air_time: float = 0.2
    air_time_threshold: float = 0.4
    air_time_min_command: float = 0.1
    feet_force: float = -5.0e-3
    force_scale: float = 0.35
    force_threshold: float = 500.0
    force_max: float = 400.0
    feet_stumble: float = -2.0
    feet_sliding: float = -0.25
    flying: float = -1.0
    flying_epsilon: float = 0.001
    undesired_contacts: float = -1.0


class EnvSection(_Section):
    action_scale: float = 0.25
    action_clip: float = 4.0
    tilt_limit: float = 1.0
    min_height: float = 0.3


class NetworkSection(_Section):
    hidden: int = 256
    decoder_hidden: int = 256
    head_dims: list[int] = [256, 128]
    init_log_std: float = 0.0
    log_std_min: float = -4.0
    log_std_max: float = 1.0


class PPOSection(_Section):
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    entropy_coef: float = 0.01
    epochs: int = 5
    minibatches: int = 4
    lr: float = 2.5e-5
    max_grad_norm: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1.0e-8


class LossSection(_Section):
    cont: float = 1.0
    dis: float = 0.3
    reg: float = 0.005
    value: float = 1.0
    policy: float = 1.0

    @model_validator(mode="after")
    def _non_negative(self):
        if min(self.cont, self.dis, self.reg, self.value, self.policy) < 0:
            raise ValueError("loss weights must be >= 0")
        return self


# File read by TomlConfigSettingsSource while a RunConfig is being built.
_TOML_FILE: ContextVar[Path | None] = ContextVar("wmr_toml_file", default=None)


class RunConfig(BaseSettings):
    model_config = SettingsConfigDict(extra="forbid", validate_assignment=True)

    run: RunSection = Field(default_factory=RunSection)
    robot: RobotSection = Field(default_factory=RobotSection)
    sim: SimSection = Field(default_factory=SimSection)
    contact: ContactSection = Field(default_factory=ContactSection)
    randomization: RandomizationSection = Field(default_factory=RandomizationSection)
    noise: NoiseSection = Field(default_factory=NoiseSection)
    terrain: TerrainSection = Field(default_factory=TerrainSection)
    commands: CommandSection = Field(default_factory=CommandSection)
    reward: RewardSection = Field(default_factory=RewardSection)
    env: EnvSection = Field(default_factory=EnvSection)
    network: NetworkSection = Field(default_factory=NetworkSection)
    ppo: PPOSection = Field(default_factory=PPOSection)
    loss: LossSection = Field(default_factory=LossSection)

    @classmethod
    def settings_customise_sources(
        cls, settings_cls, init_settings, env_settings, dotenv_settings, file_secret_settings
    ):
        return (init_settings, TomlConfigSettingsSource(settings_cls, toml_file=_TOML_FILE.get()))

    @model_validator(mode="after")
    def _payload_keeps_torso(self):
        if self.randomization.enabled and self.robot.torso_mass + self.randomization.payload[0] <= 0:
            raise ValueError("randomization.payload would make the torso mass non-positive")
        return self

    @property
    def out_path(self) -> Path:
        return Path(self.run.out_dir)

    @property
    def checkpoints_dir(self) -> Path:
        return self.out_path / "checkpoints"

    def ensure_dirs(self):
        for d in [self.out_path, self.checkpoints_dir]:
            d.mkdir(parents=True, exist_ok=True)

    @property
    def worker_count(self) -> int:
        return self.run.workers or (os.cpu_count() or 1)


def parse_override(item: str) -> dict[str, Any]:
    """'ppo.lr=1e-3' -> {'ppo': {'lr': 0.001}}; bare words become strings."""
    if "=" not in item:
        raise ConfigError(f"override '{item}' must look like section.key=value")
    key, raw = (s.strip() for s in item.split("=", 1))
    if key.count(".") != 1:
        raise ConfigError(f"override key '{key}' must be section.key")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    section, name = key.split(".")
    return {section: {name: value}}


def parse_overrides(items: list[str]) -> dict[str, dict[str, Any]]:
    """Fold `--set` items into one nested dict; later items win."""
    out: dict[str, dict[str, Any]] = {}
    for item in items:
        for section, values in parse_override(item).items():
            out.setdefault(section, {}).update(values)
    return out


def _describe(exc: ValidationError) -> str:
    first = exc.errors()[0]
    where = ".".join(str(p) for p in first["loc"])
    if first["type"] == "extra_forbidden":
        return f"unknown config key '{where}'"
    if not where:
        return f"invalid config: {first['msg']}"
    return f"invalid config value at '{where}': {first['msg']}"


def build_config(toml_file: Path | None = None, overrides: list[str] | dict | None = None) -> RunConfig:
    """Defaults <- `toml_file` <- overrides, merged by the settings sources."""
    init = overrides if isinstance(overrides, dict) else parse_overrides(overrides or [])
    token = _TOML_FILE.set(toml_file)
    try:
        return RunConfig(**init)
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file is not valid: {exc}") from exc
    finally:
        _TOML_FILE.reset(token)


def load_config(path: str | Path | None = None, overrides: list[str] | dict | None = None) -> RunConfig:
    """Defaults <- file at `path` (or 'default') <- overrides."""
    if not path or str(path) == "default":
        return build_config(None, overrides)
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return build_config(p, overrides)


def config_with_overrides(text: str, overrides: list[str] | dict | None = None) -> RunConfig:
    """Same as `load_config` for config text held in memory, e.g. inside a checkpoint."""
    with tempfile.TemporaryDirectory(prefix="wmr-config-") as tmp:
        path = Path(tmp) / "config.toml"
        path.write_text(text)
        return build_config(path, overrides)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize config value {value!r}")


def dump_config(cfg: RunConfig) -> str:
    """Canonical flat serialization; dump(load(dump(c))) == dump(c)."""
    lines = []
    for section in RunConfig.model_fields:
        values = getattr(cfg, section)
        for key in type(values).model_fields:
            lines.append(f"{section}.{key} = {_format_value(getattr(values, key))}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> RunConfig:
    return config_with_overrides(text)
