"""Velocity commands: piecewise-random, a smooth synthetic process, or trajectory-file playback.

Each env owns one schedule object and its own generator; a schedule is
queried with the episode time and returns the command active at that time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from wmr.config import CommandSection
from wmr.errors import ConfigError, TrajectoryFormatError

COMMAND_SOURCES = ("random", "synthetic", "trajectory-file")
TRAJECTORY_HEADER = ["t", "vx", "vy", "wz"]


@dataclass(frozen=True)
class Command:
    vx: float
    vy: float
    yaw_rate: float
    source: str

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.yaw_rate])


def _bounded(cfg: CommandSection, v: np.ndarray) -> np.ndarray:
    return np.array(
        [
            np.clip(v[0], -cfg.bound_lin, cfg.bound_lin),
            np.clip(v[1], -cfg.bound_lin, cfg.bound_lin),
            np.clip(v[2], -cfg.bound_yaw, cfg.bound_yaw),
        ]
    )


class RandomSchedule:
    """Uniform draws held constant and redrawn every `resample_seconds`."""

    source = "random"

    def __init__(self, cfg: CommandSection, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.window = -1
        self.value = np.zeros(3)

    def __call__(self, t: float) -> Command:
        window = int(math.floor(t / self.cfg.resample_seconds + 1e-9))
        if window != self.window:
            self.window = window
            draw = [self.rng.uniform(*self.cfg.vx), self.rng.uniform(*self.cfg.vy), self.rng.uniform(*self.cfg.yaw)]
            self.value = _bounded(self.cfg, np.array(draw))
        return Command(*self.value, source=self.source)


class SyntheticSchedule:
    """Mean-reverting (Ornstein-Uhlenbeck) velocity with the configured time constant."""

    source = "synthetic"

    def __init__(self, cfg: CommandSection, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.mean = np.asarray(cfg.synthetic_mean, dtype=float)
        self.std = np.asarray(cfg.synthetic_std, dtype=float)
        self.t = None
        self.value = np.zeros(3)

    def __call__(self, t: float) -> Command:
        if self.t is None or t < self.t:
            self.value = _bounded(self.cfg, self.mean + self.std * self.rng.standard_normal(3))
        elif t > self.t:
            dt = t - self.t
            decay = dt / self.cfg.time_constant
            kick = self.std * math.sqrt(2.0 * decay) * self.rng.standard_normal(3)
            self.value = _bounded(self.cfg, self.value + (self.mean - self.value) * decay + kick)
        self.t = t
        return Command(*self.value, source=self.source)


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    velocity: np.ndarray  # [rows, 3]

    @property
    def period(self) -> float:
        return float(self.t[-1] - self.t[0])


def load_trajectory(path: str | Path) -> Trajectory:
    """Parse a `t,vx,vy,wz` file; row numbers in errors count the header as row 1."""
    p = Path(path)
    if not p.exists():
        raise TrajectoryFormatError(f"trajectory file not found: {p}")
    times, values = [], []
    with open(p, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRAJECTORY_HEADER:
            raise TrajectoryFormatError(f"header must be {','.join(TRAJECTORY_HEADER)}", row=1)
        for row_number, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 4:
                raise TrajectoryFormatError(f"expected 4 columns, got {len(row)}", row=row_number)
            try:
                numbers = [float(cell) for cell in row]
            except ValueError:
                raise TrajectoryFormatError(f"non-numeric value in {row}", row=row_number) from None
            if not all(math.isfinite(v) for v in numbers):
                raise TrajectoryFormatError("non-finite value", row=row_number)
            if times and numbers[0] <= times[-1]:
                raise TrajectoryFormatError("time must increase strictly", row=row_number)
            times.append(numbers[0])
            values.append(numbers[1:])
    if not times:
        raise TrajectoryFormatError("file has no data rows", row=2)
    return Trajectory(np.array(times), np.array(values))


class TrajectorySchedule:
    """Looping playback with linear interpolation, started at a random phase."""

    source = "trajectory-file"

    def __init__(self, cfg: CommandSection, rng: np.random.Generator, trajectory: Trajectory):
        self.cfg = cfg
        self.trajectory = trajectory
        self.phase = rng.uniform(0.0, trajectory.period) if trajectory.period > 0 else 0.0

    def __call__(self, t: float) -> Command:
        traj = self.trajectory
        if traj.period <= 0:
            value = traj.velocity[0]
        else:
            local = traj.t[0] + np.mod(t + self.phase, traj.period)
            value = np.array([np.interp(local, traj.t, traj.velocity[:, k]) for k in range(3)])
        return Command(*_bounded(self.cfg, value), source=self.source)


class ConstantSchedule:
    """Fixed command, used by evaluation scenarios."""

    source = "constant"

    def __init__(self, vx: float = 0.0, vy: float = 0.0, yaw_rate: float = 0.0):
        self.value = (vx, vy, yaw_rate)

    def __call__(self, t: float) -> Command:
        return Command(*self.value, source=self.source)


def make_schedule(cfg: CommandSection, rng: np.random.Generator, trajectory: Trajectory | None = None):
    if cfg.source == "random":
        return RandomSchedule(cfg, rng)
    if cfg.source == "synthetic":
        return SyntheticSchedule(cfg, rng)
    if cfg.source == "trajectory-file":
        if trajectory is None:
            if not cfg.trajectory_file:
                raise ConfigError("commands.source = trajectory-file needs commands.trajectory_file")
            trajectory = load_trajectory(cfg.trajectory_file)
        return TrajectorySchedule(cfg, rng, trajectory)
    raise ConfigError(f"unknown command source '{cfg.source}'")


def sample_command(schedule, t: float) -> Command:
    """Command active at episode time t for one env's schedule."""
    return schedule(t)
