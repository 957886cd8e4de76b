"""Ground-truth physical parameters and their per-episode randomization."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from wmr.config import RandomizationSection
from wmr.errors import ConfigError


@dataclass
class PhysParams:
    """Batched over environments; scales multiply nominal values, the rest add."""

    friction: np.ndarray  # [N, 2] per foot
    payload: np.ndarray  # [N] kg added to the torso
    gravity_delta: np.ndarray  # [N] m/s² added to 9.81
    stiffness: np.ndarray  # [N, J] kp scale
    damping: np.ndarray  # [N, J] kd scale
    motor_offset: np.ndarray  # [N, J] rad
    restitution: np.ndarray  # [N]

    @property
    def count(self) -> int:
        return self.payload.shape[0]

    @property
    def gravity(self) -> np.ndarray:
        return 9.81 + self.gravity_delta

    @classmethod
    def nominal(cls, count: int, n_joints: int) -> "PhysParams":
        return cls(
            friction=np.ones((count, 2)),
            payload=np.zeros(count),
            gravity_delta=np.zeros(count),
            stiffness=np.ones((count, n_joints)),
            damping=np.ones((count, n_joints)),
            motor_offset=np.zeros((count, n_joints)),
            restitution=np.zeros(count),
        )

    @classmethod
    def concat(cls, items: list["PhysParams"]) -> "PhysParams":
        return cls(**{f.name: np.concatenate([getattr(p, f.name) for p in items]) for f in fields(cls)})

    def set_rows(self, rows: np.ndarray, other: "PhysParams") -> None:
        for f in fields(self):
            getattr(self, f.name)[rows] = getattr(other, f.name)

    def rows(self, idx) -> "PhysParams":
        return PhysParams(**{f.name: getattr(self, f.name)[idx].copy() for f in fields(self)})

    def copy(self) -> "PhysParams":
        return self.rows(slice(None))

    def check(self) -> "PhysParams":
        if np.any(self.friction <= 0):
            raise ValueError("foot friction must be positive")
        if np.any(self.stiffness <= 0) or np.any(self.damping <= 0):
            raise ValueError("stiffness and damping scales must be positive")
        return self


def randomize(
    ranges: RandomizationSection,
    rng: np.random.Generator,
    n_joints: int,
    count: int = 1,
    torso_mass: float | None = None,
) -> PhysParams:
    """Independent uniform draws for `count` environments.

    Draw order is fixed (friction, payload, gravity, stiffness, damping,
    offset, restitution) so a seeded generator always yields the same set.
    """
    if not ranges.enabled:
        return PhysParams.nominal(count, n_joints)

    def draw(bounds, shape):
        lo, hi = bounds
        return rng.uniform(lo, hi, size=shape) if hi > lo else np.full(shape, float(lo))

    params = PhysParams(
        friction=draw(ranges.friction, (count, 2)),
        payload=draw(ranges.payload, (count,)),
        gravity_delta=draw(ranges.gravity, (count,)),
        stiffness=draw(ranges.stiffness, (count, n_joints)),
        damping=draw(ranges.damping, (count, n_joints)),
        motor_offset=draw(ranges.motor_offset, (count, n_joints)),
        restitution=draw(ranges.restitution, (count,)),
    )
    if torso_mass is not None and np.any(torso_mass + params.payload <= 0):
        raise ConfigError("randomization.payload would make the torso mass non-positive")
    return params.check()
