"""Fixed field layout of the observation and world-state vectors.

The world state is the observation block (noise-free) followed by the
privileged block. The continuous reconstruction target is the world state
without the contact mask; the policy sees the continuous part with the
predicted contact probabilities put back into the mask slots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Field:
    name: str
    size: int
    scale: tuple[float, ...]  # one value, or one per entry

    def scale_vector(self) -> np.ndarray:
        s = np.asarray(self.scale, dtype=np.float64)
        return np.full(self.size, s[0]) if s.size == 1 else s


def proprio_fields(n_joints: int) -> list[Field]:
    return [
        Field("ang_vel", 3, (0.25,)),
        Field("projected_gravity", 3, (1.0,)),
        Field("command", 3, (2.0, 2.0, 0.25)),
        Field("joint_pos", n_joints, (1.0,)),
        Field("joint_vel", n_joints, (0.05,)),
        Field("last_action", n_joints, (1.0,)),
    ]


def privileged_fields(n_joints: int) -> list[Field]:
    return [
        Field("base_lin_vel", 3, (2.0,)),
        Field("contact_mask", 2, (1.0,)),
        Field("foot_friction", 2, (1.0,)),
        Field("payload", 1, (0.5,)),
        Field("gravity", 1, (10.0,)),
        Field("stiffness", n_joints, (1.0,)),
        Field("damping", n_joints, (1.0,)),
        Field("motor_offset", n_joints, (10.0,)),
    ]


@dataclass(frozen=True)
class Layout:
    n_joints: int

    @property
    def obs_fields(self) -> list[Field]:
        return proprio_fields(self.n_joints)

    @property
    def world_fields(self) -> list[Field]:
        return proprio_fields(self.n_joints) + privileged_fields(self.n_joints)

    @property
    def obs_dim(self) -> int:
        return 9 + 3 * self.n_joints

    @property
    def world_dim(self) -> int:
        return self.obs_dim + 9 + 3 * self.n_joints

    @property
    def continuous_dim(self) -> int:
        return self.world_dim - 2

    def slices(self) -> dict[str, slice]:
        out, start = {}, 0
        for f in self.world_fields:
            out[f.name] = slice(start, start + f.size)
            start += f.size
        return out

    @property
    def contact_slice(self) -> slice:
        return self.slices()["contact_mask"]

    def obs_scales(self) -> np.ndarray:
        return np.concatenate([f.scale_vector() for f in self.obs_fields])

    def world_scales(self) -> np.ndarray:
        return np.concatenate([f.scale_vector() for f in self.world_fields])

    def split_world(self, world: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """World state -> (continuous block, contact mask)."""
        c = self.contact_slice
        return np.concatenate([world[..., : c.start], world[..., c.stop :]], axis=-1), world[..., c]

    def join_world(self, continuous: np.ndarray, contact: np.ndarray) -> np.ndarray:
        c = self.contact_slice
        return np.concatenate([continuous[..., : c.start], contact, continuous[..., c.start :]], axis=-1)

    def scale_obs(self, obs: np.ndarray) -> np.ndarray:
        return obs * self.obs_scales()

    def scale_world(self, world: np.ndarray) -> np.ndarray:
        return world * self.world_scales()

    def unscale_world(self, world_scaled: np.ndarray) -> np.ndarray:
        return world_scaled / self.world_scales()
