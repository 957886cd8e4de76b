"""Observation (noisy proprioception) and world-state (reconstruction target) assembly."""

from __future__ import annotations

import numpy as np

from wmr.config import NoiseSection
from wmr.services.simbody.dynamics import SimState
from wmr.services.simbody.kinematics import quat_to_rot
from wmr.services.simbody.model import RobotModel
from wmr.services.simbody.randomization import PhysParams


def projected_gravity(state: SimState) -> np.ndarray:
    """World down-vector expressed in the base frame."""
    rot = quat_to_rot(state.base_quat)
    return -rot[:, 2, :]


def _proprio(state: SimState, cmd: np.ndarray, last_action: np.ndarray, model: RobotModel) -> np.ndarray:
    return np.concatenate(
        [
            state.base_ang_vel,
            projected_gravity(state),
            cmd,
            state.q,
            state.qd,
            model.q_default + last_action,
        ],
        axis=-1,
    )


def noise_bounds(noise: NoiseSection, n_joints: int) -> np.ndarray:
    """Per-channel half-width of the additive uniform noise, zero on command and last action."""
    return np.concatenate(
        [
            np.full(3, noise.ang_vel),
            np.full(3, noise.gravity),
            np.zeros(3),
            np.full(n_joints, noise.joint_pos),
            np.full(n_joints, noise.joint_vel),
            np.zeros(n_joints),
        ]
    )


def build_observation(
    state: SimState,
    params: PhysParams,
    cmd: np.ndarray,
    last_action: np.ndarray,
    rngs: list[np.random.Generator],
    noise: NoiseSection,
    model: RobotModel,
) -> np.ndarray:
    """[N, 9 + 3J] observation; each env draws its noise from its own generator."""
    clean = _proprio(state, cmd, last_action, model)
    if not noise.enabled:
        return clean
    bounds = noise_bounds(noise, model.n_joints)
    draws = np.stack([rng.uniform(-1.0, 1.0, size=bounds.shape) for rng in rngs])
    return clean + draws * bounds


def build_world_state(
    state: SimState,
    params: PhysParams,
    cmd: np.ndarray,
    last_action: np.ndarray,
    model: RobotModel,
) -> np.ndarray:
    """[N, 18 + 6J] noise-free proprio block followed by the privileged block."""
    return np.concatenate(
        [
            _proprio(state, cmd, last_action, model),
            state.base_lin_vel,
            state.foot_contact.astype(np.float64),
            params.friction,
            params.payload[:, None],
            params.gravity_delta[:, None],
            params.stiffness,
            params.damping,
            params.motor_offset,
        ],
        axis=-1,
    )
