"""Forward kinematics and Jacobians of the biped, batched over environments.

Generalized velocity layout (12 entries): base linear velocity (world),
base angular velocity (world), joint rates. Joint order per leg is
hip-roll (torso x axis), hip-pitch (hip y axis), knee (thigh y axis).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wmr.services.simbody.model import JOINTS_PER_LEG, LEGS, RobotModel

DOF = 6 + LEGS * JOINTS_PER_LEG


def skew(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def quat_to_rot(quat: np.ndarray) -> np.ndarray:
    """(w, x, y, z) -> rotation matrix, batched."""
    w, x, y, z = (quat[..., i] for i in range(4))
    out = np.empty(quat.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1 - 2 * (y * y + z * z)
    out[..., 0, 1] = 2 * (x * y - w * z)
    out[..., 0, 2] = 2 * (x * z + w * y)
    out[..., 1, 0] = 2 * (x * y + w * z)
    out[..., 1, 1] = 1 - 2 * (x * x + z * z)
    out[..., 1, 2] = 2 * (y * z - w * x)
    out[..., 2, 0] = 2 * (x * z - w * y)
    out[..., 2, 1] = 2 * (y * z + w * x)
    out[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = (a[..., i] for i in range(4))
    bw, bx, by, bz = (b[..., i] for i in range(4))
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def rotvec_to_quat(phi: np.ndarray) -> np.ndarray:
    angle = np.linalg.norm(phi, axis=-1)
    # sin(angle/2)/angle without the 0/0 at rest
    factor = 0.5 * np.sinc(angle / (2 * np.pi))
    return np.concatenate([np.cos(angle / 2)[..., None], phi * factor[..., None]], axis=-1)


def yaw_quat(yaw: np.ndarray) -> np.ndarray:
    return np.stack([np.cos(yaw / 2), np.zeros_like(yaw), np.zeros_like(yaw), np.sin(yaw / 2)], axis=-1)


def rot_x(angle: np.ndarray) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    out = np.zeros(angle.shape + (3, 3))
    out[..., 0, 0] = 1
    out[..., 1, 1], out[..., 1, 2] = c, -s
    out[..., 2, 1], out[..., 2, 2] = s, c
    return out


def rot_y(angle: np.ndarray) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    out = np.zeros(angle.shape + (3, 3))
    out[..., 1, 1] = 1
    out[..., 0, 0], out[..., 0, 2] = c, s
    out[..., 2, 0], out[..., 2, 2] = -s, c
    return out


def _apply(rot: np.ndarray, v) -> np.ndarray:
    return (rot @ np.asarray(v)[..., None])[..., 0]


@dataclass
class Frames:
    """World-frame placement of every body and contact point for a batch of robots."""

    pos: np.ndarray  # [N, 3] torso origin (= torso COM)
    rot: np.ndarray  # [N, 3, 3] torso
    rot_hip: np.ndarray  # [N, 2, 3, 3]
    rot_thigh: np.ndarray
    rot_shank: np.ndarray
    axes: np.ndarray  # [N, 6, 3]
    pivots: np.ndarray  # [N, 6, 3]
    com_hip: np.ndarray  # [N, 2, 3]
    com_thigh: np.ndarray
    com_shank: np.ndarray
    knees: np.ndarray  # [N, 2, 3]
    feet: np.ndarray  # [N, 2, 2, 3] leg, toe/heel
    corners: np.ndarray  # [N, 4, 3]


def forward_kinematics(model: RobotModel, pos: np.ndarray, quat: np.ndarray, q: np.ndarray) -> Frames:
    n = pos.shape[0]
    rot = quat_to_rot(quat)
    q = q.reshape(n, LEGS, JOINTS_PER_LEG)

    rot_hip = rot[:, None] @ rot_x(q[:, :, 0])
    rot_thigh = rot_hip @ rot_y(q[:, :, 1])
    rot_shank = rot_thigh @ rot_y(q[:, :, 2])

    hips = pos[:, None] + _apply(rot[:, None], model.hip_offsets)
    thigh_dir = rot_thigh[..., :, 2]  # local +z in world
    shank_dir = rot_shank[..., :, 2]
    knees = hips - model.thigh_length * thigh_dir
    feet = knees[:, :, None] + np.einsum("nlij,pj->nlpi", rot_shank, model.foot_offsets)

    axes = np.stack([rot[:, None, :, 0].repeat(LEGS, 1), rot_hip[..., :, 1], rot_thigh[..., :, 1]], axis=2)
    pivots = np.stack([hips, hips, knees], axis=2)

    return Frames(
        pos=pos,
        rot=rot,
        rot_hip=rot_hip,
        rot_thigh=rot_thigh,
        rot_shank=rot_shank,
        axes=axes.reshape(n, LEGS * JOINTS_PER_LEG, 3),
        pivots=pivots.reshape(n, LEGS * JOINTS_PER_LEG, 3),
        com_hip=hips,
        com_thigh=hips - 0.5 * model.thigh_length * thigh_dir,
        com_shank=knees - 0.5 * model.shank_length * shank_dir,
        knees=knees,
        feet=feet,
        corners=pos[:, None] + _apply(rot[:, None], model.torso_corners),
    )


def point_jacobian(frames: Frames, points: np.ndarray, leg: int | None = None, level: int = 0) -> np.ndarray:
    """Linear-velocity Jacobian [N, P, 3, DOF] of points [N, P, 3] rigidly attached to a body.

    `level` is how many joints of `leg` sit between the torso and that body
    (hip link 1, thigh 2, shank 3); torso points pass leg=None.
    """
    n, p = points.shape[:2]
    jac = np.zeros((n, p, 3, DOF))
    jac[..., 0:3] = np.eye(3)
    jac[..., 3:6] = -skew(points - frames.pos[:, None])
    if leg is not None:
        for k in range(level):
            j = leg * JOINTS_PER_LEG + k
            jac[..., 6 + j] = np.cross(frames.axes[:, None, j], points - frames.pivots[:, None, j])
    return jac


def angular_jacobian(frames: Frames, leg: int | None = None, level: int = 0) -> np.ndarray:
    n = frames.pos.shape[0]
    jac = np.zeros((n, 3, DOF))
    jac[:, :, 3:6] = np.eye(3)
    if leg is not None:
        for k in range(level):
            j = leg * JOINTS_PER_LEG + k
            jac[:, :, 6 + j] = frames.axes[:, j]
    return jac


def generalized_velocity(rot: np.ndarray, lin_vel_body, ang_vel_body, qd) -> np.ndarray:
    return np.concatenate([_apply(rot, lin_vel_body), _apply(rot, ang_vel_body), qd], axis=-1)


def foot_velocities(frames: Frames, u: np.ndarray) -> np.ndarray:
    """World velocity of each foot centre (midpoint of toe and heel), [N, 2, 3]."""
    out = []
    for leg in range(LEGS):
        centre = frames.feet[:, leg].mean(axis=1, keepdims=True)
        jac = point_jacobian(frames, centre, leg, JOINTS_PER_LEG)
        out.append(np.einsum("npij,nj->npi", jac, u)[:, 0])
    return np.stack(out, axis=1)
