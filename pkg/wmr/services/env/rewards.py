"""The locomotion reward suite, one named term per entry plus the total."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wmr.config import RewardSection
from wmr.services.simbody.model import RobotModel

REWARD_TERMS = [
    "tracking_lin_vel",
    "tracking_ang_vel",
    "termination",
    "lin_vel_z",
    "energy",
    "ang_vel_xy",
    "joint_acc",
    "action_rate",
    "orientation",
    "joint_pos_limit",
    "joint_deviation",
    "feet_air_time",
    "feet_force",
    "feet_stumble",
    "feet_sliding",
    "flying",
    "undesired_contacts",
]


@dataclass
class StepSnapshot:
    """Everything the reward needs from the simulator at the end of a policy step."""

    lin_vel: np.ndarray  # [N, 3] body frame
    ang_vel: np.ndarray  # [N, 3] body frame
    gravity: np.ndarray  # [N, 3] projected
    q: np.ndarray  # [N, J]
    qd: np.ndarray  # [N, J]
    torque: np.ndarray  # [N, J] last applied
    foot_force: np.ndarray  # [N, 2, 3] world
    foot_contact: np.ndarray  # [N, 2] bool
    foot_vel: np.ndarray  # [N, 2, 3] world
    contact_time: np.ndarray  # [N, 2]
    last_air_time: np.ndarray  # [N, 2]
    touchdowns: np.ndarray  # [N, 2]
    undesired_force: np.ndarray  # [N, 6]


@dataclass
class RewardBreakdown:
    terms: dict[str, np.ndarray]  # each [N], unscaled
    total: np.ndarray  # [N]

    def as_rows(self) -> dict[str, np.ndarray]:
        return {**self.terms, "total": self.total}


def compute_reward(
    before: StepSnapshot,
    after: StepSnapshot,
    cmd: np.ndarray,
    action: np.ndarray,
    last_action: np.ndarray,
    terminated: np.ndarray,
    cfg: RewardSection,
    model: RobotModel,
    dt: float,
    contact_threshold: float = 1.0,
) -> RewardBreakdown:
    """`action`/`last_action` are joint-target offsets in rad; q'' is a finite difference over dt."""
    t = {}
    lin_err = np.sum(np.square(after.lin_vel[:, :2] - cmd[:, :2]), axis=1)
    ang_err = np.square(after.ang_vel[:, 2] - cmd[:, 2])
    t["tracking_lin_vel"] = cfg.tracking_lin_vel * np.exp(-lin_err / cfg.sigma_vel)
    t["tracking_ang_vel"] = cfg.tracking_ang_vel * np.exp(-ang_err / cfg.sigma_ang)
    t["termination"] = cfg.termination * terminated.astype(np.float64)
    t["lin_vel_z"] = cfg.lin_vel_z * np.square(after.lin_vel[:, 2])
    t["energy"] = cfg.energy * np.sum(np.abs(after.torque * after.qd), axis=1)
    t["ang_vel_xy"] = cfg.ang_vel_xy * np.sum(np.square(after.ang_vel[:, :2]), axis=1)
    qdd = (after.qd - before.qd) / dt
    t["joint_acc"] = cfg.joint_acc * np.sum(np.square(qdd), axis=1)
    t["action_rate"] = cfg.action_rate * np.sum(np.square(action - last_action), axis=1)
    t["orientation"] = cfg.orientation * np.sum(np.square(after.gravity[:, :2]), axis=1)

    mid = 0.5 * (model.q_lower + model.q_upper)
    half = 0.5 * (model.q_upper - model.q_lower) * cfg.soft_limit_factor
    over = np.clip((mid - half) - after.q, 0.0, None) + np.clip(after.q - (mid + half), 0.0, None)
    t["joint_pos_limit"] = cfg.joint_pos_limit * np.sum(over, axis=1)
    t["joint_deviation"] = np.sum(np.asarray(cfg.joint_deviation) * np.abs(after.q - model.q_default), axis=1)

    first_contact = after.touchdowns > before.touchdowns
    single_stance = np.sum(after.foot_contact, axis=1) == 1
    moving = np.linalg.norm(cmd[:, :2], axis=1) > cfg.air_time_min_command
    air = np.sum((after.last_air_time - cfg.air_time_threshold) * first_contact, axis=1)
    t["feet_air_time"] = cfg.feet_air_time * air * (single_stance & moving)

    f_z = after.foot_force[..., 2]
    f_th = cfg.force_threshold * cfg.force_scale
    f_max = cfg.force_max * cfg.force_scale
    t["feet_force"] = cfg.feet_force * np.sum(np.clip(f_z - f_th, 0.0, f_max), axis=1)
    f_xy = np.linalg.norm(after.foot_force[..., :2], axis=-1)
    t["feet_stumble"] = cfg.feet_stumble * np.any(f_xy > f_z, axis=1)
    slide = np.linalg.norm(after.foot_vel[..., :2], axis=-1)
    t["feet_sliding"] = cfg.feet_sliding * np.sum(slide * after.foot_contact, axis=1)
    t["flying"] = cfg.flying * (np.sum(after.contact_time, axis=1) < cfg.flying_epsilon)
    t["undesired_contacts"] = cfg.undesired_contacts * np.sum(after.undesired_force > contact_threshold, axis=1)

    terms = {name: np.asarray(t[name], dtype=np.float64) for name in REWARD_TERMS}
    total = np.zeros_like(terms["tracking_lin_vel"])
    for name in REWARD_TERMS:
        total = total + terms[name]
    return RewardBreakdown(terms, total)
