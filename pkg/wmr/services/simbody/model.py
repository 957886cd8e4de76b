"""Robot description: a box torso with two 3-joint legs ending in flat point-pair feet."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from wmr.config import ContactSection, RobotSection

JOINT_NAMES = [
    "left_hip_roll",
    "left_hip_pitch",
    "left_knee",
    "right_hip_roll",
    "right_hip_pitch",
    "right_knee",
]
LEGS = 2
JOINTS_PER_LEG = 3

# Undesired contact points in the torso frame: bottom corners of the box.
# Knees are added per leg at run time.
_TORSO_CORNER_SIGNS = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)


def box_inertia(mass: float, size) -> np.ndarray:
    x, y, z = size
    return np.diag([mass * (y * y + z * z) / 12, mass * (x * x + z * z) / 12, mass * (x * x + y * y) / 12])


def rod_inertia(mass: float, length: float, radius: float) -> np.ndarray:
    """Solid rod along the local z axis."""
    transverse = mass * (3 * radius * radius + length * length) / 12
    return np.diag([transverse, transverse, mass * radius * radius / 2])


def sphere_inertia(mass: float, radius: float) -> np.ndarray:
    return np.eye(3) * (0.4 * mass * radius * radius)


@dataclass(frozen=True)
class ContactGains:
    k_n: float = 1.0e4
    c_n: float = 100.0
    k_t: float = 1.0e3
    threshold: float = 1.0

    @classmethod
    def from_config(cls, section: ContactSection) -> "ContactGains":
        return cls(section.k_n, section.c_n, section.k_t, section.threshold)


@dataclass
class RobotModel:
    """Masses in kg, lengths in m, inertias in kg·m² about each body's COM in its own frame."""

    torso_mass: float
    torso_inertia: np.ndarray
    torso_size: np.ndarray
    hip_mass: float
    hip_inertia: np.ndarray
    thigh_mass: float
    thigh_length: float
    thigh_inertia: np.ndarray
    shank_mass: float
    shank_length: float
    shank_inertia: np.ndarray
    hip_offsets: np.ndarray  # [2, 3], torso frame
    foot_offsets: np.ndarray  # [2, 3], shank frame, toe then heel, relative to the shank tip
    q_default: np.ndarray
    q_lower: np.ndarray
    q_upper: np.ndarray
    kp: np.ndarray
    kd: np.ndarray
    torque_limit: np.ndarray
    joint_names: list[str] = field(default_factory=lambda: list(JOINT_NAMES))

    @property
    def n_joints(self) -> int:
        return len(self.q_default)

    @property
    def total_mass(self) -> float:
        return self.torso_mass + LEGS * (self.hip_mass + self.thigh_mass + self.shank_mass)

    @property
    def torso_corners(self) -> np.ndarray:
        half = self.torso_size / 2
        corners = np.zeros((4, 3))
        corners[:, 0] = _TORSO_CORNER_SIGNS[:, 0] * half[0]
        corners[:, 1] = _TORSO_CORNER_SIGNS[:, 1] * half[1]
        corners[:, 2] = -half[2]
        return corners

    def validate(self) -> "RobotModel":
        masses = [self.torso_mass, self.hip_mass, self.thigh_mass, self.shank_mass]
        if min(masses) <= 0:
            raise ValueError("link masses must be positive")
        for inertia in (self.torso_inertia, self.hip_inertia, self.thigh_inertia, self.shank_inertia):
            if np.min(np.linalg.eigvalsh(inertia)) <= 0:
                raise ValueError("link inertias must be positive-definite")
        if np.any(self.q_lower >= self.q_upper):
            raise ValueError("joint limits need lower < upper")
        return self

    @classmethod
    def from_config(cls, robot: RobotSection) -> "RobotModel":
        q_default = np.array(robot.q_default, dtype=float)
        hip = np.array(robot.hip_offset, dtype=float)
        hip_offsets = np.stack([hip, hip * [1, -1, 1]])

        # The foot axis lies along world x at the default pose, whatever the leg bend.
        shank_pitch = q_default[1] + q_default[2]
        axis = np.array([np.cos(shank_pitch), 0.0, np.sin(shank_pitch)])
        tip = np.array([0.0, 0.0, -robot.shank_length])
        foot_offsets = np.stack([tip + robot.foot_half_length * axis, tip - robot.foot_half_length * axis])

        return cls(
            torso_mass=robot.torso_mass,
            torso_inertia=box_inertia(robot.torso_mass, robot.torso_size),
            torso_size=np.array(robot.torso_size, dtype=float),
            hip_mass=robot.hip_mass,
            hip_inertia=sphere_inertia(robot.hip_mass, robot.hip_radius),
            thigh_mass=robot.thigh_mass,
            thigh_length=robot.thigh_length,
            thigh_inertia=rod_inertia(robot.thigh_mass, robot.thigh_length, robot.link_radius),
            shank_mass=robot.shank_mass,
            shank_length=robot.shank_length,
            shank_inertia=rod_inertia(robot.shank_mass, robot.shank_length, robot.link_radius),
            hip_offsets=hip_offsets,
            foot_offsets=foot_offsets,
            q_default=q_default,
            q_lower=np.array(robot.q_lower, dtype=float),
            q_upper=np.array(robot.q_upper, dtype=float),
            kp=np.array(robot.kp, dtype=float),
            kd=np.array(robot.kd, dtype=float),
            torque_limit=np.array(robot.torque_limit, dtype=float),
        ).validate()
