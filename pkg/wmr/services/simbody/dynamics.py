"""Rigid-body dynamics of the floating-base biped with penalty contact and PD actuation.

Equations of motion are assembled per step from body Jacobians:
    M(x) u' = tau + sum_c J_c^T F_c - h(x, u)
with M the composite mass matrix and h the Coriolis, centrifugal and
gravity terms. All arrays are float64 and batched over environments.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from wmr.errors import NumericalError, SimulationError
from wmr.services.simbody.contact import contact_resolve
from wmr.services.simbody.kinematics import (
    DOF,
    Frames,
    angular_jacobian,
    forward_kinematics,
    generalized_velocity,
    point_jacobian,
    quat_mul,
    quat_to_rot,
    rotvec_to_quat,
    yaw_quat,
)
from wmr.services.simbody.model import JOINTS_PER_LEG, LEGS, ContactGains, RobotModel
from wmr.services.simbody.randomization import PhysParams

N_UNDESIRED = LEGS + 4  # knees, then torso corners


@dataclass
class SimState:
    base_pos: np.ndarray  # [N, 3] world
    base_quat: np.ndarray  # [N, 4] (w, x, y, z)
    base_lin_vel: np.ndarray  # [N, 3] body frame
    base_ang_vel: np.ndarray  # [N, 3] body frame
    q: np.ndarray  # [N, J]
    qd: np.ndarray  # [N, J]
    foot_force: np.ndarray  # [N, 2, 3] world
    foot_normal_force: np.ndarray  # [N, 2]
    foot_contact: np.ndarray  # [N, 2] bool
    contact_time: np.ndarray  # [N, 2] s
    air_time: np.ndarray  # [N, 2] s
    last_air_time: np.ndarray  # [N, 2] s, air time that ended at the latest touchdown
    touchdowns: np.ndarray  # [N, 2] int
    undesired_force: np.ndarray  # [N, 6] normal force on knees and torso corners
    time: np.ndarray  # [N] s

    @property
    def count(self) -> int:
        return self.base_pos.shape[0]

    def copy(self) -> "SimState":
        return SimState(**{f.name: getattr(self, f.name).copy() for f in fields(self)})

    def set_rows(self, rows: np.ndarray, other: "SimState") -> None:
        for f in fields(self):
            getattr(self, f.name)[rows] = getattr(other, f.name)

    def rows(self, idx) -> "SimState":
        return SimState(**{f.name: getattr(self, f.name)[idx].copy() for f in fields(self)})


def pd_torque(action: np.ndarray, state: SimState, params: PhysParams, model: RobotModel) -> np.ndarray:
    """tau = kp*s*((q_default + a + offset) - q) - kd*d*qd, clipped to the torque limits."""
    action = np.asarray(action, dtype=float)
    if np.isnan(action).any():
        rows = np.unique(np.nonzero(np.isnan(action))[0])
        raise NumericalError(f"NaN action for env {rows.tolist()}")
    target = model.q_default + action + params.motor_offset
    tau = model.kp * params.stiffness * (target - state.q) - model.kd * params.damping * state.qd
    return np.clip(tau, -model.torque_limit, model.torque_limit)


def _bodies(model: RobotModel, frames: Frames, params: PhysParams):
    """(mass [N], inertia_world [N,3,3], com [N,3], leg, level) for every link."""
    n = frames.pos.shape[0]
    torso_mass = model.torso_mass + params.payload
    inertia = model.torso_inertia[None] * (torso_mass / model.torso_mass)[:, None, None]
    yield torso_mass, frames.rot @ inertia @ np.swapaxes(frames.rot, -1, -2), frames.pos, None, 0
    links = [
        (model.hip_mass, model.hip_inertia, frames.rot_hip, frames.com_hip, 1),
        (model.thigh_mass, model.thigh_inertia, frames.rot_thigh, frames.com_thigh, 2),
        (model.shank_mass, model.shank_inertia, frames.rot_shank, frames.com_shank, 3),
    ]
    for leg in range(LEGS):
        for mass, body_inertia, rot, com, level in links:
            r = rot[:, leg]
            yield np.full(n, mass), r @ body_inertia @ np.swapaxes(r, -1, -2), com[:, leg], leg, level


def _velocity_product_terms(frames: Frames, u: np.ndarray):
    """Angular velocity and the u'-free parts of angular/linear acceleration per link.

    Yields (omega, alpha_vp, com_acc_vp) in the same order as _bodies.
    """
    n = u.shape[0]
    w0 = u[:, 3:6]
    qd = u[:, 6:]
    zeros = np.zeros((n, 3))
    yield w0, zeros, zeros
    for leg in range(LEGS):
        j = leg * JOINTS_PER_LEG
        a0, a1, a2 = (frames.axes[:, j + k] for k in range(3))
        hip = frames.pivots[:, j]
        knee = frames.pivots[:, j + 2]
        w_hip = w0 + a0 * qd[:, j, None]
        w_thigh = w_hip + a1 * qd[:, j + 1, None]
        w_shank = w_thigh + a2 * qd[:, j + 2, None]
        al_hip = np.cross(w0, a0) * qd[:, j, None]
        al_thigh = al_hip + np.cross(w_hip, a1) * qd[:, j + 1, None]
        al_shank = al_thigh + np.cross(w_thigh, a2) * qd[:, j + 2, None]

        def carry(acc, alpha, w, d):
            return acc + np.cross(alpha, d) + np.cross(w, np.cross(w, d))

        acc_hip = carry(zeros, zeros, w0, hip - frames.pos)
        acc_knee = carry(acc_hip, al_thigh, w_thigh, knee - hip)
        yield w_hip, al_hip, acc_hip
        yield w_thigh, al_thigh, carry(acc_hip, al_thigh, w_thigh, frames.com_thigh[:, leg] - hip)
        yield w_shank, al_shank, carry(acc_knee, al_shank, w_shank, frames.com_shank[:, leg] - knee)


def mass_matrix_and_bias(model: RobotModel, frames: Frames, u: np.ndarray, params: PhysParams):
    n = u.shape[0]
    mass_matrix = np.zeros((n, DOF, DOF))
    bias = np.zeros((n, DOF))
    gravity = np.zeros((n, 3))
    gravity[:, 2] = -params.gravity
    for (mass, inertia, com, leg, level), (w, alpha, acc) in zip(
        _bodies(model, frames, params), _velocity_product_terms(frames, u)
    ):
        jv = point_jacobian(frames, com[:, None], leg, level)[:, 0]
        jw = angular_jacobian(frames, leg, level)
        mass_matrix += mass[:, None, None] * np.einsum("nij,nik->njk", jv, jv)
        mass_matrix += np.einsum("nij,nik,nkl->njl", jw, inertia, jw)
        lin = mass[:, None] * (acc - gravity)
        iw = np.einsum("nij,nj->ni", inertia, w)
        ang = np.einsum("nij,nj->ni", inertia, alpha) + np.cross(w, iw)
        bias += np.einsum("nij,ni->nj", jv, lin) + np.einsum("nij,ni->nj", jw, ang)
    return mass_matrix, bias


@dataclass
class _Contacts:
    foot_force: np.ndarray  # [N, 2, 3]
    foot_normal: np.ndarray  # [N, 2]
    undesired: np.ndarray  # [N, 6]


def _accelerations(model, gains, pos, quat, q, u, torques, params, ground):
    n = pos.shape[0]
    frames = forward_kinematics(model, pos, quat, q)
    mass_matrix, bias = mass_matrix_and_bias(model, frames, u, params)

    rhs = -bias
    rhs[:, 6:] += torques

    foot_force = np.zeros((n, LEGS, 3))
    foot_normal = np.zeros((n, LEGS))
    undesired = np.zeros((n, N_UNDESIRED))
    groups = [(frames.feet[:, leg], leg, JOINTS_PER_LEG, ("foot", leg)) for leg in range(LEGS)]
    groups += [(frames.knees[:, leg, None], leg, 2, ("und", leg)) for leg in range(LEGS)]
    groups.append((frames.corners, None, 0, ("und", slice(LEGS, N_UNDESIRED))))

    for points, leg, level, (kind, slot) in groups:
        jac = point_jacobian(frames, points, leg, level)
        vel = np.einsum("npij,nj->npi", jac, u)
        height, normal, friction = ground.sample(points[..., :2])
        if kind == "foot":
            mu = params.friction[:, leg, None] * friction
        else:
            mu = friction
        res = contact_resolve(points, vel, height, normal, mu, gains, params.restitution[:, None])
        rhs += np.einsum("npij,npi->nj", jac, res.force)
        if kind == "foot":
            foot_force[:, slot] = res.force.sum(axis=1)
            foot_normal[:, slot] = res.normal_force.sum(axis=1)
        elif leg is not None:
            undesired[:, slot] = res.normal_force[:, 0]
        else:
            undesired[:, slot] = res.normal_force

    try:
        udot = np.linalg.solve(mass_matrix, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SimulationError(f"mass matrix solve failed: {exc}") from exc
    if not np.all(np.isfinite(udot)):
        bad = np.unique(np.nonzero(~np.isfinite(udot))[0])
        raise SimulationError(f"non-finite accelerations for env {bad.tolist()}")
    return udot, _Contacts(foot_force, foot_normal, undesired)


def _advance_pose(pos, quat, q, u, udot, dt):
    pos1 = pos + dt * u[:, 0:3] + 0.5 * dt * dt * udot[:, 0:3]
    phi = dt * u[:, 3:6] + 0.5 * dt * dt * udot[:, 3:6]
    quat1 = quat_mul(rotvec_to_quat(phi), quat)
    quat1 /= np.linalg.norm(quat1, axis=-1, keepdims=True)
    q1 = q + dt * u[:, 6:] + 0.5 * dt * dt * udot[:, 6:]
    return pos1, quat1, q1


def step_dynamics(
    model: RobotModel,
    state: SimState,
    torques: np.ndarray,
    params: PhysParams,
    ground,
    dt: float,
    gains: ContactGains,
) -> SimState:
    """One inner step. `ground.sample(xy)` returns (height, normal, friction multiplier)."""
    if not np.all(np.isfinite(torques)):
        raise NumericalError("non-finite joint torques")
    rot = quat_to_rot(state.base_quat)
    u0 = generalized_velocity(rot, state.base_lin_vel, state.base_ang_vel, state.qd)
    acc0, c0 = _accelerations(model, gains, state.base_pos, state.base_quat, state.q, u0, torques, params, ground)

    pos1, quat1, q1 = _advance_pose(state.base_pos, state.base_quat, state.q, u0, acc0, dt)
    acc1, c1 = _accelerations(model, gains, pos1, quat1, q1, u0 + dt * acc0, torques, params, ground)
    u1 = u0 + 0.5 * dt * (acc0 + acc1)

    rot1_t = np.swapaxes(quat_to_rot(quat1), -1, -2)
    foot_force = 0.5 * (c0.foot_force + c1.foot_force)
    foot_normal = 0.5 * (c0.foot_normal + c1.foot_normal)
    contact = foot_normal > gains.threshold

    touchdown = contact & (state.air_time > 0)
    contact_time = np.where(contact, state.contact_time + dt, 0.0)
    air_time = np.where(contact, 0.0, state.air_time + dt)

    return SimState(
        base_pos=pos1,
        base_quat=quat1,
        base_lin_vel=np.einsum("nij,nj->ni", rot1_t, u1[:, 0:3]),
        base_ang_vel=np.einsum("nij,nj->ni", rot1_t, u1[:, 3:6]),
        q=q1,
        qd=u1[:, 6:],
        foot_force=foot_force,
        foot_normal_force=foot_normal,
        foot_contact=contact,
        contact_time=contact_time,
        air_time=air_time,
        last_air_time=np.where(touchdown, state.air_time, state.last_air_time),
        touchdowns=state.touchdowns + touchdown,
        undesired_force=0.5 * (c0.undesired + c1.undesired),
        time=state.time + dt,
    )


def stance_height(model: RobotModel) -> float:
    """Torso height above flat ground with the feet just touching at the default pose."""
    frames = forward_kinematics(
        model, np.zeros((1, 3)), np.array([[1.0, 0.0, 0.0, 0.0]]), model.q_default[None]
    )
    return float(-frames.feet[0, :, :, 2].min())


def standing_state(model: RobotModel, ground, yaw: np.ndarray, clearance: float = 0.0) -> SimState:
    """Robots at rest in the default pose, feet on the local terrain, one per entry of `yaw`."""
    n = len(yaw)
    quat = yaw_quat(np.asarray(yaw, dtype=float))
    q = np.repeat(model.q_default[None], n, axis=0)
    frames = forward_kinematics(model, np.zeros((n, 3)), quat, q)
    feet = frames.feet.reshape(n, -1, 3)
    heights, _, _ = ground.sample(feet[..., :2])
    pos = np.zeros((n, 3))
    pos[:, 2] = np.max(heights - feet[..., 2], axis=1) + clearance
    zeros2 = np.zeros((n, LEGS))
    return SimState(
        base_pos=pos,
        base_quat=quat,
        base_lin_vel=np.zeros((n, 3)),
        base_ang_vel=np.zeros((n, 3)),
        q=q,
        qd=np.zeros_like(q),
        foot_force=np.zeros((n, LEGS, 3)),
        foot_normal_force=zeros2.copy(),
        foot_contact=np.zeros((n, LEGS), dtype=bool),
        contact_time=zeros2.copy(),
        air_time=zeros2.copy(),
        last_air_time=zeros2.copy(),
        touchdowns=np.zeros((n, LEGS), dtype=np.int64),
        undesired_force=np.zeros((n, N_UNDESIRED)),
        time=np.zeros(n),
    )


def mechanical_energy(model: RobotModel, state: SimState, params: PhysParams) -> np.ndarray:
    """Kinetic plus gravitational potential energy per environment (J)."""
    frames = forward_kinematics(model, state.base_pos, state.base_quat, state.q)
    u = generalized_velocity(frames.rot, state.base_lin_vel, state.base_ang_vel, state.qd)
    mass_matrix, _ = mass_matrix_and_bias(model, frames, np.zeros_like(u), params)
    kinetic = 0.5 * np.einsum("ni,nij,nj->n", u, mass_matrix, u)
    potential = np.zeros(state.count)
    for mass, _, com, _, _ in _bodies(model, frames, params):
        potential += mass * params.gravity * com[:, 2]
    return kinetic + potential
