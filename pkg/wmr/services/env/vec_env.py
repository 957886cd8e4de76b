"""Vectorized biped environments with auto-reset.

One policy step = `sim.decimation` inner dynamics steps. Every env owns a
numpy Generator spawned from the run seed; all of its randomness (reset
pose, physical parameters, commands, sensor noise) is drawn from it in a
fixed order so two runs with the same seed are bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from wmr.config import RunConfig
from wmr.errors import NumericalError, ShapeError
from wmr.services.env.commands import Trajectory, load_trajectory, make_schedule, sample_command
from wmr.services.env.layout import Layout
from wmr.services.env.observation import build_observation, build_world_state, projected_gravity
from wmr.services.env.rewards import RewardBreakdown, StepSnapshot, compute_reward
from wmr.services.env.termination import RUNNING, TERMINATED, check_termination
from wmr.services.simbody.dynamics import SimState, pd_torque, standing_state, step_dynamics
from wmr.services.simbody.kinematics import foot_velocities, forward_kinematics, generalized_velocity
from wmr.services.simbody.model import ContactGains, RobotModel
from wmr.services.simbody.randomization import PhysParams, randomize
from wmr.services.terrain.curriculum import CurriculumState, TerrainTiles, curriculum_update


@dataclass
class EpisodeStats:
    env: int
    length: int
    episode_return: float
    terrain_level: int
    terrain_kind: str
    walked: float
    commanded: float
    vel_error: float  # mean over steps
    ang_error: float
    terminated: bool
    touchdowns: tuple[int, int] = (0, 0)  # per foot


@dataclass
class StepResult:
    obs: np.ndarray  # [N, obs_dim], next observation (fresh for reset envs)
    world: np.ndarray  # [N, world_dim]
    reward: np.ndarray  # [N] scaled total
    done: np.ndarray  # [N] RUNNING / TERMINATED / TIMED_OUT
    breakdown: RewardBreakdown  # unscaled terms
    terminal_world: np.ndarray  # [N, world_dim] state reached by this step, before any reset
    reset: np.ndarray  # [N] bool, recurrent states must restart
    vel_error: np.ndarray  # [N] |v_xy - v*_xy|
    ang_error: np.ndarray  # [N] |w_z - w*_z|
    finished: list[EpisodeStats] = field(default_factory=list)


ScheduleFactory = Callable[[int, np.random.Generator], object]
ParamHook = Callable[[int, PhysParams], PhysParams]


class VecEnv:
    def __init__(
        self,
        cfg: RunConfig,
        n_envs: int | None = None,
        seed: int | None = None,
        schedule_factory: ScheduleFactory | None = None,
        param_hook: ParamHook | None = None,
        tiles: TerrainTiles | None = None,
        oracle_velocity: bool = False,
    ):
        self.cfg = cfg
        self.n = n_envs or cfg.run.envs
        self.seed = cfg.run.seed if seed is None else seed
        self.model = RobotModel.from_config(cfg.robot)
        self.gains = ContactGains.from_config(cfg.contact)
        self.layout = Layout(self.model.n_joints)
        self.policy_dt = cfg.sim.dt * cfg.sim.decimation
        self.max_steps = int(round(cfg.sim.episode_seconds / self.policy_dt))
        self.oracle_velocity = oracle_velocity
        self.param_hook = param_hook

        self.trajectory: Trajectory | None = None
        if schedule_factory is None and cfg.commands.source == "trajectory-file":
            self.trajectory = load_trajectory(cfg.commands.trajectory_file)
        self.schedule_factory = schedule_factory or (
            lambda i, rng: make_schedule(self.cfg.commands, rng, self.trajectory)
        )

        self.rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(self.seed).spawn(self.n)]
        self.tiles = tiles or TerrainTiles(cfg.terrain, self.seed)
        self.curriculum = CurriculumState.initial(
            self.n, len(self.tiles.kinds), cfg.terrain.initial_level, cfg.terrain.max_level
        )
        self.ground = self.tiles.ground(self.curriculum)

        j = self.model.n_joints
        self.state: SimState = standing_state(self.model, self.ground, np.zeros(self.n))
        self.params = PhysParams.nominal(self.n, j)
        self.schedules: list = [None] * self.n
        self.cmd = np.zeros((self.n, 3))
        self.last_action = np.zeros((self.n, j))
        self.last_torque = np.zeros((self.n, j))
        self.steps = np.zeros(self.n, dtype=np.int64)
        self._ep_return = np.zeros(self.n)
        self._ep_commanded = np.zeros(self.n)
        self._ep_vel_err = np.zeros(self.n)
        self._ep_ang_err = np.zeros(self.n)

    # ------------------------------------------------------------------ reset

    def reset_all(self) -> tuple[np.ndarray, np.ndarray]:
        self._reset_rows(np.ones(self.n, dtype=bool))
        return self.observe(), self.world_state()

    def _reset_rows(self, rows: np.ndarray) -> None:
        idx = np.flatnonzero(rows)
        if idx.size == 0:
            return
        self.ground.tile_index = self.tiles.index(self.curriculum)
        j = self.model.n_joints
        yaw = np.zeros(idx.size)
        fresh = []
        for k, i in enumerate(idx):
            rng = self.rngs[i]
            yaw[k] = rng.uniform(-np.pi, np.pi)
            p = randomize(self.cfg.randomization, rng, j, 1, self.model.torso_mass)
            if self.param_hook is not None:
                p = self.param_hook(int(i), p)
            fresh.append(p)
            self.schedules[i] = self.schedule_factory(int(i), rng)
        self.params.set_rows(idx, PhysParams.concat(fresh))
        self.state.set_rows(idx, standing_state(self.model, self.ground.subset(idx), yaw))
        self.last_action[idx] = 0.0
        self.last_torque[idx] = 0.0
        self.steps[idx] = 0
        for arr in (self._ep_return, self._ep_commanded, self._ep_vel_err, self._ep_ang_err):
            arr[idx] = 0.0
        for i in idx:
            self.cmd[i] = sample_command(self.schedules[i], 0.0).as_array()

    # ------------------------------------------------------------- assembly

    def observe(self) -> np.ndarray:
        return build_observation(
            self.state, self.params, self.cmd, self.last_action, self.rngs, self.cfg.noise, self.model
        )

    def world_state(self) -> np.ndarray:
        return build_world_state(self.state, self.params, self.cmd, self.last_action, self.model)

    def _snapshot(self) -> StepSnapshot:
        s = self.state
        frames = forward_kinematics(self.model, s.base_pos, s.base_quat, s.q)
        u = generalized_velocity(frames.rot, s.base_lin_vel, s.base_ang_vel, s.qd)
        return StepSnapshot(
            lin_vel=s.base_lin_vel.copy(),
            ang_vel=s.base_ang_vel.copy(),
            gravity=projected_gravity(s),
            q=s.q.copy(),
            qd=s.qd.copy(),
            torque=self.last_torque.copy(),
            foot_force=s.foot_force.copy(),
            foot_contact=s.foot_contact.copy(),
            foot_vel=foot_velocities(frames, u),
            contact_time=s.contact_time.copy(),
            last_air_time=s.last_air_time.copy(),
            touchdowns=s.touchdowns.copy(),
            undesired_force=s.undesired_force.copy(),
        )

    def _pin_velocity_to_command(self) -> None:
        self.state.base_lin_vel[:, :2] = self.cmd[:, :2]
        self.state.base_ang_vel[:, 2] = self.cmd[:, 2]

    # ----------------------------------------------------------------- step

    def step(self, actions: np.ndarray) -> StepResult:
        raw = np.asarray(actions, dtype=np.float64)
        if raw.shape != (self.n, self.model.n_joints):
            raise ShapeError(f"env_step: actions {raw.shape}, expected {(self.n, self.model.n_joints)}")
        bad = np.flatnonzero(~np.all(np.isfinite(raw), axis=1))
        if bad.size:
            raise NumericalError(f"non-finite action for env {int(bad[0])}")
        env_cfg = self.cfg.env
        action = np.clip(raw, -env_cfg.action_clip, env_cfg.action_clip) * env_cfg.action_scale

        before = self._snapshot()
        for _ in range(self.cfg.sim.decimation):
            tau = pd_torque(action, self.state, self.params, self.model)
            self.state = step_dynamics(self.model, self.state, tau, self.params, self.ground, self.cfg.sim.dt, self.gains)
        self.last_torque = tau
        self.steps += 1
        if self.oracle_velocity:
            self._pin_velocity_to_command()

        after = self._snapshot()
        done = check_termination(
            self.state, self.ground, env_cfg, self.steps, self.max_steps, self.gains.threshold
        )
        breakdown = compute_reward(
            before, after, self.cmd, action, self.last_action, done == TERMINATED,
            self.cfg.reward, self.model, self.policy_dt, self.gains.threshold,
        )
        reward = breakdown.total * self.cfg.reward.scale
        vel_error = np.linalg.norm(self.state.base_lin_vel[:, :2] - self.cmd[:, :2], axis=1)
        ang_error = np.abs(self.state.base_ang_vel[:, 2] - self.cmd[:, 2])

        self._ep_return += reward
        self._ep_commanded += np.linalg.norm(self.cmd[:, :2], axis=1) * self.policy_dt
        self._ep_vel_err += vel_error
        self._ep_ang_err += ang_error
        self.last_action = action

        for i in range(self.n):
            self.cmd[i] = sample_command(self.schedules[i], self.steps[i] * self.policy_dt).as_array()
        terminal_world = self.world_state()

        rows = done != RUNNING
        finished = self._finish_episodes(rows, done)
        self._reset_rows(rows)

        return StepResult(
            obs=self.observe(),
            world=self.world_state(),
            reward=reward,
            done=done,
            breakdown=breakdown,
            terminal_world=terminal_world,
            reset=rows,
            vel_error=vel_error,
            ang_error=ang_error,
            finished=finished,
        )

    def _finish_episodes(self, rows: np.ndarray, done: np.ndarray) -> list[EpisodeStats]:
        idx = np.flatnonzero(rows)
        if idx.size == 0:
            return []
        walked = np.linalg.norm(self.state.base_pos[:, :2], axis=1)
        stats = []
        for i in idx:
            length = int(self.steps[i])
            stats.append(
                EpisodeStats(
                    env=int(i),
                    length=length,
                    episode_return=float(self._ep_return[i]),
                    terrain_level=int(self.curriculum.level[i]),
                    terrain_kind=self.tiles.kinds[self.curriculum.kind[i]],
                    walked=float(walked[i]),
                    commanded=float(self._ep_commanded[i]),
                    vel_error=float(self._ep_vel_err[i] / length),
                    ang_error=float(self._ep_ang_err[i] / length),
                    terminated=bool(done[i] == TERMINATED),
                    touchdowns=tuple(int(c) for c in self.state.touchdowns[i]),
                )
            )
        if self.cfg.terrain.curriculum:
            self.curriculum = curriculum_update(
                self.curriculum, walked, self._ep_commanded,
                self.cfg.terrain.promote, self.cfg.terrain.demote, rows,
            )
        return stats

    # ----------------------------------------------------------------- rng

    def rng_states(self) -> list[dict]:
        return [rng.bit_generator.state for rng in self.rngs]

    def set_rng_states(self, states: list[dict]) -> None:
        if len(states) != self.n:
            raise ShapeError(f"{len(states)} rng states for {self.n} envs")
        for rng, st in zip(self.rngs, states):
            rng.bit_generator.state = st

    @property
    def terrain_level(self) -> float:
        return self.curriculum.mean_level
