"""Episode metrics, per-field reconstruction errors and their bootstrap standard errors.

Metrics are computed per episode and then averaged over episodes. Tracking
errors use the L2 norm of the instantaneous planar velocity error and the
absolute yaw-rate error; reconstruction errors are measured in the scaled
units the networks see.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from wmr.config import RunConfig
from wmr.errors import ConfigError, ShapeError
from wmr.schemas.metrics import METRIC_COLUMNS, EpisodeMetrics, PayloadEstimate, ReconFieldError
from wmr.services.env.commands import ConstantSchedule
from wmr.services.env.layout import Layout
from wmr.services.env.vec_env import VecEnv
from wmr.services.learner.networks import AgentState, WMRAgent

BOOTSTRAP_SAMPLES = 200


def recon_breakdown(layout: Layout, recon_scaled: np.ndarray, world_scaled: np.ndarray) -> dict[str, float]:
    """Mean squared error of each world-state field over all rows."""
    recon = np.asarray(recon_scaled, dtype=np.float64).reshape(-1, layout.world_dim)
    world = np.asarray(world_scaled, dtype=np.float64).reshape(-1, layout.world_dim)
    if recon.shape != world.shape:
        raise ShapeError(f"recon_breakdown: recon {recon.shape} vs world {world.shape}")
    sq = np.square(recon - world)
    return {name: float(sq[:, s].mean()) for name, s in layout.slices().items()}


def recon_error(breakdown: dict[str, float]) -> float:
    return float(np.mean(list(breakdown.values()))) if breakdown else math.nan


# ------------------------------------------------------------------- agents


class PolicyAgent:
    """Deterministic (mean-action) rollout of a trained agent."""

    def __init__(self, agent: WMRAgent):
        self.agent = agent
        self.layout = agent.layout
        self.state: AgentState | None = None
        self.has_estimator = agent.use_estimator

    def reset(self, n: int) -> None:
        self.state = self.agent.initial_state(n)

    def act(self, obs: np.ndarray, world: np.ndarray, starts: np.ndarray):
        """-> (raw actions [N, J], scaled reconstruction [N, W] or None)."""
        state = self.state.masked(~starts)
        out = self.agent.forward(self.layout.scale_obs(obs), self.layout.scale_world(world), state)
        self.state = out.state.detached()
        recon = out.recon.data.astype(np.float64) if out.recon is not None else None
        return out.mean.data.astype(np.float64), recon


class OracleAgent:
    """Zero actions and a perfect reconstruction; pairs with a velocity-pinned env."""

    has_estimator = True

    def __init__(self, layout: Layout):
        self.layout = layout

    def reset(self, n: int) -> None:
        self.n = n

    def act(self, obs: np.ndarray, world: np.ndarray, starts: np.ndarray):
        return np.zeros((obs.shape[0], self.layout.n_joints)), self.layout.scale_world(world)


# --------------------------------------------------------------- evaluation


@dataclass
class EvalResult:
    metrics: EpisodeMetrics
    breakdown: dict[str, float]
    stderr: dict[str, float]
    episodes: pd.DataFrame = field(repr=False)

    def breakdown_frame(self) -> pd.DataFrame:
        rows = [ReconFieldError(field=name, mse=mse).model_dump() for name, mse in self.breakdown.items()]
        return pd.DataFrame(rows, columns=list(ReconFieldError.model_fields))


def _episode_frame(rows: list[dict], fields: list[str]) -> pd.DataFrame:
    columns = ["env", "length", "terrain_kind", "terminated", *METRIC_COLUMNS, *[f"mse.{f}" for f in fields]]
    return pd.DataFrame(rows, columns=columns)


def bootstrap_stderr(episodes: pd.DataFrame, seed: int, samples: int = BOOTSTRAP_SAMPLES) -> dict[str, float]:
    """Std of episode-resampled means for every metric column."""
    rng = np.random.default_rng([seed, 0x5EED])
    n = len(episodes)
    out = {}
    picks = rng.integers(0, n, size=(samples, n)) if n else np.zeros((samples, 0), dtype=int)
    for col in METRIC_COLUMNS:
        values = episodes[col].to_numpy(dtype=np.float64)
        if n == 0 or np.all(np.isnan(values)):
            out[col] = math.nan
            continue
        out[col] = float(values[picks].mean(axis=1).std(ddof=1)) if n > 1 else 0.0
    return out


def evaluate(
    cfg: RunConfig,
    agent,
    n_episodes: int,
    seed: int,
    label: str | None = None,
) -> EvalResult:
    """Run `n_episodes` complete episodes under the training distribution.

    `agent` is a PolicyAgent or OracleAgent. Each of the `n_episodes` envs
    contributes exactly its first episode, so envs that fail fast are not
    over-sampled. Rows are ordered by env index.
    """
    if n_episodes < 1:
        raise ConfigError("evaluation needs at least one episode")
    n = n_episodes
    env = VecEnv(cfg, n_envs=n, seed=seed, oracle_velocity=isinstance(agent, OracleAgent))
    layout = env.layout
    fields = list(layout.slices())
    obs, world = env.reset_all()
    agent.reset(n)
    starts = np.ones(n, dtype=bool)
    sq_sum = np.zeros((n, len(fields)))
    slices = list(layout.slices().values())
    sizes = np.array([s.stop - s.start for s in slices], dtype=np.float64)

    rows: dict[int, dict] = {}
    while len(rows) < n:
        actions, recon = agent.act(obs, world, starts)
        if recon is not None:
            err = np.square(recon - layout.scale_world(world))
            sq_sum += np.stack([err[:, s].sum(axis=1) for s in slices], axis=1)
        result = env.step(actions)
        for ep in result.finished:
            if ep.env in rows:
                continue
            per_field = sq_sum[ep.env] / (sizes * ep.length)
            row = {
                "env": ep.env,
                "length": ep.length,
                "terrain_kind": ep.terrain_kind,
                "terminated": ep.terminated,
                "E_vel": ep.vel_error,
                "E_ang": ep.ang_error,
                "E_recon": float(per_field.mean()) if agent.has_estimator else math.nan,
                "M_terrain": float(ep.terrain_level),
                "M_reward": ep.episode_return,
            }
            for name, value in zip(fields, per_field):
                row[f"mse.{name}"] = float(value) if agent.has_estimator else math.nan
            rows[ep.env] = row
        obs, world, starts = result.obs, result.world, result.reset

    episodes = _episode_frame([rows[i] for i in sorted(rows)], fields)
    if agent.has_estimator:
        breakdown = {name: float(episodes[f"mse.{name}"].mean()) for name in fields}
        e_recon = recon_error(breakdown)
    else:
        breakdown, e_recon = {}, math.nan
    metrics = EpisodeMetrics(
        variant=label or cfg.run.variant,
        seed=seed,
        E_vel=float(episodes["E_vel"].mean()),
        E_ang=float(episodes["E_ang"].mean()),
        E_recon=e_recon,
        M_terrain=float(episodes["M_terrain"].mean()),
        M_reward=float(episodes["M_reward"].mean()),
    )
    return EvalResult(metrics, breakdown, bootstrap_stderr(episodes, seed), episodes)


def payload_sweep(
    cfg: RunConfig,
    agent: PolicyAgent,
    seed: int,
    payloads: list[float] | None = None,
    seconds: float = 10.0,
) -> list[PayloadEstimate]:
    """Standing still under fixed payloads; mean predicted payload over the second half."""
    if not agent.has_estimator:
        raise ConfigError("payload sweep needs a variant with an estimator")
    if payloads is None:
        lo, hi = cfg.randomization.payload
        payloads = list(np.linspace(lo, hi, 5))
    values = np.asarray(payloads, dtype=np.float64)
    n = len(values)

    def pin_payload(i, params):
        params.payload[:] = values[i]
        return params

    env = VecEnv(
        cfg,
        n_envs=n,
        seed=seed,
        schedule_factory=lambda i, rng: ConstantSchedule(),
        param_hook=pin_payload,
    )
    idx = env.layout.slices()["payload"].start
    scale = env.layout.world_scales()[idx]
    steps = int(round(seconds / env.policy_dt))
    obs, world = env.reset_all()
    agent.reset(n)
    starts = np.ones(n, dtype=bool)
    total = np.zeros(n)
    count = 0
    for step in range(steps):
        actions, recon = agent.act(obs, world, starts)
        if step >= steps // 2:
            total += recon[:, idx] / scale
            count += 1
        result = env.step(actions)
        obs, world, starts = result.obs, result.world, result.reset
    predicted = total / max(count, 1)
    return [
        PayloadEstimate(payload=float(p), predicted=float(q), abs_error=float(abs(q - p)))
        for p, q in zip(values, predicted)
    ]
