"""Single-env trajectory dumps: command, true and reconstructed world state, action, reward terms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from wmr.config import RunConfig
from wmr.errors import ConfigError
from wmr.services.env.commands import ConstantSchedule
from wmr.services.env.layout import Layout
from wmr.services.env.rewards import REWARD_TERMS
from wmr.services.env.termination import RUNNING
from wmr.services.env.vec_env import VecEnv

SCENARIOS = ("training", "stair-descent")
STAIR_LEVEL = 5
STAIR_SPEED = 0.3


def channel_names(layout: Layout) -> list[str]:
    names = []
    for f in layout.world_fields:
        names.extend([f.name] if f.size == 1 else [f"{f.name}.{k}" for k in range(f.size)])
    return names


def scenario_config(cfg: RunConfig, scenario: str) -> RunConfig:
    if scenario == "training":
        return cfg
    if scenario == "stair-descent":
        terrain = cfg.terrain.model_copy(
            update={
                "kinds": ["stairs"],
                "initial_level": min(STAIR_LEVEL, cfg.terrain.max_level),
                "curriculum": False,
            }
        )
        return cfg.model_copy(update={"terrain": terrain})
    raise ConfigError(f"unknown replay scenario '{scenario}', expected one of {', '.join(SCENARIOS)}")


@dataclass
class ReplaySummary:
    steps: int
    seconds: float
    episode_return: float
    ended: str  # running / terminated / timed-out
    touchdown_hz: tuple[float, float]
    recon_error: float

    def lines(self) -> list[str]:
        return [
            f"steps={self.steps} seconds={self.seconds:.2f} return={self.episode_return:.6g} ended={self.ended}",
            f"touchdown_hz left={self.touchdown_hz[0]:.3f} right={self.touchdown_hz[1]:.3f}",
            f"recon_error={self.recon_error:.6g}",
        ]


def replay(
    cfg: RunConfig,
    agent,
    seed: int,
    steps: int | None = None,
    scenario: str = "training",
) -> tuple[pd.DataFrame, ReplaySummary]:
    """Deterministic rollout of env 0 until its first episode ends (or `steps`)."""
    cfg = scenario_config(cfg, scenario)
    schedule_factory = (lambda i, rng: ConstantSchedule(STAIR_SPEED)) if scenario == "stair-descent" else None
    env = VecEnv(cfg, n_envs=1, seed=seed, schedule_factory=schedule_factory)
    layout = env.layout
    names = channel_names(layout)
    limit = steps or env.max_steps
    obs, world = env.reset_all()
    agent.reset(1)
    starts = np.ones(1, dtype=bool)

    rows = []
    ended = "running"
    touchdowns = np.zeros(2)
    sq_err = []
    for k in range(limit):
        actions, recon = agent.act(obs, world, starts)
        row = {"t": k * env.policy_dt, "cmd_vx": env.cmd[0, 0], "cmd_vy": env.cmd[0, 1], "cmd_wz": env.cmd[0, 2]}
        row.update({f"true.{n}": v for n, v in zip(names, world[0])})
        if recon is not None:
            pred = layout.unscale_world(recon[0])
            row.update({f"pred.{n}": v for n, v in zip(names, pred)})
            sq_err.append(np.square(recon[0] - layout.scale_world(world[0])))
        row.update({f"action.{j}": v for j, v in enumerate(actions[0])})
        result = env.step(actions)
        for term in REWARD_TERMS:
            row[f"reward.{term}"] = result.breakdown.terms[term][0]
        row["reward.total"] = result.breakdown.total[0]
        row["reward"] = result.reward[0]
        row["done"] = int(result.done[0])
        rows.append(row)
        if result.done[0] != RUNNING:
            ended = "terminated" if result.finished[0].terminated else "timed-out"
            touchdowns = np.asarray(result.finished[0].touchdowns, dtype=float)
            break
        touchdowns = env.state.touchdowns[0].astype(float)
        obs, world, starts = result.obs, result.world, result.reset

    frame = pd.DataFrame(rows)
    seconds = len(rows) * env.policy_dt
    if sq_err:
        err = np.stack(sq_err)
        recon_error = float(np.mean([err[:, s].mean() for s in layout.slices().values()]))
    else:
        recon_error = math.nan
    summary = ReplaySummary(
        steps=len(rows),
        seconds=seconds,
        episode_return=float(frame["reward"].sum()),
        ended=ended,
        touchdown_hz=(touchdowns[0] / seconds, touchdowns[1] / seconds),
        recon_error=recon_error,
    )
    return frame, summary
