"""Rollout collection and the joint estimator / PPO update.

One iteration = `run.steps_per_iter` env steps on every env, then
`ppo.epochs` passes over the buffer in `ppo.minibatches` groups of whole
env sequences. Each minibatch replays its sequences from the stored
segment-start recurrent states on one tape, takes the reconstruction and
RL gradients from that tape, checks the cutoff, clips and steps Adam.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from wmr.config import RunConfig
from wmr.errors import NumericalError, WMRError
from wmr.schemas.training import IterationLog
from wmr.services.autodiff import AdamState, Tape, Tensor, adam_step, clip_grad_norm, concat
from wmr.services.env.termination import TIMED_OUT
from wmr.services.env.vec_env import VecEnv
from wmr.services.evaluation.metrics import recon_breakdown, recon_error
from wmr.services.learner.buffer import RolloutBuffer
from wmr.services.learner.gae import compute_gae, normalize_advantages
from wmr.services.learner.losses import (
    gaussian_entropy,
    gaussian_log_prob,
    ppo_policy_loss,
    reconstruction_loss,
    rl_loss,
    total_loss,
    value_loss,
)
from wmr.services.learner.networks import AgentState, WMRAgent, gaussian_log_prob_np
from wmr.services.learner.variants import Wiring, variant
from wmr.services.terrain.curriculum import TerrainTiles


@dataclass
class RolloutCarry:
    """What the next rollout continues from."""

    obs: np.ndarray
    world: np.ndarray
    state: AgentState
    starts: np.ndarray


@dataclass
class RolloutStats:
    mean_reward: float
    episodes: int
    mean_episode_return: float
    recon_error: float
    steps_per_second: float


def collect_rollout(
    env: VecEnv,
    agent: WMRAgent,
    buffer: RolloutBuffer,
    carry: RolloutCarry,
    rng: np.random.Generator,
) -> tuple[RolloutCarry, RolloutStats]:
    """Fill `buffer` with stochastic actions; values are stored for GAE."""
    layout = env.layout
    buffer.begin(carry.state)
    returns = []
    started = time.perf_counter()
    for _ in range(buffer.steps):
        obs_s = layout.scale_obs(carry.obs)
        world_s = layout.scale_world(carry.world)
        out = agent.forward(obs_s, world_s, carry.state.masked(~carry.starts))
        mean = out.mean.data.astype(np.float64)
        log_std = out.log_std.data.astype(np.float64)
        actions = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
        log_probs = gaussian_log_prob_np(actions, mean, log_std)

        result = env.step(actions)
        terminal_values = np.zeros(env.n)
        if np.any(result.done == TIMED_OUT):
            terminal_values = agent.evaluate_value(layout.scale_world(result.terminal_world), out.state.value)
        buffer.add(
            obs_s,
            world_s,
            out.recon.data if out.recon is not None else None,
            actions,
            log_probs,
            out.value.data.astype(np.float64),
            result.reward,
            result.done,
            carry.starts,
            terminal_values,
        )
        returns.extend(ep.episode_return for ep in result.finished)
        carry = RolloutCarry(result.obs, result.world, out.state.detached(), result.reset)

    last = carry.state.masked(~carry.starts)
    buffer.bootstrap = agent.evaluate_value(layout.scale_world(carry.world), last.value)
    elapsed = max(time.perf_counter() - started, 1e-9)
    if agent.use_estimator:
        err = recon_error(recon_breakdown(layout, buffer.recon, buffer.world))
    else:
        err = math.nan
    stats = RolloutStats(
        mean_reward=float(buffer.rewards.mean()),
        episodes=len(returns),
        mean_episode_return=float(np.mean(returns)) if returns else math.nan,
        recon_error=err,
        steps_per_second=buffer.capacity / elapsed,
    )
    return carry, stats


# ------------------------------------------------------------------- update


@dataclass
class MinibatchResult:
    grads: list[np.ndarray]
    recon_grads: list[np.ndarray] | None
    rl_grads: list[np.ndarray]
    parts: dict[str, float]


def minibatch_gradients(
    agent: WMRAgent,
    buffer: RolloutBuffer,
    rows: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
    cfg: RunConfig,
) -> MinibatchResult:
    """Replay the sequences of `rows` and return per-parameter gradients.

    Reconstruction and RL gradients come from two reverse passes over the
    same tape and are summed; with the cutoff active the RL pass must leave
    every estimator gradient at exactly zero.
    """
    layout = agent.layout
    params = agent.parameters()
    state = buffer.states_for(rows)
    outs = []
    with Tape() as tape:
        for t in range(buffer.steps):
            state = state.masked(~buffer.starts[t, rows])
            out = agent.forward(buffer.obs[t, rows], buffer.world[t, rows], state)
            state = out.state
            outs.append(out)

        mean = concat([o.mean for o in outs], axis=0)
        log_std = outs[-1].log_std
        actions = buffer.actions[:, rows].reshape(-1, layout.n_joints)
        log_prob = gaussian_log_prob(actions, mean, log_std)
        entropy = gaussian_entropy(log_std)
        l_pi, pparts = ppo_policy_loss(
            log_prob,
            buffer.log_probs[:, rows].reshape(-1),
            advantages[:, rows].reshape(-1),
            entropy,
            cfg.ppo.clip,
            cfg.ppo.entropy_coef,
        )
        values = concat([o.value for o in outs], axis=0)
        l_v = value_loss(values, returns[:, rows].reshape(-1))
        rl = rl_loss(l_v, l_pi, cfg.loss)

        l_recon = None
        rparts = None
        if agent.use_estimator:
            target = buffer.world[:, rows].reshape(-1, layout.world_dim)
            target_c, target_y = layout.split_world(target)
            l_recon, rparts = reconstruction_loss(
                concat([o.c_hat for o in outs], axis=0),
                concat([o.y_hat for o in outs], axis=0),
                concat([o.z for o in outs], axis=0),
                target_c,
                target_y,
                cfg.loss,
            )
        loss = total_loss(l_recon, l_v, l_pi, cfg.loss)

    parts = {
        "L_recon": rparts.total if rparts else math.nan,
        "L_mse": rparts.mse if rparts else math.nan,
        "L_bce": rparts.bce if rparts else math.nan,
        "L_l1": rparts.l1 if rparts else math.nan,
        "L_v": l_v.item(),
        "L_pi": l_pi.item(),
        "entropy": pparts.entropy,
        "clip_fraction": pparts.clip_fraction,
        "ratio_deviation": pparts.max_ratio_deviation,
    }
    if not math.isfinite(loss.item()):
        raise NumericalError(f"non-finite loss: {', '.join(f'{k}={v:.4g}' for k, v in parts.items())}")

    rl_grads = tape.gradient(rl, params)
    if l_recon is None:
        return MinibatchResult(rl_grads, None, rl_grads, parts)

    recon_grads = tape.gradient(l_recon, params)
    if agent.cutoff:
        for name, g in zip((n for n, _ in agent.named_parameters()), rl_grads):
            if name.startswith("estimator.") and np.any(g != 0):
                raise WMRError(f"gradient cutoff violated: RL loss reaches {name}")
    grads = [a + b for a, b in zip(recon_grads, rl_grads)]
    return MinibatchResult(grads, recon_grads, rl_grads, parts)


@dataclass
class UpdateStats:
    parts: dict[str, float] = field(default_factory=dict)
    grad_norm: float = 0.0
    first_ratio_deviation: float = math.nan


def train_iteration(
    agent: WMRAgent,
    buffer: RolloutBuffer,
    adam: AdamState,
    cfg: RunConfig,
    rng: np.random.Generator,
) -> UpdateStats:
    if not buffer.full:
        raise WMRError(f"train_iteration needs a full buffer ({buffer.size}/{buffer.steps} steps)")
    advantages, returns = compute_gae(
        buffer.rewards,
        buffer.values,
        buffer.dones,
        buffer.bootstrap,
        cfg.ppo.gamma,
        cfg.ppo.lam,
        buffer.terminal_values,
    )
    advantages = normalize_advantages(advantages)
    params = agent.parameters()

    sums: dict[str, float] = {}
    norms = []
    first = math.nan
    count = 0
    for _ in range(cfg.ppo.epochs):
        for rows in buffer.env_groups(cfg.ppo.minibatches, rng):
            mb = minibatch_gradients(agent, buffer, rows, advantages, returns, cfg)
            if count == 0:
                first = mb.parts["ratio_deviation"]
            grads, norm = clip_grad_norm(mb.grads, cfg.ppo.max_grad_norm)
            adam_step(params, grads, adam)
            for k, v in mb.parts.items():
                sums[k] = sums.get(k, 0.0) + v
            norms.append(norm)
            count += 1
    return UpdateStats({k: v / count for k, v in sums.items()}, float(np.mean(norms)), first)


# ------------------------------------------------------------------ trainer


class Trainer:
    """Owns the envs, the agent, the optimizer and every generator of one run."""

    def __init__(
        self,
        cfg: RunConfig,
        seed: int | None = None,
        n_envs: int | None = None,
        tiles: TerrainTiles | None = None,
    ):
        self.wiring: Wiring = variant(cfg)
        self.cfg = self.wiring.apply(cfg)
        self.seed = self.cfg.run.seed if seed is None else seed
        init_seq, update_seq = np.random.SeedSequence([self.seed, 1]).spawn(2)
        self.env = VecEnv(self.cfg, n_envs=n_envs, seed=self.seed, tiles=tiles)
        self.layout = self.env.layout
        self.agent = self.wiring.build_agent(self.layout, self.cfg, np.random.default_rng(init_seq))
        self.rng = np.random.default_rng(update_seq)
        ppo = self.cfg.ppo
        self.adam = AdamState.for_params(self.agent.parameters(), ppo.lr, ppo.beta1, ppo.beta2, ppo.eps)
        self.buffer = RolloutBuffer(
            self.cfg.run.steps_per_iter, self.env.n, self.layout.obs_dim, self.layout.world_dim, self.layout.n_joints
        )
        self.iteration = 0
        self.carry: RolloutCarry | None = None

    def reset(self) -> None:
        obs, world = self.env.reset_all()
        self.carry = RolloutCarry(obs, world, self.agent.initial_state(self.env.n), np.ones(self.env.n, dtype=bool))

    def run_iteration(self) -> tuple[IterationLog, float]:
        """One rollout + update; returns the log row and steps/sec."""
        if self.carry is None:
            self.reset()
        self.carry, rollout = collect_rollout(self.env, self.agent, self.buffer, self.carry, self.rng)
        update = train_iteration(self.agent, self.buffer, self.adam, self.cfg, self.rng)
        self.iteration += 1
        p = update.parts
        log = IterationLog(
            iteration=self.iteration,
            mean_reward=rollout.mean_reward,
            episodes=rollout.episodes,
            mean_episode_return=rollout.mean_episode_return,
            terrain_level=self.env.terrain_level,
            recon_error=rollout.recon_error,
            L_recon=p["L_recon"],
            L_mse=p["L_mse"],
            L_bce=p["L_bce"],
            L_l1=p["L_l1"],
            L_v=p["L_v"],
            L_pi=p["L_pi"],
            entropy=p["entropy"],
            clip_fraction=p["clip_fraction"],
            ratio_deviation=update.first_ratio_deviation,
            grad_norm=update.grad_norm,
        )
        return log, rollout.steps_per_second

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(name, p.data) for name, p in self.agent.named_parameters()]

    def rng_states(self) -> dict:
        return {"envs": self.env.rng_states(), "update": self.rng.bit_generator.state}

    def restore(self, params: dict[str, np.ndarray], adam: AdamState, iteration: int, rng_states: dict) -> None:
        """Load a saved run; envs restart from fresh episodes."""
        for name, p in self.agent.named_parameters():
            p.data = params[name].astype(p.data.dtype).copy()
        self.adam = adam
        self.iteration = iteration
        self.env.set_rng_states(rng_states["envs"])
        self.rng.bit_generator.state = rng_states["update"]
        self.reset()
