"""Generalized advantage estimation over [T, N] rollouts with episode-boundary cuts."""

from __future__ import annotations

import numpy as np

from wmr.errors import ShapeError
from wmr.services.env.termination import RUNNING, TERMINATED, TIMED_OUT


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    bootstrap: np.ndarray,
    gamma: float,
    lam: float,
    terminal_values: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and return targets (float64).

    A terminated step gets delta = r - V. A timed-out step bootstraps from the
    value of the state it reached (`terminal_values[t]`, or the next entry of
    `values` / `bootstrap` when none are given). Both cut the recursion, since
    the next row belongs to a fresh episode.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones)
    if rewards.ndim == 1:
        rewards, values, dones = rewards[:, None], values[:, None], dones[:, None]
        bootstrap = np.atleast_1d(bootstrap)
        if terminal_values is not None:
            terminal_values = np.asarray(terminal_values)[:, None]
        squeeze = True
    else:
        squeeze = False
    bootstrap = np.asarray(bootstrap, dtype=np.float64)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise ShapeError(f"compute_gae: rewards {rewards.shape}, values {values.shape}, dones {dones.shape}")
    if bootstrap.shape != rewards.shape[1:]:
        raise ShapeError(f"compute_gae: bootstrap {bootstrap.shape} for {rewards.shape[1]} envs")
    if terminal_values is not None:
        terminal_values = np.asarray(terminal_values, dtype=np.float64)
        if terminal_values.shape != rewards.shape:
            raise ShapeError(f"compute_gae: terminal_values {terminal_values.shape} vs rewards {rewards.shape}")

    steps = rewards.shape[0]
    advantages = np.zeros_like(rewards)
    next_adv = np.zeros(rewards.shape[1])
    next_value = bootstrap
    for t in range(steps - 1, -1, -1):
        terminated = dones[t] == TERMINATED
        timed_out = dones[t] == TIMED_OUT
        running = dones[t] == RUNNING
        end_value = terminal_values[t] if terminal_values is not None else next_value
        target = np.where(terminated, 0.0, np.where(timed_out, end_value, next_value))
        delta = rewards[t] + gamma * target - values[t]
        advantages[t] = delta + gamma * lam * running * next_adv
        next_adv = advantages[t]
        next_value = values[t]

    returns = advantages + values
    if squeeze:
        return advantages[:, 0], returns[:, 0]
    return advantages, returns


def normalize_advantages(advantages: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Zero mean, unit (population) std over the whole batch, in float64."""
    a = np.asarray(advantages, dtype=np.float64)
    centred = a - a.mean()
    std = centred.std()
    return centred if std < eps else centred / std
