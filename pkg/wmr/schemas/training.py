"""Pydantic schema for the per-iteration training log."""

from pydantic import BaseModel


class IterationLog(BaseModel):
    iteration: int
    mean_reward: float
    episodes: int
    mean_episode_return: float
    terrain_level: float
    recon_error: float
    L_recon: float
    L_mse: float
    L_bce: float
    L_l1: float
    L_v: float
    L_pi: float
    entropy: float
    clip_fraction: float
    ratio_deviation: float
    grad_norm: float
