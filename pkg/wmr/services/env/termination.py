"""Episode end conditions."""

from __future__ import annotations

import numpy as np

from wmr.config import EnvSection
from wmr.services.env.observation import projected_gravity
from wmr.services.simbody.dynamics import SimState

RUNNING, TERMINATED, TIMED_OUT = 0, 1, 2


def tilt_angle(state: SimState) -> np.ndarray:
    return np.arccos(np.clip(-projected_gravity(state)[:, 2], -1.0, 1.0))


def check_termination(
    state: SimState,
    ground,
    cfg: EnvSection,
    steps: np.ndarray,
    max_steps: int,
    contact_threshold: float = 1.0,
) -> np.ndarray:
    """Per-env RUNNING / TERMINATED / TIMED_OUT; termination wins over a simultaneous timeout."""
    height, _, _ = ground.sample(state.base_pos[:, None, :2])
    too_low = state.base_pos[:, 2] - height[:, 0] < cfg.min_height
    body_contact = np.any(state.undesired_force > contact_threshold, axis=1)
    terminated = (tilt_angle(state) > cfg.tilt_limit) | too_low | body_contact
    kinds = np.full(state.count, RUNNING, dtype=np.int8)
    kinds[steps >= max_steps] = TIMED_OUT
    kinds[terminated] = TERMINATED
    return kinds
