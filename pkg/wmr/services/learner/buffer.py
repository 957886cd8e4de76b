"""Fixed-size rollout storage with recurrent-state snapshots at segment starts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from wmr.errors import ShapeError
from wmr.services.learner.networks import AgentState


@dataclass
class RolloutBuffer:
    """[steps, envs, ...] arrays for one PPO iteration.

    `starts[t, i]` marks that env i begins a new episode at step t, so its
    recurrent states are zeroed right before that step (also at t = 0).
    `initial_states` holds every recurrent state as it was before step 0.
    Observations and world states are stored scaled.
    """

    steps: int
    envs: int
    obs_dim: int
    world_dim: int
    n_actions: int
    obs: np.ndarray = field(init=False)
    world: np.ndarray = field(init=False)
    recon: np.ndarray = field(init=False)
    actions: np.ndarray = field(init=False)
    log_probs: np.ndarray = field(init=False)
    values: np.ndarray = field(init=False)
    rewards: np.ndarray = field(init=False)
    dones: np.ndarray = field(init=False)
    starts: np.ndarray = field(init=False)
    terminal_values: np.ndarray = field(init=False)
    bootstrap: np.ndarray = field(init=False)
    initial_states: dict[str, np.ndarray] = field(init=False)
    size: int = field(init=False, default=0)

    def __post_init__(self):
        t, n = self.steps, self.envs
        self.obs = np.zeros((t, n, self.obs_dim), dtype=np.float32)
        self.world = np.zeros((t, n, self.world_dim), dtype=np.float32)
        self.recon = np.full((t, n, self.world_dim), np.nan, dtype=np.float32)
        self.actions = np.zeros((t, n, self.n_actions))
        self.log_probs = np.zeros((t, n))
        self.values = np.zeros((t, n))
        self.rewards = np.zeros((t, n))
        self.dones = np.zeros((t, n), dtype=np.int8)
        self.starts = np.zeros((t, n), dtype=bool)
        self.terminal_values = np.zeros((t, n))
        self.bootstrap = np.zeros(n)
        self.initial_states = {}

    @property
    def capacity(self) -> int:
        return self.steps * self.envs

    @property
    def full(self) -> bool:
        return self.size == self.steps

    def begin(self, state: AgentState) -> None:
        self.size = 0
        self.initial_states = state.arrays()

    def add(
        self,
        obs: np.ndarray,
        world: np.ndarray,
        recon: np.ndarray | None,
        actions: np.ndarray,
        log_probs: np.ndarray,
        values: np.ndarray,
        rewards: np.ndarray,
        dones: np.ndarray,
        starts: np.ndarray,
        terminal_values: np.ndarray,
    ) -> None:
        if self.size >= self.steps:
            raise ShapeError(f"rollout buffer already holds {self.steps} steps")
        if obs.shape != (self.envs, self.obs_dim) or actions.shape != (self.envs, self.n_actions):
            raise ShapeError(f"rollout buffer: obs {obs.shape}, actions {actions.shape} for {self.envs} envs")
        t = self.size
        self.obs[t] = obs
        self.world[t] = world
        if recon is not None:
            self.recon[t] = recon
        self.actions[t] = actions
        self.log_probs[t] = log_probs
        self.values[t] = values
        self.rewards[t] = rewards
        self.dones[t] = dones
        self.starts[t] = starts
        self.terminal_values[t] = terminal_values
        self.size += 1

    def env_groups(self, count: int, rng: np.random.Generator) -> list[np.ndarray]:
        """Random split of env indices into `count` groups of whole sequences."""
        count = max(1, min(count, self.envs))
        return [np.sort(g) for g in np.array_split(rng.permutation(self.envs), count)]

    def states_for(self, rows: np.ndarray) -> AgentState:
        return AgentState.from_arrays(self.initial_states, rows)
