"""Estimator, policy and value networks, and the agent that wires them together.

All three are LSTM + ELU-MLP stacks on the tape engine. Inputs are the
scaled observation / world vectors (see env.layout). The policy reads only
the estimator's reconstruction; the critic reads the true world state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from wmr.config import NetworkSection
from wmr.errors import NumericalError
from wmr.services.autodiff import (
    LSTM,
    EluMLP,
    LstmState,
    Module,
    Tensor,
    as_tensor,
    clamp,
    concat,
    reduce_sum,
    sigmoid,
    slice_cols,
    stop_gradient,
)
from wmr.services.env.layout import Layout

LOG_2PI = float(np.log(2.0 * np.pi))


class EstimatorNet(Module):
    """History encoder with a continuous and a discrete (contact) decoder on one shared latent."""

    def __init__(self, layout: Layout, cfg: NetworkSection, rng: np.random.Generator):
        super().__init__()
        self.layout = layout
        self.encoder = self.child("encoder", LSTM(layout.obs_dim, cfg.hidden, rng))
        self.continuous = self.child(
            "continuous", EluMLP([cfg.hidden, cfg.decoder_hidden, layout.continuous_dim], rng)
        )
        self.discrete = self.child("discrete", EluMLP([cfg.hidden, cfg.decoder_hidden, 2], rng))

    def __call__(self, obs: Tensor, state: LstmState):
        z, state = self.encoder(as_tensor(obs), state)
        c_hat = self.continuous(z)
        y_hat = sigmoid(self.discrete(z))
        return c_hat, y_hat, z, state

    def reconstruction(self, c_hat: Tensor, y_hat: Tensor) -> Tensor:
        """Continuous block with the contact probabilities put back into the mask slots."""
        cut = self.layout.contact_slice.start
        width = self.layout.continuous_dim
        return concat([slice_cols(c_hat, 0, cut), y_hat, slice_cols(c_hat, cut, width)], axis=1)


class PolicyNet(Module):
    def __init__(self, in_dim: int, n_actions: int, cfg: NetworkSection, rng: np.random.Generator):
        super().__init__()
        self.memory = self.child("memory", LSTM(in_dim, cfg.hidden, rng))
        self.head = self.child("head", EluMLP([cfg.hidden, *cfg.head_dims, n_actions], rng))
        self.log_std = self.param("log_std", np.full(n_actions, cfg.init_log_std))
        self.log_std_bounds = (cfg.log_std_min, cfg.log_std_max)

    def __call__(self, x: Tensor, state: LstmState):
        h, state = self.memory(x, state)
        return self.head(h), clamp(self.log_std, *self.log_std_bounds), state


class ValueNet(Module):
    def __init__(self, in_dim: int, cfg: NetworkSection, rng: np.random.Generator):
        super().__init__()
        self.memory = self.child("memory", LSTM(in_dim, cfg.hidden, rng))
        self.head = self.child("head", EluMLP([cfg.hidden, *cfg.head_dims, 1], rng))

    def __call__(self, world: Tensor, state: LstmState):
        h, state = self.memory(as_tensor(world), state)
        return reduce_sum(self.head(h), axis=1), state


@dataclass(frozen=True)
class AgentState:
    estimator: Optional[LstmState]
    policy: LstmState
    value: LstmState

    def masked(self, keep: np.ndarray) -> "AgentState":
        keep = np.asarray(keep, dtype=np.float64)
        return AgentState(
            self.estimator.masked(keep) if self.estimator is not None else None,
            self.policy.masked(keep),
            self.value.masked(keep),
        )

    def detached(self) -> "AgentState":
        def plain(s: Optional[LstmState]):
            return None if s is None else LstmState(Tensor(s.hidden.data), Tensor(s.cell.data))

        return AgentState(plain(self.estimator), plain(self.policy), plain(self.value))

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in ("estimator", "policy", "value"):
            s = getattr(self, name)
            if s is not None:
                out[f"{name}.hidden"], out[f"{name}.cell"] = s.numpy()
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], rows=slice(None)) -> "AgentState":
        def pick(name):
            if f"{name}.hidden" not in arrays:
                return None
            return LstmState(Tensor(arrays[f"{name}.hidden"][rows]), Tensor(arrays[f"{name}.cell"][rows]))

        return cls(pick("estimator"), pick("policy"), pick("value"))


@dataclass
class AgentOutput:
    c_hat: Optional[Tensor]  # [B, continuous_dim]
    y_hat: Optional[Tensor]  # [B, 2]
    z: Optional[Tensor]  # [B, hidden]
    recon: Optional[Tensor]  # [B, world_dim], scaled units
    mean: Tensor  # [B, n_actions]
    log_std: Tensor  # [n_actions]
    value: Tensor  # [B]
    state: AgentState


class WMRAgent(Module):
    """Estimator -> (cutoff) -> policy, plus the asymmetric critic.

    `estimator=False` gives the plain recurrent PPO baseline that feeds the
    noisy observation straight to the policy. `cutoff=False` removes the
    stop-gradient between estimator and policy.
    """

    def __init__(
        self,
        layout: Layout,
        cfg: NetworkSection,
        rng: np.random.Generator,
        estimator: bool = True,
        cutoff: bool = True,
    ):
        super().__init__()
        self.layout = layout
        self.hidden = cfg.hidden
        self.use_estimator = estimator
        self.cutoff = cutoff and estimator
        self.estimator = self.child("estimator", EstimatorNet(layout, cfg, rng)) if estimator else None
        policy_in = layout.world_dim if estimator else layout.obs_dim
        self.policy = self.child("policy", PolicyNet(policy_in, layout.n_joints, cfg, rng))
        self.value = self.child("value", ValueNet(layout.world_dim, cfg, rng))

    @property
    def policy_input_dim(self) -> int:
        return self.layout.world_dim if self.use_estimator else self.layout.obs_dim

    def group_parameters(self, group: str) -> list[Tensor]:
        return [p for name, p in self.named_parameters() if name.startswith(f"{group}.")]

    def initial_state(self, batch: int) -> AgentState:
        return AgentState(
            LstmState.zeros(batch, self.hidden) if self.use_estimator else None,
            LstmState.zeros(batch, self.hidden),
            LstmState.zeros(batch, self.hidden),
        )

    def forward(self, obs_scaled, world_scaled, state: AgentState) -> AgentOutput:
        obs = as_tensor(obs_scaled)
        c_hat = y_hat = z = recon = None
        est_state = None
        if self.use_estimator:
            c_hat, y_hat, z, est_state = self.estimator(obs, state.estimator)
            recon = self.estimator.reconstruction(c_hat, y_hat)
            policy_in = stop_gradient(recon) if self.cutoff else recon
        else:
            policy_in = obs
        mean, log_std, pol_state = self.policy(policy_in, state.policy)
        value, val_state = self.value(world_scaled, state.value)
        return AgentOutput(c_hat, y_hat, z, recon, mean, log_std, value, AgentState(est_state, pol_state, val_state))

    def evaluate_value(self, world_scaled, state: LstmState) -> np.ndarray:
        value, _ = self.value(world_scaled, state)
        return value.data.astype(np.float64)


def gaussian_log_prob_np(actions: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Diagonal-Gaussian log density summed over action dims, float64."""
    mean = mean.astype(np.float64)
    log_std = log_std.astype(np.float64)
    z = (actions - mean) * np.exp(-log_std)
    logp = -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * LOG_2PI * mean.shape[-1]
    if not np.all(np.isfinite(logp)):
        raise NumericalError("non-finite action log-probability")
    return logp
