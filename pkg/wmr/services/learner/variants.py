"""Learner wiring for the compared variants and an audit of the resulting graph."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wmr.config import RunConfig
from wmr.errors import ConfigError
from wmr.services.autodiff import Tape
from wmr.services.env.layout import Layout
from wmr.services.learner.networks import WMRAgent

VARIANTS = ("wmr", "no-cutoff", "random-cmd", "ppo-only")


@dataclass(frozen=True)
class Wiring:
    name: str
    estimator: bool
    cutoff: bool
    command_source: str | None  # None keeps the configured source

    def build_agent(self, layout: Layout, cfg: RunConfig, rng: np.random.Generator) -> WMRAgent:
        return WMRAgent(layout, cfg.network, rng, estimator=self.estimator, cutoff=self.cutoff)

    def apply(self, cfg: RunConfig) -> RunConfig:
        """Config actually trained under this wiring."""
        if self.command_source is None or cfg.commands.source == self.command_source:
            return cfg
        commands = cfg.commands.model_copy(update={"source": self.command_source})
        return cfg.model_copy(update={"commands": commands})


def variant(cfg_or_name: RunConfig | str) -> Wiring:
    name = cfg_or_name if isinstance(cfg_or_name, str) else cfg_or_name.run.variant
    if name == "wmr":
        return Wiring(name, estimator=True, cutoff=True, command_source=None)
    if name == "no-cutoff":
        return Wiring(name, estimator=True, cutoff=False, command_source=None)
    if name == "random-cmd":
        return Wiring(name, estimator=True, cutoff=True, command_source="random")
    if name == "ppo-only":
        return Wiring(name, estimator=False, cutoff=False, command_source=None)
    raise ConfigError(f"unknown variant '{name}', expected one of {', '.join(VARIANTS)}")


def audit_line(wiring: Wiring, agent: WMRAgent, cfg: RunConfig) -> str:
    layout = agent.layout
    policy_input = (
        f"reconstruction({layout.world_dim})" if wiring.estimator else f"observation({layout.obs_dim})"
    )
    return (
        f"[WIRING] variant={wiring.name} estimator={'on' if wiring.estimator else 'off'} "
        f"cutoff={'on' if agent.cutoff else 'off'} policy_input={policy_input} "
        f"critic_input=world({layout.world_dim}) commands={wiring.apply(cfg).commands.source}"
    )


def graph_ops(agent: WMRAgent, batch: int = 2) -> list[str]:
    """Primitive kinds recorded by one forward step, in tape order."""
    layout = agent.layout
    obs = np.zeros((batch, layout.obs_dim))
    world = np.zeros((batch, layout.world_dim))
    with Tape() as tape:
        agent.forward(obs, world, agent.initial_state(batch))
    return tape.op_kinds()
