"""Estimator, policy and critic training."""

from wmr.services.learner.buffer import RolloutBuffer
from wmr.services.learner.gae import compute_gae, normalize_advantages
from wmr.services.learner.networks import AgentState, EstimatorNet, PolicyNet, ValueNet, WMRAgent
from wmr.services.learner.variants import VARIANTS, Wiring, variant

__all__ = [
    "RolloutBuffer",
    "compute_gae",
    "normalize_advantages",
    "AgentState",
    "EstimatorNet",
    "PolicyNet",
    "ValueNet",
    "WMRAgent",
    "VARIANTS",
    "Wiring",
    "variant",
]
