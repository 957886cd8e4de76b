"""Training losses: reconstruction (MSE + BCE + L1), clipped PPO surrogate, value MSE, and their sum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wmr.config import LossSection
from wmr.errors import DataError, NumericalError, ShapeError
from wmr.services.autodiff import (
    Tensor,
    absolute,
    add,
    as_tensor,
    clamp,
    exp,
    log,
    minimum,
    mul,
    neg,
    reduce_mean,
    reduce_sum,
    square,
    sub,
)
from wmr.services.learner.networks import LOG_2PI

BCE_EPS = 1e-7


def gaussian_log_prob(actions, mean: Tensor, log_std: Tensor) -> Tensor:
    """log N(a | mean, exp(log_std)^2) summed over action dims -> [B]."""
    z = mul(sub(as_tensor(actions), mean), exp(neg(log_std)))
    n = mean.shape[1]
    return sub(mul(reduce_sum(square(z), axis=1), -0.5), add(reduce_sum(log_std), 0.5 * LOG_2PI * n))


def gaussian_entropy(log_std: Tensor) -> Tensor:
    n = log_std.shape[0]
    return add(reduce_sum(log_std), 0.5 * (1.0 + LOG_2PI) * n)


@dataclass
class ReconParts:
    mse: float
    bce: float
    l1: float
    total: float


def reconstruction_loss(
    c_hat: Tensor,
    y_hat: Tensor,
    z: Tensor,
    target_continuous: np.ndarray,
    target_contact: np.ndarray,
    weights: LossSection,
) -> tuple[Tensor, ReconParts]:
    """lambda_cont * MSE + lambda_dis * BCE + lambda_reg * L1.

    MSE is the squared error norm averaged over samples, BCE is averaged over
    every (sample, foot) entry with predictions clamped to [1e-7, 1 - 1e-7],
    and L1 is the latent's absolute sum averaged over samples.
    """
    target_continuous = np.asarray(target_continuous)
    target_contact = np.asarray(target_contact)
    if c_hat.shape != target_continuous.shape or y_hat.shape != target_contact.shape:
        raise ShapeError(
            f"reconstruction_loss: predictions {c_hat.shape}/{y_hat.shape} vs "
            f"targets {target_continuous.shape}/{target_contact.shape}"
        )
    if not np.all(np.isfinite(target_continuous)):
        raise DataError("reconstruction target contains non-finite values")
    if not np.all((target_contact == 0.0) | (target_contact == 1.0)):
        raise DataError("contact targets must be 0 or 1")

    mse = reduce_mean(reduce_sum(square(sub(c_hat, target_continuous)), axis=1))
    p = clamp(y_hat, BCE_EPS, 1.0 - BCE_EPS)
    y = as_tensor(target_contact)
    one_minus_p = sub(as_tensor(np.ones(p.shape)), p)
    per_entry = add(mul(y, log(p)), mul(sub(as_tensor(np.ones(y.shape)), y), log(one_minus_p)))
    bce = neg(reduce_mean(per_entry))
    l1 = reduce_mean(reduce_sum(absolute(z), axis=1))

    total = add(add(mul(mse, weights.cont), mul(bce, weights.dis)), mul(l1, weights.reg))
    return total, ReconParts(mse.item(), bce.item(), l1.item(), total.item())


@dataclass
class PolicyParts:
    objective: float
    entropy: float
    clip_fraction: float
    max_ratio_deviation: float


def ppo_policy_loss(
    log_prob: Tensor,
    old_log_prob: np.ndarray,
    advantages: np.ndarray,
    entropy: Tensor,
    clip: float,
    entropy_coef: float,
) -> tuple[Tensor, PolicyParts]:
    """Negated clipped surrogate minus the entropy bonus (a quantity to minimize)."""
    old_log_prob = np.asarray(old_log_prob)
    advantages = np.asarray(advantages)
    if log_prob.shape != old_log_prob.shape or log_prob.shape != advantages.shape:
        raise ShapeError(
            f"ppo_policy_loss: log_prob {log_prob.shape}, old {old_log_prob.shape}, adv {advantages.shape}"
        )
    try:
        ratio = exp(sub(log_prob, old_log_prob))
    except NumericalError as exc:
        raise NumericalError("policy ratio is non-finite") from exc
    objective = clipped_surrogate(ratio, advantages, clip)
    loss = sub(neg(objective), mul(entropy, entropy_coef))
    r = ratio.data
    parts = PolicyParts(
        objective=objective.item(),
        entropy=entropy.item(),
        clip_fraction=float(np.mean(np.abs(r - 1.0) > clip)),
        max_ratio_deviation=float(np.max(np.abs(r - 1.0))),
    )
    return loss, parts


def clipped_surrogate(ratio: Tensor, advantages, clip: float) -> Tensor:
    """mean(min(r * A, clip(r, 1 - eps, 1 + eps) * A))."""
    adv = as_tensor(advantages)
    unclipped = mul(ratio, adv)
    clipped = mul(clamp(ratio, 1.0 - clip, 1.0 + clip), adv)
    return reduce_mean(minimum(unclipped, clipped))


def value_loss(values: Tensor, returns: np.ndarray) -> Tensor:
    returns = np.asarray(returns)
    if values.shape != returns.shape:
        raise ShapeError(f"value_loss: values {values.shape} vs returns {returns.shape}")
    return reduce_mean(square(sub(values, returns)))


def total_loss(recon: Tensor | None, value: Tensor, policy: Tensor, weights: LossSection) -> Tensor:
    """L_recon + lambda_v * L_v + lambda_pi * L_pi; `recon` is None when there is no estimator."""
    rl = rl_loss(value, policy, weights)
    return rl if recon is None else add(recon, rl)


def rl_loss(value: Tensor, policy: Tensor, weights: LossSection) -> Tensor:
    return add(mul(value, weights.value), mul(policy, weights.policy))
