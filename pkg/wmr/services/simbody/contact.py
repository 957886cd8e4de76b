"""Penalty ground contact with a Coulomb friction cone."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wmr.services.simbody.model import ContactGains


@dataclass
class ContactResult:
    force: np.ndarray  # [..., 3] world
    normal_force: np.ndarray  # [...]
    flag: np.ndarray  # [...] bool


def contact_resolve(
    position: np.ndarray,
    velocity: np.ndarray,
    ground_height: np.ndarray,
    ground_normal: np.ndarray,
    mu: np.ndarray,
    gains: ContactGains,
    restitution: np.ndarray | float = 0.0,
) -> ContactResult:
    """Contact force on points [..., 3] against the terrain below them.

    Penetration is measured vertically (d = ground height - point height).
    The normal force acts along the terrain normal; the tangential force
    opposes sliding and is projected back onto the cone |f_t| <= mu * f_n.
    Restitution only weakens the normal damping.
    """
    depth = ground_height - position[..., 2]
    v_n = np.sum(velocity * ground_normal, axis=-1)
    v_t = velocity - v_n[..., None] * ground_normal

    damping = gains.c_n * (1.0 - np.asarray(restitution))
    f_n = np.maximum(0.0, gains.k_n * depth - damping * v_n)
    f_n = np.where(depth > 0, f_n, 0.0)

    f_t = -gains.k_t * v_t
    t_norm = np.linalg.norm(f_t, axis=-1)
    limit = mu * f_n
    scale = np.where(t_norm > limit, limit / np.maximum(t_norm, 1e-12), 1.0)
    f_t = f_t * scale[..., None]

    force = f_n[..., None] * ground_normal + f_t
    return ContactResult(force=force, normal_force=f_n, flag=f_n > gains.threshold)


def friction_cone_slack(result: ContactResult, normal: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """mu * f_n - |f_t| per point; non-negative whenever the cone holds."""
    f_t = result.force - result.normal_force[..., None] * normal
    return mu * result.normal_force - np.linalg.norm(f_t, axis=-1)
