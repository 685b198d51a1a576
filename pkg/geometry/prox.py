"""
Closed-form prox operators and the Polyak feasibility step.
"""
import logging
from typing import NamedTuple

import numpy as np
from django.core.exceptions import ValidationError

from problems.exceptions import InconsistentOracleError

logger = logging.getLogger(__name__)

# squared gradient norms below this are treated as numerically zero
TINY_GRADIENT_SQ = 1e-300


def soft_threshold(x, gamma, weight=1.0):
    """Prox of gamma·weight·‖·‖₁: sign(x)·max(|x| − gamma·weight, 0)."""
    if gamma <= 0:
        raise ValidationError(f"Prox parameter gamma must be positive, got {gamma}")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - gamma * weight, 0.0)


def l1_subgradient(x):
    # sign(0) = 0
    return np.sign(np.asarray(x, dtype=float))


def polyak_step(v, h_plus, grad_h, beta):
    """
    Relaxed Polyak subgradient step toward {h ≤ 0}.

    Args:
        v: current point
        h_plus: positive part of the constraint value at v
        grad_h: subgradient of the constraint at v
        beta: relaxation in (0, 2)

    Returns:
        v − beta·h_plus/‖grad_h‖²·grad_h, or v itself when h_plus = 0
    """
    if h_plus <= 0.0:
        return v
    grad_h = np.asarray(grad_h, dtype=float)
    norm_sq = float(grad_h @ grad_h)
    if norm_sq == 0.0:
        raise InconsistentOracleError(
            f"Constraint violated by {h_plus} but its subgradient is zero"
        )
    if norm_sq < TINY_GRADIENT_SQ:
        logger.warning(f"Subgradient norm² {norm_sq:.3e} below numeric floor; skipping feasibility step")
        return v
    return v - (beta * h_plus / norm_sq) * grad_h


class SocSubgradient(NamedTuple):
    w: np.ndarray
    d: float
    u: float


def _shape_diagonal(q_diag, size):
    q_diag = np.broadcast_to(np.asarray(q_diag, dtype=float), (size,))
    if np.any(q_diag <= 0):
        raise ValidationError("Ellipsoid shape diagonal must be strictly positive")
    return q_diag


def soc_eval_subgrad(w, d, u_i, z_i, y_i, q_diag):
    """
    Robust margin constraint ‖Q^{-1/2}w‖ + 1 − u_i − y_i(wᵀz_i + d) ≤ 0.

    The norm term contributes a zero subgradient at w with ‖Q^{-1/2}w‖ = 0.
    """
    w = np.asarray(w, dtype=float)
    z_i = np.asarray(z_i, dtype=float)
    q_diag = _shape_diagonal(q_diag, w.size)
    scaled = w / q_diag
    radius = float(np.sqrt(w @ scaled))
    margin = y_i * (float(w @ z_i) + d)
    value = radius + 1.0 - u_i - margin
    if radius > 0.0:
        w_part = scaled / radius - y_i * z_i
    else:
        w_part = -y_i * z_i
    return value, SocSubgradient(w=w_part, d=-float(y_i), u=-1.0)
