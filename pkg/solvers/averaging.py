"""
Weighted averages of SSP iterates.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from django.core.exceptions import ValidationError


class AveragingMode(str, Enum):
    CONVEX = 'convex'
    STRONGLY_CONVEX = 'strongly-convex'
    LAST = 'last'


@dataclass
class AveragingState:
    mode: AveragingMode = AveragingMode.CONVEX
    k0: int = 0
    weighted_sum: Optional[np.ndarray] = None
    total_weight: float = 0.0

    def __post_init__(self):
        self.mode = AveragingMode(self.mode)
        if self.k0 < 0:
            raise ValidationError(f"k0 must be nonnegative, got {self.k0}")

    @property
    def average(self):
        if self.weighted_sum is None or self.total_weight <= 0.0:
            return None
        return self.weighted_sum / self.total_weight


def averaging_weight(mode, k, alpha_k, L, k0=0):
    if mode == AveragingMode.CONVEX:
        return alpha_k * (2.0 - alpha_k * L)
    if mode == AveragingMode.STRONGLY_CONVEX:
        return float((k + 1) ** 2) if k > k0 else 0.0
    return 0.0


def update_average(avg: AveragingState, x_k, k, alpha_k, L):
    """Add iterate x_k with the mode's weight for index k; returns avg."""
    if avg.mode == AveragingMode.LAST:
        return avg
    weight = averaging_weight(avg.mode, k, alpha_k, L, avg.k0)
    if weight == 0.0:
        return avg
    if avg.weighted_sum is None:
        avg.weighted_sum = weight * np.asarray(x_k, dtype=float)
    else:
        avg.weighted_sum += weight * x_k
    avg.total_weight += weight
    return avg
