"""
Simple sets Y with closed-form Euclidean projections.
"""
from abc import ABC, abstractmethod

import numpy as np
from django.core.exceptions import ValidationError


class SimpleSet(ABC):
    kind = 'abstract'

    @abstractmethod
    def project(self, v):
        """Euclidean projection of v."""

    @abstractmethod
    def contains(self, v, tol=0.0):
        """Membership predicate with absolute slack `tol`."""

    def describe(self):
        return {'kind': self.kind}

    def __repr__(self):
        return f"{type(self).__name__}()"


class WholeSpace(SimpleSet):
    kind = 'whole-space'

    def project(self, v):
        return np.array(v, dtype=float)

    def contains(self, v, tol=0.0):
        return bool(np.all(np.isfinite(v)))


class NonnegativeOrthant(SimpleSet):
    kind = 'nonnegative-orthant'

    def project(self, v):
        return np.maximum(np.asarray(v, dtype=float), 0.0)

    def contains(self, v, tol=0.0):
        return bool(np.all(np.asarray(v) >= -tol))


class Box(SimpleSet):
    kind = 'box'

    def __init__(self, lower, upper):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if np.any(lower > upper):
            raise ValidationError("Box lower bound exceeds upper bound")
        self.lower = lower
        self.upper = upper

    def project(self, v):
        return np.clip(np.asarray(v, dtype=float), self.lower, self.upper)

    def contains(self, v, tol=0.0):
        v = np.asarray(v)
        return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))

    def describe(self):
        return {'kind': self.kind, 'lower': self.lower, 'upper': self.upper}

    def __repr__(self):
        return f"Box(lower={self.lower}, upper={self.upper})"


class _AffineSet(SimpleSet):

    def __init__(self, normal, offset):
        normal = np.asarray(normal, dtype=float).ravel()
        norm_sq = float(normal @ normal)
        if norm_sq == 0.0:
            raise ValidationError(f"{type(self).__name__} normal must be nonzero")
        self.normal = normal
        self.offset = float(offset)
        self._norm_sq = norm_sq

    def gap(self, v):
        return float(self.normal @ v) - self.offset

    def describe(self):
        return {'kind': self.kind, 'normal': self.normal, 'offset': self.offset}

    def __repr__(self):
        return f"{type(self).__name__}(normal={self.normal}, offset={self.offset})"


class Halfspace(_AffineSet):
    """{x : cᵀx ≤ d}"""
    kind = 'halfspace'

    def project(self, v):
        v = np.asarray(v, dtype=float)
        gap = self.gap(v)
        if gap <= 0.0:
            return v.copy()
        return v - (gap / self._norm_sq) * self.normal

    def contains(self, v, tol=0.0):
        return self.gap(v) <= tol


class Hyperplane(_AffineSet):
    """{x : cᵀx = d}"""
    kind = 'hyperplane'

    def project(self, v):
        v = np.asarray(v, dtype=float)
        return v - (self.gap(v) / self._norm_sq) * self.normal

    def contains(self, v, tol=0.0):
        return abs(self.gap(v)) <= tol


class PartialNonnegative(SimpleSet):
    """Nonnegativity on a subset of coordinates, the rest free."""
    kind = 'partial-nonnegative'

    def __init__(self, indices):
        self.indices = np.unique(np.asarray(indices, dtype=int))

    def project(self, v):
        result = np.array(v, dtype=float)
        result[self.indices] = np.maximum(result[self.indices], 0.0)
        return result

    def contains(self, v, tol=0.0):
        return bool(np.all(np.asarray(v)[self.indices] >= -tol))

    def describe(self):
        return {'kind': self.kind, 'indices': self.indices}

    def __repr__(self):
        return f"PartialNonnegative(indices={self.indices.tolist()})"


def project(simple_set: SimpleSet, v):
    return simple_set.project(v)


def simple_set_from_name(name):
    """CLI helper: 'free' or 'nonneg'."""
    if name in (None, 'free', WholeSpace.kind):
        return WholeSpace()
    if name in ('nonneg', NonnegativeOrthant.kind):
        return NonnegativeOrthant()
    raise ValidationError(f"Unknown simple set '{name}'")
