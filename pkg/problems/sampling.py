"""
Seeded random streams and finite categorical distributions.

Every solver run owns one RandomStream. Per iteration it draws the
objective index first and then the constraint index, so a seed fixes the
whole index sequence.
"""
import logging

import numpy as np
from django.core.exceptions import ValidationError

logger = logging.getLogger(__name__)

# spawn keys for the auxiliary streams derived from a run seed
TRACE_STREAM_KEY = 1
PANEL_STREAM_KEY = 2


class RandomStream:
    """PCG64 generator seeded with a 64-bit integer."""

    def __init__(self, seed, spawn_key=()):
        if seed is None or int(seed) < 0 or int(seed) >= 2 ** 64:
            raise ValidationError(f"Seed must be an integer in [0, 2**64), got {seed!r}")
        self.seed = int(seed)
        self.spawn_key = tuple(spawn_key)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def draw(self, distribution):
        return distribution.sample(self.generator)

    def spawn(self, key):
        """Independent stream for trace evaluation, panels and the like."""
        return RandomStream(self.seed, self.spawn_key + (int(key),))

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, spawn_key={self.spawn_key})"


class CategoricalDistribution:
    """
    Finite distribution over {0, ..., size-1}.

    Sampling inverts the cumulative weights with searchsorted(side='right'),
    so an index of zero weight is never returned.
    """

    def __init__(self, weights):
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.size == 0:
            raise ValidationError("Index set is empty")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValidationError("Sampling weights must be finite and nonnegative")
        total = weights.sum()
        if total <= 0:
            raise ValidationError("Sampling weights sum to zero")
        self.probabilities = weights / total
        self._cdf = np.cumsum(self.probabilities)
        self._cdf[-1] = 1.0
        self._last_positive = int(np.flatnonzero(self.probabilities)[-1])

    @classmethod
    def uniform(cls, size):
        if size <= 0:
            raise ValidationError("Index set is empty")
        return cls(np.ones(int(size)))

    @property
    def size(self):
        return self.probabilities.size

    def sample(self, generator):
        index = int(np.searchsorted(self._cdf, generator.random(), side='right'))
        return min(index, self._last_positive)

    def __len__(self):
        return self.size

    def __repr__(self):
        return f"CategoricalDistribution(size={self.size})"
