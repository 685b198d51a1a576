"""
Labeled datasets and the diagonal ellipsoid uncertainty model.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
from django.core.exceptions import ValidationError

logger = logging.getLogger(__name__)


class CovarianceMode(str, Enum):
    DEPENDENT = 'dependent'
    INDEPENDENT = 'independent'


@dataclass
class LabeledDataset:
    """Sparse feature rows z_i with labels y_i in {−1, +1}."""
    features: sp.csr_matrix
    labels: np.ndarray

    def __post_init__(self):
        self.features = sp.csr_matrix(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float).ravel()
        if self.features.shape[0] != self.labels.size:
            raise ValidationError(
                f"{self.features.shape[0]} feature rows but {self.labels.size} labels"
            )
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValidationError("Labels must be exactly -1 or +1")

    @classmethod
    def from_dense(cls, features, labels):
        return cls(sp.csr_matrix(np.atleast_2d(np.asarray(features, dtype=float))), labels)

    @property
    def num_examples(self):
        return self.features.shape[0]

    @property
    def num_features(self):
        return self.features.shape[1]

    def dense_features(self):
        return self.features.toarray()

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        return LabeledDataset(self.features[indices], self.labels[indices])

    def class_rows(self, label):
        return self.features[self.labels == label]


def train_test_split(data: LabeledDataset, train_fraction=0.8, seed=0):
    """Seeded shuffle, then the first `train_fraction` of rows train."""
    if not 0.0 < train_fraction <= 1.0:
        raise ValidationError(f"train_fraction must lie in (0, 1], got {train_fraction}")
    if data.num_examples == 0:
        raise ValidationError("Cannot split an empty dataset")
    order = np.random.default_rng(seed).permutation(data.num_examples)
    cut = int(round(train_fraction * data.num_examples))
    cut = min(max(cut, 1), data.num_examples)
    return data.subset(order[:cut]), data.subset(order[cut:])


@dataclass(frozen=True)
class EllipsoidModel:
    """
    Diagonal covariances per class scaled by ρ. The uncertainty set of a
    point z_i is {z : (z − z_i)ᵀ(ρΣ)⁻¹(z − z_i) ≤ 1}, so its shape matrix is
    Q_i = (ρΣ)⁻¹ and ‖Q_i^{-1/2}w‖² = ρ·wᵀΣw.
    """
    mode: CovarianceMode
    positive: np.ndarray
    negative: np.ndarray
    rho: float

    def __post_init__(self):
        object.__setattr__(self, 'mode', CovarianceMode(self.mode))
        object.__setattr__(self, 'positive', np.asarray(self.positive, dtype=float))
        object.__setattr__(self, 'negative', np.asarray(self.negative, dtype=float))
        if not 0.0 <= self.rho <= 1.0:
            raise ValidationError(f"Noise level rho must lie in [0, 1], got {self.rho}")
        if np.any(self.positive < 0) or np.any(self.negative < 0):
            raise ValidationError("Covariance diagonals must be nonnegative")
        if self.positive.shape != self.negative.shape:
            raise ValidationError("Class covariance diagonals differ in length")

    @property
    def nominal(self):
        return self.rho == 0.0

    @property
    def degenerate(self):
        """Some effective diagonal is zero while ρ > 0."""
        return not self.nominal and bool(np.any(self.positive == 0) or np.any(self.negative == 0))

    def covariance(self, label):
        return self.positive if label > 0 else self.negative

    def radius_sq(self, w, label):
        """‖Q_i^{-1/2}w‖² = ρ·Σ_j Σ_jj w_j²."""
        w = np.asarray(w, dtype=float)
        return float(self.rho * np.sum(self.covariance(label) * w * w))

    def shape(self, label):
        """Diagonal of Q_i = (ρΣ)⁻¹; requires strictly positive ρΣ."""
        effective = self.rho * self.covariance(label)
        if np.any(effective <= 0):
            raise ValidationError("Effective covariance ρΣ must be strictly positive for robust constraints")
        return 1.0 / effective


def covariance_from_data(data: LabeledDataset, mode=CovarianceMode.DEPENDENT, rho=0.3):
    """
    Estimate diagonal covariances from the data.

    Args:
        data: training set
        mode: 'dependent' for per-class per-feature sample variances,
            'independent' for one pooled within-class variance on every feature
        rho: noise level in [0, 1]

    Returns:
        EllipsoidModel
    """
    mode = CovarianceMode(mode)
    classes = [label for label in (1.0, -1.0) if np.any(data.labels == label)]
    if not classes:
        raise ValidationError("Cannot estimate covariances of an empty dataset")

    variances = {}
    counts = {}
    for label in classes:
        rows = data.class_rows(label).toarray()
        counts[label] = rows.shape[0]
        if rows.shape[0] >= 2:
            variances[label] = np.var(rows, axis=0, ddof=1)

    if mode == CovarianceMode.DEPENDENT:
        if len(classes) < 2:
            raise ValidationError("Class-dependent covariances need examples of both classes")
        for label in classes:
            if label not in variances:
                raise ValidationError(f"Class {int(label):+d} needs at least two examples for a sample variance")
        model = EllipsoidModel(mode, variances[1.0], variances[-1.0], rho)
    else:
        degrees = sum(counts[label] - 1 for label in classes)
        if degrees <= 0:
            raise ValidationError("Pooled variance needs at least two examples in some class")
        pooled = sum((counts[label] - 1) * variances[label] for label in variances) / degrees
        value = float(np.mean(pooled))
        diagonal = np.full(data.num_features, value)
        model = EllipsoidModel(mode, diagonal, diagonal.copy(), rho)

    if model.degenerate:
        logger.warning(f"Covariance model has zero diagonal entries with rho={rho}; robust constraints are undefined")
    return model
