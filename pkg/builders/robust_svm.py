"""
Robust sparse linear SVM under diagonal ellipsoidal uncertainty, plus the
worst-case machinery and the ordinary / worst-case classification rules.

    min λΣu_i + ‖w‖₁
    s.t. y_i(wᵀz_i + d) ≥ 1 − u_i
         y_i(wᵀz_i + d) ≥ ‖Q_i^{-1/2}w‖ + 1 − u_i
         u ≥ 0
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np
from django.core.exceptions import ValidationError

from geometry.prox import soc_eval_subgrad, soft_threshold
from geometry.sets import PartialNonnegative
from problems.core import AssumptionConstants, CompositeProblem, ConstraintOracle, ObjectiveOracle
from problems.sampling import CategoricalDistribution
from solvers.linear import RowStore
from .datasets import EllipsoidModel, LabeledDataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RobustSvmLayout:
    """x = (w, d, u) with w in R^n_feat, d scalar, u in R^N."""
    num_features: int
    num_examples: int

    @property
    def dimension(self):
        return self.num_features + 1 + self.num_examples

    @property
    def bias_index(self):
        return self.num_features

    @property
    def slack_indices(self):
        start = self.num_features + 1
        return np.arange(start, start + self.num_examples)

    def split(self, x):
        x = np.asarray(x, dtype=float)
        n = self.num_features
        return x[:n], float(x[n]), x[n + 1:]

    def join(self, w, d, u):
        return np.concatenate([np.asarray(w, dtype=float), [float(d)], np.asarray(u, dtype=float)])


class HingeSparsityObjective(ObjectiveOracle):
    """f = λΣu_i (gradient step), g = ‖w‖₁ (soft threshold on w only)."""

    def __init__(self, layout: RobustSvmLayout, lam):
        super().__init__(CategoricalDistribution.uniform(1))
        self.layout = layout
        self.lam = float(lam)
        self._gradient = np.zeros(layout.dimension)
        self._gradient[layout.slack_indices] = self.lam

    def subgradient(self, x, index):
        return self._gradient

    def prox(self, x, alpha, index):
        result = np.array(x, dtype=float)
        n = self.layout.num_features
        result[:n] = soft_threshold(result[:n], alpha)
        return result

    def value(self, x, index):
        w, _, u = self.layout.split(x)
        return self.lam * float(np.sum(u)) + float(np.sum(np.abs(w)))


class RobustMarginConstraints(ConstraintOracle):
    """
    Indices 0..N−1 are the nominal margin rows; N..2N−1 (robust case only)
    the second-order cone rows.
    """

    def __init__(self, data: LabeledDataset, layout: RobustSvmLayout, ellipsoids: EllipsoidModel = None):
        self.data = data
        self.layout = layout
        self.features = RowStore(data.features)
        self.robust = ellipsoids is not None and not ellipsoids.nominal
        self.ellipsoids = ellipsoids
        count = data.num_examples * (2 if self.robust else 1)
        self.shapes = None
        feature_norms = np.sqrt(self.features.norms_sq)
        norm_term = 0.0
        if self.robust:
            self.shapes = {label: ellipsoids.shape(label) for label in (1.0, -1.0)}
            norm_term = max(float(np.sqrt(np.max(1.0 / shape))) for shape in self.shapes.values())
        # ‖∇h‖² ≤ (‖z_i‖ + max_j Q_jj^{-1/2})² + 1 + 1
        bound = float(np.sqrt((feature_norms.max() + norm_term) ** 2 + 2.0))
        super().__init__(CategoricalDistribution.uniform(count), bound=bound)

    def _gradient(self, w_part, y_i, example):
        gradient = np.zeros(self.layout.dimension)
        gradient[:self.layout.num_features] = w_part
        gradient[self.layout.bias_index] = -y_i
        gradient[self.layout.slack_indices[example]] = -1.0
        return gradient

    def evaluate(self, x, index):
        w, d, u = self.layout.split(x)
        N = self.data.num_examples
        example = index % N
        y_i = self.data.labels[example]
        z_i = self.features.dense_row(example)
        if index < N:
            value = 1.0 - u[example] - y_i * (float(w @ z_i) + d)
            return value, self._gradient(-y_i * z_i, y_i, example)
        value, parts = soc_eval_subgrad(w, d, u[example], z_i, y_i, self.shapes[y_i])
        return value, self._gradient(parts.w, y_i, example)

    def violations(self, x, indices):
        values = self.all_values(x)
        return np.maximum(values[np.asarray(indices, dtype=int)], 0.0)

    def all_values(self, x):
        w, d, u = self.layout.split(x)
        margins = self.data.labels * (self.features.matvec(w) + d)
        linear = 1.0 - u - margins
        if not self.robust:
            return linear
        radii = np.where(
            self.data.labels > 0,
            np.sqrt(self.ellipsoids.radius_sq(w, 1.0)),
            np.sqrt(self.ellipsoids.radius_sq(w, -1.0)),
        )
        return np.concatenate([linear, linear + radii])


def build_robust_svm(data: LabeledDataset, lam, ellipsoids: EllipsoidModel):
    """
    Robust SVM as a CompositeProblem. With ρ = 0 the SOC rows coincide with
    the margin rows and only the N linear constraints are emitted.
    """
    if lam <= 0:
        raise ValidationError(f"lambda must be positive, got {lam}")
    if data.num_examples == 0:
        raise ValidationError("Dataset is empty")
    if ellipsoids.positive.size != data.num_features:
        raise ValidationError("Ellipsoid diagonals do not match the feature dimension")
    if ellipsoids.degenerate:
        raise ValidationError("Effective covariance ρΣ has zero diagonal entries; robust constraints are undefined")

    layout = RobustSvmLayout(data.num_features, data.num_examples)
    constraints = RobustMarginConstraints(data, layout, ellipsoids)
    problem = CompositeProblem(
        dimension=layout.dimension,
        objective=HingeSparsityObjective(layout, lam),
        simple_set=PartialNonnegative(layout.slack_indices),
        constraints=constraints,
        constants=AssumptionConstants(L=0.0, mu=0.0, B_h=constraints.bound),
        name='robust-svm' if constraints.robust else 'nominal-svm',
        metadata={'layout': layout, 'lambda': float(lam), 'rho': ellipsoids.rho},
    )
    logger.debug(
        f"Built {problem.name}: n={layout.dimension}, constraints={constraints.size}, B_h={constraints.bound:.4g}"
    )
    return problem


class WorstCasePoint(NamedTuple):
    point: np.ndarray
    value: float
    degenerate: bool


def worst_case_point(w, d, z_i, y_i, q_diag):
    """
    Minimizer of y_i(wᵀz + d) over the ellipsoid (z − z_i)ᵀQ(z − z_i) ≤ 1:
    z̄ = z_i − y_i Q⁻¹w/√(wᵀQ⁻¹w), value y_i(wᵀz_i + d) − ‖Q^{-1/2}w‖.
    At w = 0 every point is a minimizer; z_i is returned with the flag set.
    """
    w = np.asarray(w, dtype=float)
    z_i = np.asarray(z_i, dtype=float)
    q_diag = np.broadcast_to(np.asarray(q_diag, dtype=float), w.shape)
    if np.any(q_diag <= 0):
        raise ValidationError("Ellipsoid shape diagonal must be strictly positive")
    scaled = w / q_diag
    radius_sq = float(w @ scaled)
    margin = y_i * (float(w @ z_i) + d)
    if radius_sq == 0.0:
        return WorstCasePoint(z_i.copy(), margin, True)
    radius = np.sqrt(radius_sq)
    return WorstCasePoint(z_i - y_i * scaled / radius, margin - radius, False)


class ClassificationRule(str, Enum):
    ORDINARY = 'ordinary'
    WORST_CASE = 'worst_case'


class Classification(NamedTuple):
    label: int
    on_boundary: bool
    worst_case_flag: bool


def classify(rule, w, d, z, q_diag=None, squared=True):
    """
    Ordinary rule: sign(wᵀz + d), ties to +1 with the boundary flag. The
    worst-case rule also flags |wᵀz + d| < ‖Q^{-1/2}w‖² (or the unsquared
    norm when squared=False).
    """
    rule = ClassificationRule(rule)
    score = float(np.asarray(w, dtype=float) @ np.asarray(z, dtype=float)) + d
    label = 1 if score >= 0 else -1
    flag = False
    if rule == ClassificationRule.WORST_CASE:
        if q_diag is None:
            raise ValidationError("Worst-case classification requires the ellipsoid shape")
        w = np.asarray(w, dtype=float)
        radius_sq = float(w @ (w / np.broadcast_to(np.asarray(q_diag, dtype=float), w.shape)))
        threshold = radius_sq if squared else np.sqrt(radius_sq)
        flag = abs(score) < threshold
    return Classification(label, score == 0.0, flag)


class ErrorCounts(NamedTuple):
    ordinary: int
    worst_case: int


def count_errors(data: LabeledDataset, w, d, ellipsoids: EllipsoidModel = None, squared=True):
    """
    Ordinary errors are misclassified points; worst-case errors add the
    points whose uncertainty ellipsoid meets the hyperplane.
    """
    w = np.asarray(w, dtype=float)
    scores = np.asarray(data.features @ w).ravel() + d
    predicted = np.where(scores >= 0, 1.0, -1.0)
    wrong = predicted != data.labels
    flagged = np.zeros_like(wrong)
    if ellipsoids is not None:
        radius_sq = np.where(data.labels > 0, ellipsoids.radius_sq(w, 1.0), ellipsoids.radius_sq(w, -1.0))
        threshold = radius_sq if squared else np.sqrt(radius_sq)
        flagged = np.abs(scores) < threshold
    return ErrorCounts(int(np.sum(wrong)), int(np.sum(wrong | flagged)))
