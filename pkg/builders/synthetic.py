"""
Seeded synthetic instances for benchmarks and demos.
"""
import numpy as np
from django.core.exceptions import ValidationError

from .datasets import LabeledDataset


def planted_linear_system(m, p, n, seed=0, slack=1.0):
    """
    Gaussian A (m×n) and C (p×n) around a Gaussian x†, with b = Ax† and
    d = Cx† + slack, so the system is consistent by construction.

    Returns:
        dict with keys A, b, C, d, solution
    """
    if min(m, p) < 0 or n <= 0 or m + p == 0:
        raise ValidationError(f"Invalid planted system shape m={m}, p={p}, n={n}")
    rng = np.random.default_rng(seed)
    solution = rng.standard_normal(n)
    A = rng.standard_normal((m, n))
    C = rng.standard_normal((p, n))
    return {
        'A': A,
        'b': A @ solution,
        'C': C,
        'd': C @ solution + slack,
        'solution': solution,
    }


def random_bounded_lp(n=3, p=3, seed=0, upper=1.0):
    """
    min cᵀz s.t. C z ≤ d, z ≥ 0 with nonnegative random rows, d > 0 and the
    box rows z ≤ upper appended, so z = 0 is feasible and the region bounded.
    """
    rng = np.random.default_rng(seed)
    c = rng.uniform(-1.0, 1.0, n)
    random_rows = rng.uniform(0.0, 1.0, (p, n))
    random_rhs = rng.uniform(0.5, 1.5, p)
    C = np.vstack([random_rows, np.eye(n)])
    d = np.concatenate([random_rhs, np.full(n, float(upper))])
    return c, C, d


def separable_toy(points_per_class=6, seed=0, gap_x=2.0, gap_y=1.0):
    """
    Two classes in the plane separated along both axes: class +1 has
    x ≥ gap_x and y ≥ gap_y, class −1 the mirror image. Each class has
    points on both boundary lines.
    """
    if points_per_class < 4:
        raise ValidationError("separable_toy needs at least 4 points per class")
    rng = np.random.default_rng(seed)
    half = points_per_class // 2
    on_x = np.column_stack([np.full(half, gap_x), gap_y + rng.uniform(0.5, 2.0, half)])
    on_y = np.column_stack([gap_x + rng.uniform(0.5, 2.0, points_per_class - half), np.full(points_per_class - half, gap_y)])
    positive = np.vstack([on_x, on_y])
    features = np.vstack([positive, -positive])
    labels = np.concatenate([np.ones(points_per_class), -np.ones(points_per_class)])
    return LabeledDataset.from_dense(features, labels)
