"""
Slow deterministic baselines used by the test suite.

Nothing here calls into the solvers or the geometry kernels; every formula is
written out again with plain numpy.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from problems.exceptions import OracleFailure

logger = logging.getLogger(__name__)

FEASIBILITY_TOLERANCE = 1e-9


@dataclass
class OracleResult:
    value: Optional[float] = None
    point: Optional[np.ndarray] = None
    status: str = 'optimal'
    notes: dict = field(default_factory=dict)


def _dense(matrix):
    if matrix is None:
        return None
    return matrix.toarray() if sp.issparse(matrix) else np.atleast_2d(np.asarray(matrix, dtype=float))


def _project_simple(simple_set, x):
    kind = simple_set.kind
    if kind == 'whole-space':
        return x.copy()
    if kind == 'nonnegative-orthant':
        return np.where(x < 0.0, 0.0, x)
    if kind == 'box':
        return np.minimum(np.maximum(x, simple_set.lower), simple_set.upper)
    if kind == 'partial-nonnegative':
        result = x.copy()
        result[simple_set.indices] = np.where(result[simple_set.indices] < 0.0, 0.0, result[simple_set.indices])
        return result
    if kind in ('halfspace', 'hyperplane'):
        normal, offset = simple_set.normal, simple_set.offset
        gap = float(normal @ x) - offset
        if kind == 'halfspace' and gap <= 0.0:
            return x.copy()
        return x - gap / float(normal @ normal) * normal
    raise ValueError(f"No reference projection for simple set '{kind}'")


def oracle_feasibility_cyclic(problem, tol=1e-9, x0=None, max_sweeps=10_000):
    """
    Cyclic exact projections: every equality hyperplane, every inequality
    halfspace, then Y, until max(‖Ax − b‖, ‖(Cx − d)₊‖) ≤ tol.
    """
    A, C = _dense(problem.A), _dense(problem.C)
    b, d = problem.b, problem.d
    x = np.zeros(problem.dimension) if x0 is None else np.array(x0, dtype=float)
    x = _project_simple(problem.simple_set, x)

    def residual(point):
        eq = 0.0 if A is None else float(np.linalg.norm(A @ point - b))
        ineq = 0.0 if C is None else float(np.linalg.norm(np.clip(C @ point - d, 0.0, None)))
        return max(eq, ineq)

    for sweep in range(max_sweeps + 1):
        if residual(x) <= tol:
            return OracleResult(value=residual(x), point=x, notes={'sweeps': sweep})
        if A is not None:
            for row, target in zip(A, b):
                norm_sq = float(row @ row)
                if norm_sq > 0.0:
                    x = x - (float(row @ x) - target) / norm_sq * row
        if C is not None:
            for row, target in zip(C, d):
                gap = float(row @ x) - target
                norm_sq = float(row @ row)
                if gap > 0.0 and norm_sq > 0.0:
                    x = x - gap / norm_sq * row
        x = _project_simple(problem.simple_set, x)
    raise OracleFailure(f"Cyclic projections did not reach {tol} in {max_sweeps} sweeps")


def oracle_small_lp(c, C, d):
    """
    min cᵀz s.t. Cz ≤ d, z ≥ 0 by enumerating every basic point (n active
    constraints out of the p + n). Unboundedness is detected from the
    extreme rays of the recession cone {Cr ≤ 0, r ≥ 0}.
    """
    c = np.asarray(c, dtype=float).ravel()
    C = _dense(C)
    d = np.asarray(d, dtype=float).ravel()
    n = c.size
    if n > 6:
        raise ValueError("Vertex enumeration is limited to n ≤ 6")
    rows = np.vstack([C, -np.eye(n)])
    rhs = np.concatenate([d, np.zeros(n)])

    best = None
    vertices = 0
    for active in itertools.combinations(range(rows.shape[0]), n):
        system = rows[list(active)]
        if abs(np.linalg.det(system)) < 1e-12:
            continue
        point = np.linalg.solve(system, rhs[list(active)])
        if np.all(rows @ point <= rhs + FEASIBILITY_TOLERANCE):
            vertices += 1
            value = float(c @ point)
            if best is None or value < best[0] - 1e-12:
                best = (value, point)

    if best is None:
        return OracleResult(status='infeasible', notes={'vertices': 0})

    for active in itertools.combinations(range(rows.shape[0]), n - 1):
        system = rows[list(active)]
        if n > 1 and np.linalg.matrix_rank(system) < n - 1:
            continue
        direction = np.linalg.svd(system)[2][-1] if n > 1 else np.ones(1)
        for ray in (direction, -direction):
            if np.all(rows @ ray <= FEASIBILITY_TOLERANCE) and float(c @ ray) < -FEASIBILITY_TOLERANCE:
                return OracleResult(status='unbounded', notes={'vertices': vertices})

    return OracleResult(value=best[0], point=best[1], notes={'vertices': vertices})


def oracle_ellipsoid_min(w, d, z_i, y_i, q_diag, samples=100_000, seed=0):
    """
    min of y_i(wᵀz + d) over `samples` boundary points of
    {(z − z_i)ᵀQ(z − z_i) = 1}: Gaussian directions normalized in the Q metric.
    """
    if samples < 10_000:
        raise ValueError("The ellipsoid oracle needs at least 10⁴ samples")
    w = np.asarray(w, dtype=float)
    z_i = np.asarray(z_i, dtype=float)
    q_diag = np.broadcast_to(np.asarray(q_diag, dtype=float), w.shape)
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((samples, w.size))
    scale = np.sqrt(np.sum(directions * directions * q_diag, axis=1))
    boundary = z_i + directions / scale[:, np.newaxis]
    return float(np.min(y_i * (boundary @ w + d)))


def finite_diff_subgradient_check(function, gradient, point, step=1e-5):
    """max_j |(f(x + s e_j) − f(x − s e_j))/(2s) − gradient_j|."""
    point = np.asarray(point, dtype=float)
    gradient = np.asarray(gradient, dtype=float)
    deviations = []
    for j in range(point.size):
        offset = np.zeros_like(point)
        offset[j] = step
        central = (function(point + offset) - function(point - offset)) / (2.0 * step)
        deviations.append(abs(central - gradient[j]))
    return float(max(deviations))
