"""
Builders for linear systems: constrained least squares, LP primal-dual
feasibility and the sparse linear SVM as an LP.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from django.core.exceptions import ValidationError

from geometry.sets import NonnegativeOrthant
from solvers.linear import LinearFeasibilityProblem
from .datasets import LabeledDataset

logger = logging.getLogger(__name__)


def build_constrained_ls(A, b, C=None, d=None, simple_set=None, block_size=1, name='ls'):
    """
    find x in Y with Ax = b, Cx ≤ d, i.e. min ½E‖A_ζᵀx − b_ζ‖² over the
    constrained set. Frobenius sampling weights and LS constants attached.
    """
    if (C is None) != (d is None):
        raise ValidationError("C and d must be given together")
    problem = LinearFeasibilityProblem(
        A=A, b=b, C=C, d=d, simple_set=simple_set, block_size=block_size, name=name,
    )
    logger.debug(
        f"Built {name}: m={problem.num_eq_rows}, p={problem.num_ineq_rows}, n={problem.dimension}, "
        f"L={problem.constants.L if problem.constants else None}"
    )
    return problem


def _as_matrix(matrix):
    if sp.issparse(matrix):
        return sp.csr_matrix(matrix, dtype=float)
    return sp.csr_matrix(np.atleast_2d(np.asarray(matrix, dtype=float)))


def build_lp_feasibility(c, C_lp, d_lp, name='lp'):
    """
    Primal-dual system of min cᵀz s.t. C_lp z ≤ d_lp, z ≥ 0.

    x = (z, ν) ≥ 0 with one equality cᵀz + d_lpᵀν = 0 and inequalities
    C_lp z ≤ d_lp, −C_lpᵀν ≤ c.
    """
    c = np.asarray(c, dtype=float).ravel()
    d_lp = np.asarray(d_lp, dtype=float).ravel()
    C_lp = _as_matrix(C_lp)
    p, n = C_lp.shape
    if c.size != n:
        raise ValidationError(f"c has {c.size} entries but C has {n} columns")
    if d_lp.size != p:
        raise ValidationError(f"d has {d_lp.size} entries but C has {p} rows")

    A = np.concatenate([c, d_lp])[np.newaxis, :]
    stacked = sp.bmat([[C_lp, None], [None, -C_lp.T]], format='csr')
    rhs = np.concatenate([d_lp, c])
    return LinearFeasibilityProblem(
        A=A, b=np.zeros(1), C=stacked, d=rhs, simple_set=NonnegativeOrthant(), name=name,
    )


def split_lp_solution(x, num_variables):
    """(z, ν) from a primal-dual point."""
    x = np.asarray(x, dtype=float)
    return x[:num_variables], x[num_variables:]


@dataclass(frozen=True)
class SvmLpEncoding:
    """
    LP variables of the sparse SVM: z = (w₊, w₋, d₊, d₋, u) ≥ 0 with
    w = w₊ − w₋, d = d₊ − d₋, ‖w‖₁ = Σ(w₊ + w₋).
    """
    num_features: int
    num_examples: int

    @property
    def num_variables(self):
        return 2 * self.num_features + 2 + self.num_examples

    def decode(self, z):
        z = np.asarray(z, dtype=float)[:self.num_variables]
        n = self.num_features
        w = z[:n] - z[n:2 * n]
        d = float(z[2 * n] - z[2 * n + 1])
        u = z[2 * n + 2:].copy()
        return w, d, u

    def encode(self, w, d, u):
        w = np.asarray(w, dtype=float)
        return np.concatenate([
            np.maximum(w, 0.0), np.maximum(-w, 0.0),
            [max(d, 0.0), max(-d, 0.0)],
            np.asarray(u, dtype=float),
        ])


def build_sparse_svm_lp(data: LabeledDataset, lam):
    """
    min λΣu_i + ‖w‖₁ s.t. y_i(wᵀz_i + d) ≥ 1 − u_i, u ≥ 0 as an LP, then
    its primal-dual feasibility system.

    Returns:
        (LinearFeasibilityProblem, SvmLpEncoding)
    """
    if lam <= 0:
        raise ValidationError(f"lambda must be positive, got {lam}")
    if data.num_examples == 0:
        raise ValidationError("Dataset is empty")
    encoding = SvmLpEncoding(data.num_features, data.num_examples)
    n, N = data.num_features, data.num_examples

    cost = np.concatenate([np.ones(2 * n), np.zeros(2), np.full(N, float(lam))])
    signed = sp.diags(data.labels) @ data.features
    labels = data.labels[:, np.newaxis]
    # −y_i z_iᵀ(w₊ − w₋) − y_i(d₊ − d₋) − u_i ≤ −1
    C_lp = sp.hstack([
        -signed, signed,
        sp.csr_matrix(-labels), sp.csr_matrix(labels),
        -sp.identity(N, format='csr'),
    ], format='csr')
    d_lp = -np.ones(N)
    problem = build_lp_feasibility(cost, C_lp, d_lp, name='svm-lp')
    return problem, encoding
