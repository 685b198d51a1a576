"""
Small linear-algebra helpers shared by the LS constants and diagnostics.
"""
import logging

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

DENSE_SVD_MAX_ROWS = 64
POWER_TOLERANCE = 1e-10
POWER_MAX_ITERATIONS = 1000
# relative σ below which Gram eigenvalues are indistinguishable from rounding
GRAM_RANK_TOLERANCE = 1e-6


def as_row_block(block):
    """Return a 2-D dense array or CSR matrix; 1-D input is one row."""
    if sp.issparse(block):
        return sp.csr_matrix(block, dtype=float)
    block = np.asarray(block, dtype=float)
    if block.ndim == 1:
        block = block[np.newaxis, :]
    if block.ndim != 2:
        raise ValueError(f"Expected a matrix block, got shape {block.shape}")
    return block


def frobenius_norm_sq(block):
    if sp.issparse(block):
        return float(block.multiply(block).sum())
    return float(np.sum(np.square(block)))


def singular_values(block):
    """All singular values of a block, descending, via dense SVD."""
    dense = block.toarray() if sp.issparse(block) else np.asarray(block, dtype=float)
    if dense.size == 0:
        return np.zeros(0)
    return np.linalg.svd(dense, compute_uv=False)


def spectral_norm(block, seed=0):
    """
    Largest singular value.

    Blocks of at most 64 rows go through a dense SVD. Larger blocks use power
    iteration on BᵀB until the relative change drops below 1e-10 or 10³
    iterations pass.
    """
    block = as_row_block(block)
    if block.shape[0] <= DENSE_SVD_MAX_ROWS:
        values = singular_values(block)
        return float(values[0]) if values.size else 0.0

    rng = np.random.default_rng(seed)
    vector = rng.standard_normal(block.shape[1])
    vector /= np.linalg.norm(vector)
    estimate = 0.0
    for iteration in range(POWER_MAX_ITERATIONS):
        image = block.T @ (block @ vector)
        norm = float(np.linalg.norm(image))
        if norm == 0.0:
            return 0.0
        vector = image / norm
        if abs(norm - estimate) <= POWER_TOLERANCE * norm:
            estimate = norm
            break
        estimate = norm
    else:
        logger.warning(f"Power iteration stopped after {POWER_MAX_ITERATIONS} iterations")
    return float(np.sqrt(estimate))


def extreme_singular_values(block, rank_tolerance=1e-12, seed=0):
    """
    (σ_max, σ_min⁺) of a block, σ_min⁺ being the smallest singular value above
    rank_tolerance·σ_max. A zero block gives (0, 0).

    Small blocks use the dense SVD. Larger ones take σ_max from
    spectral_norm and σ_min⁺ from the eigenvalues of the smaller Gram matrix,
    whose rank cut-off cannot go below GRAM_RANK_TOLERANCE·σ_max.
    """
    block = as_row_block(block)
    if block.shape[0] <= DENSE_SVD_MAX_ROWS:
        values = singular_values(block)
        if values.size == 0 or values[0] == 0.0:
            return 0.0, 0.0
        positive = values[values > rank_tolerance * values[0]]
        return float(values[0]), float(positive[-1])

    largest = spectral_norm(block, seed=seed)
    if largest == 0.0:
        return 0.0, 0.0
    gram = block.T @ block if block.shape[1] <= block.shape[0] else block @ block.T
    gram = gram.toarray() if sp.issparse(gram) else np.asarray(gram)
    eigenvalues = np.linalg.eigvalsh(gram)
    cutoff = max(rank_tolerance, GRAM_RANK_TOLERANCE) * largest
    positive = eigenvalues[eigenvalues > cutoff ** 2]
    return largest, float(np.sqrt(positive.min()))
