"""Dense symmetric linear-algebra kernels shared by the closed-form solvers.

All routines are double precision and deterministic: eigenvectors and
orthonormal rows follow the convention that the first nonzero component is
positive.
"""

from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import NotPositiveDefiniteError, NumericError, RankError, ShapeError
from .validation import check_dense_limit, check_interactions


class EigPairs(NamedTuple):
    """Eigenvalues ascending; ``vectors`` columns are the matching unit vectors."""

    values: np.ndarray
    vectors: np.ndarray


def _require_symmetric(M, rtol=1e-9):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {M.shape}")
    scale = max(np.abs(M).max(), 1.0)
    if np.abs(M - M.T).max() > rtol * scale:
        raise ShapeError("matrix is not symmetric within tolerance")
    return M


def fix_signs(vectors):
    """Flip rows of ``vectors`` so the first nonzero component is positive."""
    vectors = np.array(vectors, dtype=np.float64)
    for row in vectors:
        scale = np.abs(row).max()
        if scale == 0.0:
            continue
        nz = np.flatnonzero(np.abs(row) > 1e-12 * scale)
        if len(nz) and row[nz[0]] < 0:
            row *= -1.0
    return vectors


def spd_solve(M, B):
    """Solve M S = B for symmetric positive-definite M via Cholesky.

    Never forms the inverse explicitly; raises NotPositiveDefiniteError on a
    non-positive pivot.
    """
    M = _require_symmetric(M)
    B = np.asarray(B, dtype=np.float64)
    if B.shape[0] != M.shape[0]:
        raise ShapeError(f"rhs has {B.shape[0]} rows, matrix is {M.shape[0]}")
    try:
        factor = sla.cho_factor(M, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from None
    return sla.cho_solve(factor, B, check_finite=False)


def smallest_eigenpairs(M, k):
    """The k smallest eigenpairs of a symmetric matrix, ascending."""
    M = _require_symmetric(M)
    n = M.shape[0]
    if not (1 <= k <= n):
        raise ShapeError(f"k={k} out of range for a {n}x{n} matrix")
    try:
        values, vectors = sla.eigh(M, subset_by_index=[0, k - 1], check_finite=False)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from None
    vectors = fix_signs(vectors.T).T
    return EigPairs(values=values, vectors=vectors)


def row_orthonormalize(V):
    """Orthonormalize the rows of an L x n matrix (L <= n), preserving row space."""
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or V.shape[0] > V.shape[1]:
        raise ShapeError(f"expected L x n with L <= n, got {V.shape}")
    Q, R = np.linalg.qr(V.T)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise RankError("rows are linearly dependent")
    return fix_signs(Q.T)


def top_right_singular_vectors(X, L, dense_limit=None):
    """Leading L right singular vectors of X as rows, by descending spectrum.

    Goes through the item Gram matrix, so item count must stay within the
    dense limit.
    """
    X = check_interactions(X)
    n_items = X.shape[1]
    check_dense_limit(n_items, dense_limit, context="singular vectors")
    if not (1 <= L <= n_items):
        raise ShapeError(f"L={L} out of range for {n_items} items")
    G = np.asarray((X.T @ X).todense(), dtype=np.float64)
    try:
        _, vectors = sla.eigh(
            G, subset_by_index=[n_items - L, n_items - 1], check_finite=False
        )
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from None
    return fix_signs(vectors[:, ::-1].T)
