"""Input validation helpers used at estimator and function entry points."""

import numpy as np
import scipy.sparse as sp

from .errors import ShapeError

# Largest item count for which dense I x I intermediates are permitted.
DENSE_LIMIT = 20000


def as_sparse(X):
    """Canonicalize to float64 CSR with summed duplicates, keeping values."""
    if sp.issparse(X):
        X = sp.csr_array(X)
    else:
        X = sp.csr_array(np.asarray(X))
    X = X.astype(np.float64, copy=False)
    X.sum_duplicates()
    X.eliminate_zeros()
    return X


def check_interactions(X):
    """Canonicalize an interaction matrix to binary CSR with float64 ones.

    Accepts any scipy sparse matrix/array or a dense array; duplicate entries
    collapse to a single 1.0. Returns a ``csr_array``.
    """
    X = as_sparse(X)
    X.data = np.ones_like(X.data, dtype=np.float64)
    return X


def check_embedding(Q, n_entities=None, name="embedding"):
    """Validate a dense L x N embedding matrix: 2-D, finite, float64."""
    Q = np.asarray(Q, dtype=np.float64)
    if Q.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {Q.shape}")
    if n_entities is not None and Q.shape[1] != n_entities:
        raise ShapeError(
            f"{name} has {Q.shape[1]} columns, expected {n_entities}"
        )
    if not np.all(np.isfinite(Q)):
        raise ShapeError(f"{name} contains non-finite values")
    return Q


def check_dense_limit(n_items, dense_limit=None, context="dense solver"):
    """Refuse to build an I x I dense object past the configured limit."""
    limit = DENSE_LIMIT if dense_limit is None else dense_limit
    if n_items > limit:
        raise ShapeError(
            f"{context}: {n_items} items exceeds the dense limit of {limit}"
        )


def check_aligned_users(fold_in, holdout):
    """Fold-in and holdout matrices must cover the same users and items."""
    if fold_in.shape != holdout.shape:
        raise ShapeError(
            f"fold-in shape {fold_in.shape} != holdout shape {holdout.shape}"
        )
