"""Explicit dense closed forms for item-item weight models and their embeddings.

Everything here materializes I x I matrices and is therefore restricted to
the configured dense limit. The fast path in :mod:`implicitslim.extraction`
reproduces the relevant results without ever building these objects; this
module is the ground truth it is tested against, and the production route
for the eigen-based embeddings (dense-scale only).

Notation used throughout: X is the U x I binary feedback matrix, G = X^T X
+ lambda*I its ridged item Gram matrix, and P = G^{-1}.
"""

import warnings

import numpy as np

from .errors import (
    ContractError,
    DegenerateInputError,
    NotPositiveDefiniteError,
    ParameterError,
    ShapeError,
)
from .linalg import smallest_eigenpairs, spd_solve
from .validation import as_sparse, check_dense_limit, check_embedding

#: Tolerances of the structural guarantees the weight constructors provide.
ZERO_DIAG_TOL = 1e-10
COLUMN_SUM_TOL = 1e-8


def gram(X, lam, dense_limit=None):
    """Ridged item Gram matrix X^T X + lambda*I as a dense array.

    The diagonal equals per-item interaction counts plus lambda; lambda must
    be positive so the matrix is invertible.
    """
    if lam <= 0:
        raise ParameterError(f"lambda must be > 0, got {lam}")
    X = as_sparse(X)
    check_dense_limit(X.shape[1], dense_limit, context="gram")
    G = np.asarray((X.T @ X).toarray(), dtype=np.float64)
    G[np.diag_indices_from(G)] += lam
    return G


def _inverse_gram(X, lam, dense_limit=None):
    G = gram(X, lam, dense_limit=dense_limit)
    return spd_solve(G, np.eye(G.shape[0])), G


def ease_weights(X, lam, dense_limit=None):
    """Ridge item-item weights with a zero diagonal.

    Solves min_B ||X - XB||_F^2 + lambda*||B||_F^2 subject to diag(B) = 0;
    the minimizer is I - P * diagMat(1 / diag(P)) with P the inverse ridged
    Gram matrix.
    """
    P, _ = _inverse_gram(X, lam, dense_limit=dense_limit)
    B = -P / np.diag(P)[None, :]
    np.fill_diagonal(B, 0.0)
    return B


def slim_lle_weights(X, lam, dense_limit=None):
    """Zero-diagonal item-item weights whose columns additionally sum to one.

    Same ridge objective as :func:`ease_weights` with the extra constraint
    B^T 1 = 1. The closed form applies a rank-one correction to P before the
    diagonal rescaling: C = P - (P1)(P1)^T / (1^T P 1), B = I - C / diag(C).
    """
    P, _ = _inverse_gram(X, lam, dense_limit=dense_limit)
    p1 = P.sum(axis=1)
    denom = p1.sum()
    if abs(denom) < 1e-12:
        raise DegenerateInputError("1^T P 1 vanishes; rank-one correction undefined")
    C = P - np.outer(p1, p1) / denom
    diag_c = np.diag(C).copy()
    if np.abs(diag_c).min() < 1e-15:
        raise DegenerateInputError("corrected matrix has a zero diagonal entry")
    B = -C / diag_c[None, :]
    np.fill_diagonal(B, 0.0)
    return B


def lle_second_step(B, latent_dim, n_scale):
    """Spectral embedding of an item-item weight matrix.

    Builds M = (I-B)(I-B)^T, takes the ``latent_dim + 1`` smallest
    eigenpairs, discards the one most aligned with the constant vector
    (its direction is only approximately null under ridging), and scales the
    rest by sqrt(n_scale) so that V V^T / n_scale = I.
    """
    B = np.asarray(B, dtype=np.float64)
    n = B.shape[0]
    if latent_dim + 1 > n:
        raise ShapeError(f"latent_dim={latent_dim} too large for {n} items")
    ImB = np.eye(n) - B
    M = ImB @ ImB.T
    M = 0.5 * (M + M.T)
    pairs = smallest_eigenpairs(M, latent_dim + 1)
    alignment = np.abs(pairs.vectors.T @ np.ones(n))
    drop = int(np.argmax(alignment))
    keep = [j for j in range(latent_dim + 1) if j != drop]
    return np.sqrt(n_scale) * pairs.vectors[:, keep].T


def slim_lle_embed(X, lam, latent_dim, dense_limit=None):
    """Item embeddings from sum-to-one weights plus the spectral second step.

    Pass the transposed feedback matrix to embed users instead of items.
    """
    X = as_sparse(X)
    B = slim_lle_weights(X, lam, dense_limit=dense_limit)
    return lle_second_step(B, latent_dim, n_scale=X.shape[1])


def explicit_implicit_slim(X, Q, A, lam, alpha, diag_mode="approx",
                           dense_limit=None):
    """Reference embedding refinement through the materialized I x I system.

    Minimizes ||V - V B||_F^2 + alpha * ||(V - Q) A^T||_F^2 over V, where B
    is the zero-diagonal ridge weight matrix, giving

        V = alpha * Q A^T A * ((B - I)(B - I)^T + alpha * A^T A)^{-1}.

    ``diag_mode`` selects whether the diagonal rescaling inside B - I =
    -P D^{-1} uses the exact diag(P) or its reciprocal-Gram-diagonal
    approximation (the fast path always uses the approximation).
    """
    if alpha < 0:
        raise ParameterError(f"alpha must be >= 0, got {alpha}")
    if diag_mode not in ("exact", "approx"):
        raise ParameterError(f"unknown diag_mode {diag_mode!r}")
    X = as_sparse(X)
    n_items = X.shape[1]
    Q = check_embedding(Q, n_items, name="Q")
    A = check_embedding(A, n_items, name="A")
    if Q.shape != A.shape:
        raise ShapeError(f"Q shape {Q.shape} != A shape {A.shape}")

    P, G = _inverse_gram(X, lam, dense_limit=dense_limit)
    if diag_mode == "exact":
        d = np.diag(P).copy()
    else:
        d = 1.0 / np.diag(G)
    BmI = -P / d[None, :]
    M = BmI @ BmI.T + alpha * (A.T @ A)
    M = 0.5 * (M + M.T)
    rhs = alpha * (Q @ A.T @ A)
    try:
        return spd_solve(M, rhs.T).T
    except NotPositiveDefiniteError:
        warnings.warn(
            "refinement system is singular; falling back to a least-norm solve",
            RuntimeWarning,
            stacklevel=2,
        )
        solution, *_ = np.linalg.lstsq(M, rhs.T, rcond=None)
        return solution.T


def laplacian_from_b(B):
    """Graph Laplacian induced by a sum-to-one, zero-diagonal weight matrix.

    Returns ``(L, adjacency)`` with L = (I-B)(I-B)^T and adjacency =
    diagMat(diag(L)) - L. L is symmetric PSD with zero row sums, so
    trace(Q L Q^T) equals the weighted sum of pairwise embedding distances.
    """
    B = np.asarray(B, dtype=np.float64)
    n = B.shape[0]
    if np.abs(np.diag(B)).max() > ZERO_DIAG_TOL:
        raise ContractError("weight matrix diagonal is not zero")
    if np.abs(B.sum(axis=0) - 1.0).max() > COLUMN_SUM_TOL:
        raise ContractError("weight matrix columns do not sum to one")
    ImB = np.eye(n) - B
    L = ImB @ ImB.T
    L = 0.5 * (L + L.T)
    adjacency = np.diag(np.diag(L)) - L
    return L, adjacency
