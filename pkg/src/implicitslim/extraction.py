"""Memory-efficient closed-form embedding refinement.

Computes the same refinement as the explicit dense route, but through a
low-rank identity so that no I x I matrix is ever formed: every intermediate
is at most an L x max(U, I) dense array plus the sparse feedback matrix.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .data import item_popularity
from .errors import NumericError, ParameterError, ShapeError
from .validation import as_sparse, check_embedding, check_interactions


@dataclass
class ImplicitSlimParams:
    """Hyperparameters of one refinement pass.

    lam is the ridge strength of the underlying item-item model, alpha the
    attachment strength toward the prior embeddings, popularity_threshold
    zeroes anchor columns of items seen by fewer users, and repeat is the
    number of chained passes when iterating.
    """

    lam: float
    alpha: float
    popularity_threshold: int = 0
    repeat: int = 1

    def __post_init__(self):
        if self.lam <= 0:
            raise ParameterError(f"lambda must be > 0, got {self.lam}")
        if self.alpha < 0:
            raise ParameterError(f"alpha must be >= 0, got {self.alpha}")
        if self.repeat < 1:
            raise ParameterError(f"repeat must be >= 1, got {self.repeat}")


def inverse_gram_diag_approx(X, lam):
    """Reciprocal diagonal of the ridged Gram matrix, 1 / (count_i + lambda).

    First-order series approximation of diag((X^T X + lambda*I)^{-1});
    exact whenever the Gram matrix is diagonal. O(nnz) time, never forms
    the inverse.
    """
    if lam <= 0:
        raise ParameterError(f"lambda must be > 0, got {lam}")
    X = as_sparse(X)
    norms = np.asarray(X.multiply(X).sum(axis=0)).ravel()
    return 1.0 / (norms + lam)


def _times_gram(X, M):
    # M (L x I) -> M @ (X^T X), evaluated as ((X^T) @ (X @ M^T))^T so every
    # dense intermediate stays at L x max(U, I).
    return (X.T @ (X @ M.T)).T


def implicit_slim(X, Q, A, params, form="resolvent"):
    """One refinement pass: pull embeddings toward their item-item hull.

    Returns the minimizer of ||V - V B||_F^2 + alpha*||(V - Q) A^T||_F^2
    where B is the (approximately rescaled) ridge item-item weight matrix,
    computed without materializing B. ``form`` selects between the two
    algebraically equal low-rank expressions; "resolvent" solves the single
    L x L system (I + alpha * F A^T) and stays well-posed as alpha -> 0,
    "alpha_inverse" is the textbook inverse-lemma shape and needs alpha > 0.
    """
    X = as_sparse(X)
    n_items = X.shape[1]
    Q = check_embedding(Q, n_items, name="Q")
    A = check_embedding(A, n_items, name="A")
    if Q.shape != A.shape:
        raise ShapeError(f"Q shape {Q.shape} != A shape {A.shape}")
    latent_dim = Q.shape[0]
    if latent_dim > n_items:
        raise ShapeError(
            f"latent_dim={latent_dim} exceeds item count {n_items}"
        )

    lam, alpha = params.lam, params.alpha
    d2 = inverse_gram_diag_approx(X, lam) ** 2

    # F = A (X^T X + lam I) D^2 (X^T X + lam I), assembled left to right.
    E = (_times_gram(X, A) + lam * A) * d2[None, :]
    F = _times_gram(X, E) + lam * E

    QAt = Q @ A.T
    FAt = F @ A.T
    eye = np.eye(latent_dim)
    try:
        if form == "resolvent":
            core = np.linalg.solve(eye + alpha * FAt, F)
        elif form == "alpha_inverse":
            if alpha <= 0:
                raise ParameterError("alpha_inverse form requires alpha > 0")
            core = F - FAt @ np.linalg.solve(eye / alpha + FAt, F)
        else:
            raise ParameterError(f"unknown form {form!r}")
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"low-rank system is singular: {exc}") from None
    return alpha * (QAt @ core)


def build_anchor_matrix(Q, popularity, threshold):
    """Copy of Q with columns of items below the popularity threshold zeroed."""
    Q = np.asarray(Q, dtype=np.float64)
    popularity = np.asarray(popularity)
    if len(popularity) != Q.shape[1]:
        raise ShapeError(
            f"popularity has {len(popularity)} entries for {Q.shape[1]} items"
        )
    A = Q.copy()
    A[:, popularity < threshold] = 0.0
    return A


def iterate_implicit_slim(X, q0, params, evaluator=None, latent_dim=None,
                          seed=0):
    """Chain refinement passes, rebuilding the anchor from the current state.

    ``q0`` may be an L x I matrix or None, in which case a seeded standard
    Gaussian matrix of shape (latent_dim, n_items) is drawn. With an
    ``evaluator`` callback (embedding -> score, higher is better) the loop
    stops as soon as the score drops and the best-scoring iterate is
    returned; otherwise exactly ``params.repeat`` passes run.
    """
    X = as_sparse(X)
    n_items = X.shape[1]
    if q0 is None:
        if latent_dim is None:
            raise ParameterError("latent_dim is required when q0 is not given")
        q = np.random.default_rng(seed).standard_normal((latent_dim, n_items))
    else:
        q = check_embedding(q0, n_items, name="q0")

    popularity = item_popularity(X)
    best_q, best_score = None, -np.inf
    for _ in range(params.repeat):
        anchor = build_anchor_matrix(q, popularity, params.popularity_threshold)
        q = implicit_slim(X, q, anchor, params)
        if evaluator is None:
            continue
        score = float(evaluator(q))
        if score < best_score:
            return best_q
        best_q, best_score = q, score
    return q if evaluator is None else best_q


class ImplicitSlimEmbedding(BaseEstimator):
    """Estimator wrapper around the iterated embedding extractor.

    fit(X) draws a seeded Gaussian prior and chains ``repeat`` refinement
    passes over the fitted interaction matrix, leaving the result in
    ``embedding_`` (latent_dim x n_entities). transform(Q) refines an
    externally supplied embedding matrix with a single pass against the
    fitted matrix, which is how downstream trainers consume this model.

    Set ``entity_kind="user"`` to embed users (the feedback matrix is
    transposed internally).
    """

    def __init__(self, latent_dim=64, lam=100.0, alpha=1.0,
                 popularity_threshold=0, repeat=1, entity_kind="item",
                 seed=0):
        self.latent_dim = latent_dim
        self.lam = lam
        self.alpha = alpha
        self.popularity_threshold = popularity_threshold
        self.repeat = repeat
        self.entity_kind = entity_kind
        self.seed = seed

    def _params(self, repeat=None):
        return ImplicitSlimParams(
            lam=self.lam,
            alpha=self.alpha,
            popularity_threshold=self.popularity_threshold,
            repeat=self.repeat if repeat is None else repeat,
        )

    def _oriented(self, X):
        if self.entity_kind == "user":
            return check_interactions(X.T)
        if self.entity_kind != "item":
            raise ParameterError(f"unknown entity_kind {self.entity_kind!r}")
        return check_interactions(X)

    def fit(self, X, y=None, evaluator=None):
        X = self._oriented(X)
        self.interactions_ = X
        self.popularity_ = item_popularity(X)
        self.embedding_ = iterate_implicit_slim(
            X, None, self._params(), evaluator=evaluator,
            latent_dim=self.latent_dim, seed=self.seed,
        )
        return self

    def transform(self, Q):
        anchor = build_anchor_matrix(
            Q, self.popularity_, self.popularity_threshold
        )
        return implicit_slim(self.interactions_, Q, anchor, self._params(repeat=1))


class SlimLleEmbedding(BaseEstimator):
    """Estimator wrapper around the dense two-step spectral extraction.

    Dense-limit only: fit(X) builds the sum-to-one weight matrix explicitly
    and runs the eigenvector step, leaving ``embedding_`` behind.
    """

    def __init__(self, latent_dim=64, lam=100.0, entity_kind="item",
                 dense_limit=None):
        self.latent_dim = latent_dim
        self.lam = lam
        self.entity_kind = entity_kind
        self.dense_limit = dense_limit

    def fit(self, X, y=None):
        from .closed_form import slim_lle_embed

        X = check_interactions(X)
        if self.entity_kind == "user":
            X = check_interactions(X.T)
        elif self.entity_kind != "item":
            raise ParameterError(f"unknown entity_kind {self.entity_kind!r}")
        self.embedding_ = slim_lle_embed(
            X, self.lam, self.latent_dim, dense_limit=self.dense_limit
        )
        return self
