"""Closed-form alternating trainers with refinement-based setups.

Two downstream models consume the extracted embeddings: a ridge matrix
factorization trained with exact alternating least squares, and a projected
linear regression whose item projector is fixed and whose output embeddings
have a one-shot closed form. Each supports the refinement setups: plain
training ("vanilla"), refinement as both initializer and per-iteration
regularization target ("islim_init_reg"), iterated refinement with no
alternating training at all ("islim_init", MF only), and spectral two-step
initialization ("slimlle_init").

Early stopping monitors NDCG@100 on a validation fold-in/holdout pair and
breaks on the first decrease, keeping the best-scoring iterate.
"""

import logging
import warnings

import numpy as np
from sklearn.base import BaseEstimator

from .closed_form import slim_lle_embed
from .data import item_popularity
from .errors import NotPositiveDefiniteError, ParameterError, ShapeError
from .extraction import (
    ImplicitSlimParams,
    build_anchor_matrix,
    implicit_slim,
    iterate_implicit_slim,
)
from .linalg import row_orthonormalize, top_right_singular_vectors, spd_solve
from .metrics import masked_scores, mean_ndcg
from .validation import check_embedding, check_interactions

_logger = logging.getLogger(__name__)

VALIDATION_K = 100

MF_SETUPS = ("vanilla", "islim_init_reg", "islim_init", "slimlle_init")
PLREC_SETUPS = ("vanilla", "islim_init_reg", "slimlle_init")


def compute_bias(X):
    """Per-item score offset: fraction of users who interacted with the item."""
    X = check_interactions(X)
    n_users, n_items = X.shape
    if n_users == 0:
        return np.zeros(n_items)
    return X.count_nonzero(axis=0).astype(np.float64) / n_users


def _ridge_solve(K, rhs, what):
    try:
        return spd_solve(K, rhs)
    except NotPositiveDefiniteError:
        warnings.warn(
            f"{what}: normal matrix is singular, using a least-norm solve",
            RuntimeWarning,
            stacklevel=3,
        )
        solution, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        return solution


def mf_user_update(X, Q, bias, r_p):
    """Exact ridge minimizer for user embeddings with items fixed.

    Column u of the result is (Q Q^T + r_p I)^{-1} Q (x_u - bias); the L x L
    normal matrix is factored once and shared across users.
    """
    X = check_interactions(X)
    Q = check_embedding(Q, X.shape[1], name="Q")
    latent_dim = Q.shape[0]
    K = Q @ Q.T + r_p * np.eye(latent_dim)
    rhs = (X @ Q.T).T
    if bias is not None:
        rhs = rhs - (Q @ bias)[:, None]
    return _ridge_solve(K, rhs, "user step")


def mf_item_update(X, P, V, bias, r_q, s_q):
    """Exact ridge minimizer for item embeddings with users fixed.

    With attachment strength s_q > 0, column i solves
    (P P^T + (r_q + s_q) I) q_i = P (x_i - bias_i) + s_q v_i, pulling the
    item toward its refinement target v_i.
    """
    X = check_interactions(X)
    P = check_embedding(P, X.shape[0], name="P")
    if (s_q > 0) != (V is not None):
        raise ParameterError("attachment target V must be given iff s_q > 0")
    latent_dim = P.shape[0]
    K = P @ P.T + (r_q + s_q) * np.eye(latent_dim)
    rhs = (X.T @ P.T).T
    if bias is not None:
        rhs = rhs - np.outer(P.sum(axis=1), bias)
    if s_q > 0:
        V = check_embedding(V, X.shape[1], name="V")
        rhs = rhs + s_q * V
    return _ridge_solve(K, rhs, "item step")


def item_norm_vector(X, norm_exponent):
    """Column normalizers count_i ** n used by the projected model; empty
    columns normalize by 1 (they contribute nothing either way)."""
    counts = item_popularity(X).astype(np.float64)
    norm = np.ones_like(counts)
    nz = counts > 0
    norm[nz] = counts[nz] ** norm_exponent
    return norm


def plrec_q_update(X, W, V, norm_exponent, r_q, s_q):
    """Closed-form output embeddings for the projected linear model.

    Projects users as H = X N^{-1} W^T with N the diagonal of column
    normalizers, then solves (H^T H + (r_q + s_q) I) Q = H^T X + s_q V.
    """
    X = check_interactions(X)
    W = check_embedding(W, X.shape[1], name="W")
    if (s_q > 0) != (V is not None):
        raise ParameterError("attachment target V must be given iff s_q > 0")
    latent_dim = W.shape[0]
    norm = item_norm_vector(X, norm_exponent)
    H = X @ (W / norm[None, :]).T
    K = H.T @ H + (r_q + s_q) * np.eye(latent_dim)
    rhs = (X.T @ H).T
    if s_q > 0:
        V = check_embedding(V, X.shape[1], name="V")
        rhs = rhs + s_q * V
    return _ridge_solve(K, rhs, "projected item step")


def mf_objective(X, P, Q, r_p, r_q, bias=None):
    """Reconstruction-plus-ridge loss, computed without densifying X.

    ||X - P^T Q - 1 b^T||_F^2 + r_p ||P||_F^2 + r_q ||Q||_F^2, expanded so
    only sparse products and L x L Grams appear.
    """
    X = check_interactions(X)
    cross = float(((X @ Q.T) * P.T).sum())
    frob = float(((P @ P.T) * (Q @ Q.T)).sum())
    total = X.nnz - 2.0 * cross + frob
    if bias is not None:
        counts = X.count_nonzero(axis=0).astype(np.float64)
        total -= 2.0 * float(counts @ bias)
        total += 2.0 * float((P.sum(axis=1) @ Q) @ bias)
        total += X.shape[0] * float(bias @ bias)
    return total + r_p * float((P * P).sum()) + r_q * float((Q * Q).sum())


def fold_in_users(X_new, model):
    """Embeddings for held-out users from their partial rows."""
    return model.fold_in(X_new)


class _EarlyStopper:
    """Break-on-first-decrease tracker that keeps the best-scoring state."""

    def __init__(self):
        self.best_score = -np.inf
        self.best_state = None
        self.iterations = 0

    def update(self, score, state):
        """Record one iterate; returns False when training should stop."""
        self.iterations += 1
        if score < self.best_score:
            return False
        self.best_score = score
        self.best_state = state
        return True


class MatrixFactorization(BaseEstimator):
    """Ridge matrix factorization trained with exact alternating steps.

    Parameters mirror the loss: r_p and r_q are the user/item ridge
    strengths, s_q the attachment strength toward the refinement target,
    lam/alpha/popularity_threshold/repeat configure the refinement passes,
    and use_bias adds a per-item popularity offset to the reconstruction.
    ``fit(X, validation=(fold_in, holdout))`` enables NDCG@100 early
    stopping; without a validation pair the configured number of iterations
    runs to completion.

    Fitted attributes: ``Q_`` (latent_dim x n_items), ``P_`` (latent_dim x
    n_users, recomputed against the final items so training users re-fold
    exactly), ``bias_``, ``best_score_``, ``n_iters_``.
    """

    def __init__(self, latent_dim=64, setup="vanilla", r_p=0.1, r_q=0.1,
                 s_q=0.0, lam=100.0, alpha=1.0, popularity_threshold=0,
                 repeat=1, max_iters=20, use_bias=False, seed=0,
                 validation_k=VALIDATION_K, dense_limit=None,
                 track_objective=False):
        self.latent_dim = latent_dim
        self.setup = setup
        self.r_p = r_p
        self.r_q = r_q
        self.s_q = s_q
        self.lam = lam
        self.alpha = alpha
        self.popularity_threshold = popularity_threshold
        self.repeat = repeat
        self.max_iters = max_iters
        self.use_bias = use_bias
        self.seed = seed
        self.validation_k = validation_k
        self.dense_limit = dense_limit
        self.track_objective = track_objective

    def _scorer(self, validation, bias):
        if validation is None:
            return None
        fold_in, holdout = validation
        fold_in = check_interactions(fold_in)
        holdout = check_interactions(holdout)

        def score(q):
            emb = mf_user_update(fold_in, q, bias, self.r_p)
            raw = emb.T @ q
            if bias is not None:
                raw = raw + bias[None, :]
            return mean_ndcg(masked_scores(raw, fold_in), holdout,
                             self.validation_k)

        return score

    def fit(self, X, y=None, validation=None):
        if self.setup not in MF_SETUPS:
            raise ParameterError(f"unknown setup {self.setup!r}")
        X = check_interactions(X)
        n_items = X.shape[1]
        bias = compute_bias(X) if self.use_bias else None
        scorer = self._scorer(validation, bias)
        rng = np.random.default_rng(self.seed)
        stopper = _EarlyStopper()
        self.objective_history_ = [] if self.track_objective else None

        if self.setup == "vanilla":
            q = rng.standard_normal((self.latent_dim, n_items))
            q = self._alternate(X, q, None, bias, scorer, stopper)
        elif self.setup == "islim_init_reg":
            q = rng.standard_normal((self.latent_dim, n_items))
            q = self._alternate(X, q, self._refiner(X), bias, scorer, stopper)
        elif self.setup == "islim_init":
            params = ImplicitSlimParams(
                lam=self.lam, alpha=self.alpha,
                popularity_threshold=self.popularity_threshold,
                repeat=self.repeat,
            )
            tracking = None
            if scorer is not None:
                def tracking(candidate):
                    score = scorer(candidate)
                    stopper.iterations += 1
                    if score > stopper.best_score:
                        stopper.best_score = score
                    return score
            q = iterate_implicit_slim(
                X, None, params, evaluator=tracking,
                latent_dim=self.latent_dim, seed=self.seed,
            )
        else:  # slimlle_init
            q = slim_lle_embed(X, self.lam, self.latent_dim,
                               dense_limit=self.dense_limit)
            if scorer is not None:
                stopper.update(scorer(q), q)

        # C-contiguous fitted arrays keep predictions bit-identical across
        # a save/load round trip (BLAS results depend on operand layout).
        self.Q_ = np.ascontiguousarray(q)
        self.bias_ = bias
        self.P_ = np.ascontiguousarray(mf_user_update(X, self.Q_, bias, self.r_p))
        self.n_items_ = n_items
        self.n_iters_ = stopper.iterations
        self.best_score_ = (
            stopper.best_score if np.isfinite(stopper.best_score) else None
        )
        _logger.debug(
            "fit mf/%s in %d iterations (best validation score %s)",
            self.setup, self.n_iters_, self.best_score_,
        )
        return self

    def _refiner(self, X):
        params = ImplicitSlimParams(
            lam=self.lam, alpha=self.alpha,
            popularity_threshold=self.popularity_threshold, repeat=1,
        )
        popularity = item_popularity(X)

        def refine(q):
            anchor = build_anchor_matrix(q, popularity,
                                         self.popularity_threshold)
            return implicit_slim(X, q, anchor, params)

        return refine

    def _alternate(self, X, q, refine, bias, scorer, stopper):
        """Shared alternating loop; ``refine`` is None for plain training."""
        best_q = q
        for iteration in range(self.max_iters):
            target = None
            if refine is not None:
                target = refine(q)
                if iteration == 0:
                    q = target
            p = mf_user_update(X, q, bias, self.r_p)
            v = target if (refine is not None and self.s_q > 0) else None
            s_q = self.s_q if v is not None else 0.0
            q = mf_item_update(X, p, v, bias, self.r_q, s_q)
            if self.objective_history_ is not None:
                self.objective_history_.append(
                    mf_objective(X, p, q, self.r_p, self.r_q, bias=bias)
                )
            if scorer is None:
                best_q = q
                continue
            if not stopper.update(scorer(q), q):
                return stopper.best_state
            best_q = stopper.best_state
        return best_q

    def fold_in(self, X_new):
        """User embeddings for new partial rows, same closed form as training."""
        X_new = check_interactions(X_new)
        if X_new.shape[1] != self.n_items_:
            raise ShapeError(
                f"fold-in has {X_new.shape[1]} items, model has {self.n_items_}"
            )
        return mf_user_update(X_new, self.Q_, self.bias_, self.r_p)

    def predict(self, X_new):
        """Dense score matrix for the fold-in rows (unmasked)."""
        emb = self.fold_in(X_new)
        raw = emb.T @ self.Q_
        if self.bias_ is not None:
            raw = raw + self.bias_[None, :]
        return raw


class PLRec(BaseEstimator):
    """Projected linear regression with a fixed item projector.

    The projector W maps (column-normalized) user rows to latent space; the
    output embeddings Q have a one-shot ridge closed form. ``vanilla`` uses
    the leading right singular vectors as W; ``islim_init_reg`` iterates
    refinement + row orthonormalization to build W and attaches Q to the
    refined matrix; ``slimlle_init`` takes W from the spectral two-step
    extraction.

    Fitted attributes: ``W_``, ``Q_``, ``norm_`` (training column
    normalizers, reused at fold-in), ``best_score_``, ``n_iters_``.
    """

    def __init__(self, latent_dim=64, setup="vanilla", r_q=0.1, s_q=0.0,
                 norm_exponent=0.0, lam=100.0, alpha=1.0,
                 popularity_threshold=0, max_iters=20, seed=0,
                 validation_k=VALIDATION_K, dense_limit=None):
        self.latent_dim = latent_dim
        self.setup = setup
        self.r_q = r_q
        self.s_q = s_q
        self.norm_exponent = norm_exponent
        self.lam = lam
        self.alpha = alpha
        self.popularity_threshold = popularity_threshold
        self.max_iters = max_iters
        self.seed = seed
        self.validation_k = validation_k
        self.dense_limit = dense_limit

    def _scorer(self, validation):
        if validation is None:
            return None
        fold_in, holdout = validation
        fold_in = check_interactions(fold_in)
        holdout = check_interactions(holdout)

        def score(w, q, norm):
            raw = (fold_in @ (w / norm[None, :]).T) @ q
            return mean_ndcg(masked_scores(raw, fold_in), holdout,
                             self.validation_k)

        return score

    def fit(self, X, y=None, validation=None):
        if self.setup not in PLREC_SETUPS:
            raise ParameterError(
                f"unknown setup {self.setup!r} (supported: {PLREC_SETUPS})"
            )
        X = check_interactions(X)
        norm = item_norm_vector(X, self.norm_exponent)
        scorer = self._scorer(validation)
        stopper = _EarlyStopper()

        if self.setup == "vanilla":
            w = top_right_singular_vectors(X, self.latent_dim,
                                           dense_limit=self.dense_limit)
            q = plrec_q_update(X, w, None, self.norm_exponent, self.r_q, 0.0)
            if scorer is not None:
                stopper.update(scorer(w, q, norm), (w, q))
        elif self.setup == "slimlle_init":
            w = slim_lle_embed(X, self.lam, self.latent_dim,
                               dense_limit=self.dense_limit)
            q = plrec_q_update(X, w, None, self.norm_exponent, self.r_q, 0.0)
            if scorer is not None:
                stopper.update(scorer(w, q, norm), (w, q))
        else:  # islim_init_reg
            params = ImplicitSlimParams(
                lam=self.lam, alpha=self.alpha,
                popularity_threshold=self.popularity_threshold, repeat=1,
            )
            popularity = item_popularity(X)
            v = np.random.default_rng(self.seed).standard_normal(
                (self.latent_dim, X.shape[1])
            )
            w, q = None, None
            for _ in range(self.max_iters):
                anchor = build_anchor_matrix(v, popularity,
                                             self.popularity_threshold)
                v = implicit_slim(X, v, anchor, params)
                v = row_orthonormalize(v)
                w = v
                target = v if self.s_q > 0 else None
                s_q = self.s_q if target is not None else 0.0
                q = plrec_q_update(X, w, target, self.norm_exponent,
                                   self.r_q, s_q)
                if scorer is None:
                    continue
                if not stopper.update(scorer(w, q, norm), (w, q)):
                    break
            if stopper.best_state is not None:
                w, q = stopper.best_state

        self.W_ = np.ascontiguousarray(w)
        self.Q_ = np.ascontiguousarray(q)
        self.norm_ = norm
        self.n_items_ = X.shape[1]
        self.n_iters_ = stopper.iterations
        self.best_score_ = (
            stopper.best_score if np.isfinite(stopper.best_score) else None
        )
        return self

    def fold_in(self, X_new):
        """Project new partial rows with the training-time normalizers."""
        X_new = check_interactions(X_new)
        if X_new.shape[1] != self.n_items_:
            raise ShapeError(
                f"fold-in has {X_new.shape[1]} items, model has {self.n_items_}"
            )
        return (X_new @ (self.W_ / self.norm_[None, :]).T).T

    def predict(self, X_new):
        """Dense score matrix for the fold-in rows (unmasked)."""
        return self.fold_in(X_new).T @ self.Q_
