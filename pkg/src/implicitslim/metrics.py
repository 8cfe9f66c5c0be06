"""Top-k ranking metrics and the user-disjoint evaluation loop.

Evaluation users never appear in training: their embeddings come from the
fold-in part of their rows, the holdout part is the ranking ground truth,
and fold-in items are masked out of the ranking. Users with an empty
holdout are excluded from the averages (and counted), not scored as zero.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyDatasetError, ParameterError, ShapeError
from .validation import check_aligned_users, check_interactions


@dataclass
class EvalReport:
    """Aggregated metric means plus optional per-user score arrays."""

    metrics: dict
    n_users: int
    n_excluded: int
    per_user: Optional[dict] = None
    config_echo: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "metrics": {k: float(v) for k, v in self.metrics.items()},
            "n_users": int(self.n_users),
            "n_excluded": int(self.n_excluded),
            "config_echo": self.config_echo,
        }
        if self.per_user is not None:
            out["per_user"] = {
                k: [None if np.isnan(v) else float(v) for v in arr]
                for k, arr in self.per_user.items()
            }
        return out


def masked_scores(raw, fold_in):
    """Copy of the score matrix with every fold-in item forced to -inf."""
    fold_in = check_interactions(fold_in)
    if raw.shape != fold_in.shape:
        raise ShapeError(
            f"score shape {raw.shape} != fold-in shape {fold_in.shape}"
        )
    scores = np.array(raw, dtype=np.float64)
    rows, cols = fold_in.nonzero()
    scores[rows, cols] = -np.inf
    return scores


def rank_items(scores, k=None):
    """Item indices per user, best score first; ties broken by item index."""
    ranked = np.argsort(-scores, axis=1, kind="stable")
    if k is not None:
        ranked = ranked[:, :k]
    return ranked


def _holdout_rows(holdout):
    holdout = check_interactions(holdout)
    return [
        holdout.indices[holdout.indptr[u]:holdout.indptr[u + 1]]
        for u in range(holdout.shape[0])
    ]


def recall_at_k(ranked, holdout, k):
    """Per-user |top-k hits| / min(k, holdout size); NaN for empty holdouts."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    rows = _holdout_rows(holdout)
    out = np.full(len(rows), np.nan)
    for u, items in enumerate(rows):
        if len(items) == 0:
            continue
        hits = np.isin(ranked[u, :k], items)
        out[u] = hits.sum() / min(k, len(items))
    if np.all(np.isnan(out)):
        raise EmptyDatasetError("no user has holdout interactions")
    return out


def ndcg_at_k(ranked, holdout, k):
    """Truncated, ideal-normalized discounted cumulative gain per user.

    DCG@k discounts a hit at rank r by 1/log2(r+1); the normalizer is the
    DCG of the ideal ordering truncated at min(k, holdout size).
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    rows = _holdout_rows(holdout)
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    ideal = np.cumsum(discounts)
    out = np.full(len(rows), np.nan)
    for u, items in enumerate(rows):
        if len(items) == 0:
            continue
        hits = np.isin(ranked[u, :k], items)  # may be shorter than k
        dcg = float(discounts[: len(hits)][hits].sum())
        out[u] = dcg / ideal[min(k, len(items)) - 1]
    if np.all(np.isnan(out)):
        raise EmptyDatasetError("no user has holdout interactions")
    return out


def ranking_metrics(scores, holdout, ks):
    """Both metrics at every k over a masked score matrix.

    Returns ``(means, per_user)`` where keys look like ``"recall@20"``.
    """
    ranked = rank_items(scores, k=max(ks))
    per_user, means = {}, {}
    for k in ks:
        for name, fn in (("recall", recall_at_k), ("ndcg", ndcg_at_k)):
            values = fn(ranked, holdout, k)
            per_user[f"{name}@{k}"] = values
            means[f"{name}@{k}"] = float(np.nanmean(values))
    return means, per_user


def mean_ndcg(scores, holdout, k):
    """Shortcut used for validation-based early stopping."""
    ranked = rank_items(scores, k=k)
    return float(np.nanmean(ndcg_at_k(ranked, holdout, k)))


def score_users(model, fold_in):
    """Model scores for fold-in rows with the fold-in items masked out."""
    fold_in = check_interactions(fold_in)
    raw = model.predict(fold_in)
    return masked_scores(raw, fold_in)


def evaluate(model, fold_in, holdout, ks=(20, 50, 100), include_per_user=False,
             config_echo=None):
    """Full protocol: fold-in embeddings, masked scoring, metrics at each k."""
    fold_in = check_interactions(fold_in)
    holdout = check_interactions(holdout)
    check_aligned_users(fold_in, holdout)
    scores = score_users(model, fold_in)
    means, per_user = ranking_metrics(scores, holdout, list(ks))
    any_key = next(iter(per_user))
    excluded = int(np.isnan(per_user[any_key]).sum())
    return EvalReport(
        metrics=means,
        n_users=fold_in.shape[0] - excluded,
        n_excluded=excluded,
        per_user=per_user if include_per_user else None,
        config_echo=dict(config_echo or {}),
    )
