"""Closed-form SLIM-style embedding extraction and recommenders for
implicit feedback.

The fast extraction path refines embeddings against an implicit item-item
ridge model without ever materializing the item-item matrix; the explicit
dense route exists alongside it as the verification oracle. Downstream
matrix-factorization and projected-regression recommenders consume the
embeddings for initialization and regularization, and a full
user-disjoint ranking-evaluation harness closes the loop.
"""

from .closed_form import (
    ease_weights,
    explicit_implicit_slim,
    gram,
    laplacian_from_b,
    lle_second_step,
    slim_lle_embed,
    slim_lle_weights,
)
from .data import (
    DatasetSplit,
    IdMap,
    filter_activity,
    item_popularity,
    load_interactions,
    split_strong,
)
from .extraction import (
    ImplicitSlimEmbedding,
    ImplicitSlimParams,
    SlimLleEmbedding,
    build_anchor_matrix,
    implicit_slim,
    inverse_gram_diag_approx,
    iterate_implicit_slim,
)
from .metrics import (
    EvalReport,
    evaluate,
    ndcg_at_k,
    rank_items,
    recall_at_k,
    score_users,
)
from .models import (
    MatrixFactorization,
    PLRec,
    compute_bias,
    fold_in_users,
    mf_item_update,
    mf_objective,
    mf_user_update,
    plrec_q_update,
)
from .synth import SynthSpec, generate

__all__ = [
    "DatasetSplit",
    "EvalReport",
    "IdMap",
    "ImplicitSlimEmbedding",
    "ImplicitSlimParams",
    "MatrixFactorization",
    "PLRec",
    "SlimLleEmbedding",
    "SynthSpec",
    "build_anchor_matrix",
    "compute_bias",
    "ease_weights",
    "evaluate",
    "explicit_implicit_slim",
    "filter_activity",
    "fold_in_users",
    "generate",
    "gram",
    "implicit_slim",
    "inverse_gram_diag_approx",
    "item_popularity",
    "iterate_implicit_slim",
    "laplacian_from_b",
    "lle_second_step",
    "load_interactions",
    "mf_item_update",
    "mf_objective",
    "mf_user_update",
    "ndcg_at_k",
    "plrec_q_update",
    "rank_items",
    "recall_at_k",
    "score_users",
    "slim_lle_embed",
    "slim_lle_weights",
    "split_strong",
]

__version__ = "0.1.0"
