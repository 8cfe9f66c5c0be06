"""Seeded synthetic implicit feedback with planted item-item structure.

Items cluster around latent centers so that item-item weight models carry
real signal, and a power-law popularity offset makes popularity-based
anchor masking meaningful. Interaction probabilities go through a logistic
squashing whose global offset is calibrated by bisection to hit the target
density.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NumericError, ParameterError
from .validation import check_interactions

_USER_BLOCK = 512

# Spread of item latents around their cluster center; small values give
# tight clusters whose members share most of their audience.
_CLUSTER_NOISE = 0.3


class GenerationError(NumericError):
    """Density calibration could not reach the requested target."""


@dataclass
class SynthSpec:
    """Shape and distribution parameters of one synthetic dataset."""

    n_users: int = 2000
    n_items: int = 500
    latent_dim_true: int = 16
    n_clusters: int = 8
    density_target: float = 0.05
    popularity_skew: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.density_target < 1.0):
            raise ParameterError("density_target must lie in (0, 1)")
        if self.n_clusters > self.n_items:
            raise ParameterError("n_clusters cannot exceed n_items")
        if min(self.n_users, self.n_items, self.latent_dim_true,
               self.n_clusters) < 1:
            raise ParameterError("all size parameters must be >= 1")


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def generate(spec):
    """Sample a binary feedback matrix; returns ``(X, item_cluster_labels)``.

    Deterministic for a fixed spec. Raises GenerationError when the realized
    density leaves the +-20% band around the target.
    """
    rng = np.random.default_rng(spec.seed)
    d = spec.latent_dim_true

    centers = rng.standard_normal((spec.n_clusters, d))
    labels = rng.integers(0, spec.n_clusters, size=spec.n_items)
    item_vecs = centers[labels] + _CLUSTER_NOISE * rng.standard_normal((spec.n_items, d))
    user_vecs = rng.standard_normal((spec.n_users, d))

    # Popularity offsets: power law over a random item ordering, centered.
    ranks = rng.permutation(spec.n_items) + 1.0
    pop_offset = -spec.popularity_skew * np.log(ranks)
    pop_offset -= pop_offset.mean()

    scale = 2.0 / np.sqrt(d)
    logits = scale * (user_vecs @ item_vecs.T) + pop_offset[None, :]

    lo, hi = -30.0, 30.0
    target = spec.density_target
    if _sigmoid(logits + lo).mean() > target or _sigmoid(logits + hi).mean() < target:
        raise GenerationError("target density unreachable for these latents")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _sigmoid(logits + mid).mean() < target:
            lo = mid
        else:
            hi = mid
    offset = 0.5 * (lo + hi)

    rows, cols = [], []
    for start in range(0, spec.n_users, _USER_BLOCK):
        stop = min(start + _USER_BLOCK, spec.n_users)
        probs = _sigmoid(logits[start:stop] + offset)
        hit_rows, hit_cols = np.nonzero(rng.random(probs.shape) < probs)
        rows.append(hit_rows + start)
        cols.append(hit_cols)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)

    realized = len(rows) / (spec.n_users * spec.n_items)
    if not (0.8 * target <= realized <= 1.2 * target):
        raise GenerationError(
            f"realized density {realized:.4f} outside 20% of {target:.4f}"
        )

    X = sp.csr_array(
        (np.ones(len(rows)), (rows, cols)),
        shape=(spec.n_users, spec.n_items),
    )
    return check_interactions(X), labels
