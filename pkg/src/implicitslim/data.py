"""Interaction-log ingestion, activity filtering, and user-disjoint splits.

The binary feedback matrix is represented as a ``scipy.sparse.csr_array``
with float64 ones; users are rows, items are columns. Evaluation users are
disjoint from training users, and each evaluation user's row is divided into
a fold-in part (model input) and a holdout part (ranking ground truth).
"""

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import EmptyDatasetError, ParameterError, ParseError, SplitError
from .validation import check_interactions

_logger = logging.getLogger(__name__)


@dataclass
class IdMap:
    """Bijections between external string ids and dense matrix indices."""

    user_ids: dict = field(default_factory=dict)
    item_ids: dict = field(default_factory=dict)

    @property
    def n_users(self):
        return len(self.user_ids)

    @property
    def n_items(self):
        return len(self.item_ids)

    def user_list(self):
        """External user ids ordered by index."""
        out = [None] * len(self.user_ids)
        for key, idx in self.user_ids.items():
            out[idx] = key
        return out

    def item_list(self):
        out = [None] * len(self.item_ids)
        for key, idx in self.item_ids.items():
            out[idx] = key
        return out


@dataclass
class DatasetSplit:
    """Train matrix plus per-split (fold-in, holdout) pairs of disjoint users.

    All five matrices share the item index space. ``*_users`` hold the
    original row indices each group was drawn from, ascending.
    """

    train: sp.csr_array
    valid_fold_in: sp.csr_array
    valid_holdout: sp.csr_array
    test_fold_in: sp.csr_array
    test_holdout: sp.csr_array
    seed: int
    train_users: np.ndarray
    valid_users: np.ndarray
    test_users: np.ndarray


def load_interactions(path, fmt="csv-triples", rating_threshold=None,
                      has_header=False):
    """Read a UTF-8 CSV of ``user,item[,rating]`` rows into a binary matrix.

    Indices are assigned in first-seen file order for every parsed row;
    with ``csv-triples`` an entry is kept only when rating >= threshold.
    Duplicate pairs collapse to one entry.

    Returns ``(X, id_map)`` where X is a binary ``csr_array``.
    """
    if fmt not in ("csv-triples", "csv-pairs"):
        raise ParameterError(f"unknown format {fmt!r}")
    if fmt == "csv-triples" and rating_threshold is None:
        raise ParameterError(
            "rating_threshold is required when the file carries ratings"
        )

    id_map = IdMap()
    rows, cols = [], []
    expected = 3 if fmt == "csv-triples" else 2

    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        for line_no, record in enumerate(reader, start=1):
            if line_no == 1 and has_header:
                continue
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            if len(record) != expected:
                raise ParseError(
                    f"expected {expected} columns, got {len(record)}",
                    line_number=line_no,
                )
            user_key, item_key = record[0].strip(), record[1].strip()
            if not user_key or not item_key:
                raise ParseError("empty user or item field", line_number=line_no)

            u = id_map.user_ids.setdefault(user_key, len(id_map.user_ids))
            i = id_map.item_ids.setdefault(item_key, len(id_map.item_ids))

            if fmt == "csv-triples":
                try:
                    rating = float(record[2])
                except ValueError:
                    raise ParseError(
                        f"unparseable rating {record[2]!r}", line_number=line_no
                    ) from None
                if rating < rating_threshold:
                    continue
            rows.append(u)
            cols.append(i)

    if not rows:
        raise EmptyDatasetError(f"no interactions survived loading {path}")

    X = sp.csr_array(
        (np.ones(len(rows)), (rows, cols)),
        shape=(id_map.n_users, id_map.n_items),
    )
    return check_interactions(X), id_map


def filter_activity(X, min_user=0, min_item=0):
    """Drop users/items below the activity thresholds until a fixpoint.

    Returns ``(X_filtered, kept_users, kept_items)`` where the index arrays
    map the densely reindexed rows/columns back to the input's indices.
    """
    if min_user < 0 or min_item < 0:
        raise ParameterError("activity thresholds must be >= 0")
    X = check_interactions(X)
    kept_users = np.arange(X.shape[0])
    kept_items = np.arange(X.shape[1])

    while True:
        user_deg = X.count_nonzero(axis=1)
        item_deg = X.count_nonzero(axis=0)
        user_ok = user_deg >= min_user
        item_ok = item_deg >= min_item
        if user_ok.all() and item_ok.all():
            break
        if not user_ok.any() or not item_ok.any():
            raise EmptyDatasetError(
                "activity filtering removed every user or item"
            )
        X = X[np.flatnonzero(user_ok)][:, np.flatnonzero(item_ok)]
        kept_users = kept_users[user_ok]
        kept_items = kept_items[item_ok]

    if X.nnz == 0 and (min_user > 0 or min_item > 0):
        raise EmptyDatasetError("activity filtering removed every interaction")
    return X, kept_users, kept_items


def item_popularity(X):
    """Per-item interaction counts (number of users who touched the item)."""
    X = check_interactions(X)
    return X.count_nonzero(axis=0).astype(np.int64)


def _user_rng(seed, user_index):
    # Per-user stream derived from (master seed, user index): deterministic
    # and independent of processing order.
    return np.random.default_rng(np.random.SeedSequence([seed, int(user_index)]))


def _fold_in_split(X, users, fold_in_frac, seed):
    """Split each user's row into fold-in/holdout; returns matrices + rejects."""
    n_items = X.shape[1]
    fold_rows, fold_cols, hold_rows, hold_cols = [], [], [], []
    kept, rejected = [], []
    for u in users:
        items = X.indices[X.indptr[u]:X.indptr[u + 1]]
        deg = len(items)
        n_fold = math.ceil(fold_in_frac * deg)
        if deg - n_fold <= 0:
            rejected.append(u)
            continue
        order = _user_rng(seed, u).permutation(deg)
        row = len(kept)
        kept.append(u)
        fold_items = items[order[:n_fold]]
        hold_items = items[order[n_fold:]]
        fold_rows.extend([row] * len(fold_items))
        fold_cols.extend(fold_items)
        hold_rows.extend([row] * len(hold_items))
        hold_cols.extend(hold_items)

    shape = (len(kept), n_items)
    fold = sp.csr_array((np.ones(len(fold_rows)), (fold_rows, fold_cols)), shape=shape)
    hold = sp.csr_array((np.ones(len(hold_rows)), (hold_rows, hold_cols)), shape=shape)
    fold.sort_indices()
    hold.sort_indices()
    return fold, hold, np.asarray(kept, dtype=np.int64), rejected


def split_strong(X, valid_frac=0.1, test_frac=0.1, fold_in_frac=0.8, seed=0):
    """Partition users into train/valid/test and split evaluation rows.

    A seeded shuffle assigns users to groups; each evaluation user's row is
    split by a per-user seeded shuffle, ceil(fold_in_frac * degree) entries
    to fold-in and the rest to holdout. Users whose holdout would be empty
    are returned to train (logged) rather than dropped.
    """
    if not (valid_frac > 0 and test_frac > 0 and valid_frac + test_frac < 1):
        raise ParameterError(
            "need 0 < valid_frac, 0 < test_frac, valid_frac + test_frac < 1"
        )
    if not (0 < fold_in_frac < 1):
        raise ParameterError("fold_in_frac must lie strictly between 0 and 1")

    X = check_interactions(X)
    n_users = X.shape[0]
    n_valid = int(n_users * valid_frac)
    n_test = int(n_users * test_frac)
    if n_valid < 1 or n_test < 1 or n_users - n_valid - n_test < 1:
        raise SplitError(
            f"{n_users} users cannot populate train/valid/test at these fractions"
        )

    perm = np.random.default_rng(seed).permutation(n_users)
    valid_users = np.sort(perm[:n_valid])
    test_users = np.sort(perm[n_valid:n_valid + n_test])
    train_users = perm[n_valid + n_test:]

    valid_fold, valid_hold, valid_kept, valid_rejects = _fold_in_split(
        X, valid_users, fold_in_frac, seed
    )
    test_fold, test_hold, test_kept, test_rejects = _fold_in_split(
        X, test_users, fold_in_frac, seed
    )
    rejects = valid_rejects + test_rejects
    if rejects:
        _logger.info(
            "moved %d users with empty holdout back to train", len(rejects)
        )
    if len(valid_kept) == 0 or len(test_kept) == 0:
        raise SplitError("no evaluation users left after holdout filtering")

    train_users = np.sort(np.concatenate([train_users, np.asarray(rejects, dtype=np.int64)]))
    train = X[train_users]

    return DatasetSplit(
        train=train,
        valid_fold_in=valid_fold,
        valid_holdout=valid_hold,
        test_fold_in=test_fold,
        test_holdout=test_hold,
        seed=seed,
        train_users=train_users.astype(np.int64),
        valid_users=valid_kept,
        test_users=test_kept,
    )
