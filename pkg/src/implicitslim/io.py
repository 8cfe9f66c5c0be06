"""On-disk formats: sparse feedback matrices, dense embeddings, splits,
models, and reports.

Both binary formats are little-endian and round-trip bit-exactly:

* sparse feedback (``.isxf``): magic ``ISXF``, u32 version (1), u64
  n_users / n_items / nnz, then nnz (u32 user, u32 item) pairs sorted by
  (user, item);
* dense embedding (``.islm``): magic ``ISLM``, u32 version (1), u64 rows /
  cols, then row-major float64 values.
"""

import json
import struct
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .data import DatasetSplit, IdMap
from .errors import ParseError
from .validation import check_interactions

SPARSE_MAGIC = b"ISXF"
EMBEDDING_MAGIC = b"ISLM"
FORMAT_VERSION = 1

_SPARSE_HEADER = struct.Struct("<4sIQQQ")
_EMBEDDING_HEADER = struct.Struct("<4sIQQ")


def write_sparse_matrix(path, X):
    X = check_interactions(X)
    rows, cols = X.nonzero()
    pairs = np.empty((X.nnz, 2), dtype="<u4")
    pairs[:, 0] = rows
    pairs[:, 1] = cols
    with open(path, "wb") as handle:
        handle.write(_SPARSE_HEADER.pack(
            SPARSE_MAGIC, FORMAT_VERSION, X.shape[0], X.shape[1], X.nnz
        ))
        handle.write(pairs.tobytes())


def read_sparse_matrix(path):
    with open(path, "rb") as handle:
        header = handle.read(_SPARSE_HEADER.size)
        if len(header) != _SPARSE_HEADER.size:
            raise ParseError(f"{path}: truncated header")
        magic, version, n_users, n_items, nnz = _SPARSE_HEADER.unpack(header)
        if magic != SPARSE_MAGIC:
            raise ParseError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise ParseError(f"{path}: unsupported version {version}")
        payload = handle.read(nnz * 8)
    if len(payload) != nnz * 8:
        raise ParseError(f"{path}: truncated payload")
    pairs = np.frombuffer(payload, dtype="<u4").reshape(nnz, 2)
    if nnz and (pairs[:, 0].max() >= n_users or pairs[:, 1].max() >= n_items):
        raise ParseError(f"{path}: entry index out of range")
    X = sp.csr_array(
        (np.ones(nnz), (pairs[:, 0], pairs[:, 1])),
        shape=(int(n_users), int(n_items)),
    )
    return check_interactions(X)


def write_embedding(path, values):
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim != 2:
        raise ParseError(f"embedding must be 2-D, got shape {values.shape}")
    with open(path, "wb") as handle:
        handle.write(_EMBEDDING_HEADER.pack(
            EMBEDDING_MAGIC, FORMAT_VERSION, values.shape[0], values.shape[1]
        ))
        handle.write(values.tobytes())


def read_embedding(path):
    with open(path, "rb") as handle:
        header = handle.read(_EMBEDDING_HEADER.size)
        if len(header) != _EMBEDDING_HEADER.size:
            raise ParseError(f"{path}: truncated header")
        magic, version, rows, cols = _EMBEDDING_HEADER.unpack(header)
        if magic != EMBEDDING_MAGIC:
            raise ParseError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise ParseError(f"{path}: unsupported version {version}")
        payload = handle.read(rows * cols * 8)
    if len(payload) != rows * cols * 8:
        raise ParseError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype="<f8").reshape(int(rows), int(cols)).copy()


def write_id_map(path, id_map):
    doc = {"users": id_map.user_list(), "items": id_map.item_list()}
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def read_id_map(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return IdMap(
        user_ids={key: idx for idx, key in enumerate(doc["users"])},
        item_ids={key: idx for idx, key in enumerate(doc["items"])},
    )


_SPLIT_PARTS = (
    "train", "valid_fold_in", "valid_holdout", "test_fold_in", "test_holdout"
)


def write_split(directory, split, fractions=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for part in _SPLIT_PARTS:
        write_sparse_matrix(directory / f"{part}.isxf", getattr(split, part))
    meta = {
        "seed": int(split.seed),
        "n_items": int(split.train.shape[1]),
        "train_users": [int(u) for u in split.train_users],
        "valid_users": [int(u) for u in split.valid_users],
        "test_users": [int(u) for u in split.test_users],
        "fractions": dict(fractions or {}),
    }
    (directory / "split.json").write_text(
        json.dumps(meta, sort_keys=True), encoding="utf-8"
    )


def read_split(directory):
    directory = Path(directory)
    meta = json.loads((directory / "split.json").read_text(encoding="utf-8"))
    matrices = {
        part: read_sparse_matrix(directory / f"{part}.isxf")
        for part in _SPLIT_PARTS
    }
    return DatasetSplit(
        seed=meta["seed"],
        train_users=np.asarray(meta["train_users"], dtype=np.int64),
        valid_users=np.asarray(meta["valid_users"], dtype=np.int64),
        test_users=np.asarray(meta["test_users"], dtype=np.int64),
        **matrices,
    )


def _write_keyvalues(path, mapping):
    lines = [f"{key}={mapping[key]}" for key in sorted(mapping)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_keyvalues(path):
    out = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{path}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def save_model(directory, model):
    """Persist a fitted recommender: metadata key-value file + embeddings."""
    from .models import MatrixFactorization, PLRec

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    params = model.get_params()
    meta = {"params." + key: value for key, value in params.items()
            if value is not None}
    if isinstance(model, MatrixFactorization):
        meta["kind"] = "mf"
        write_embedding(directory / "items.islm", model.Q_)
        if model.P_ is not None:
            write_embedding(directory / "users.islm", model.P_)
        if model.bias_ is not None:
            write_embedding(directory / "bias.islm", model.bias_[None, :])
    elif isinstance(model, PLRec):
        meta["kind"] = "plrec"
        write_embedding(directory / "items.islm", model.Q_)
        write_embedding(directory / "projector.islm", model.W_)
        write_embedding(directory / "norm.islm", model.norm_[None, :])
    else:
        raise ParseError(f"cannot save model of type {type(model).__name__}")
    _write_keyvalues(directory / "metadata.txt", meta)


def _coerce(value):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    if value in ("True", "False"):
        return value == "True"
    return value


def load_model(directory):
    from .models import MatrixFactorization, PLRec

    directory = Path(directory)
    meta = _read_keyvalues(directory / "metadata.txt")
    kind = meta.pop("kind", None)
    params = {
        key[len("params."):]: _coerce(value)
        for key, value in meta.items() if key.startswith("params.")
    }
    if kind == "mf":
        model = MatrixFactorization(**params)
        model.Q_ = read_embedding(directory / "items.islm")
        users = directory / "users.islm"
        model.P_ = read_embedding(users) if users.exists() else None
        bias = directory / "bias.islm"
        model.bias_ = read_embedding(bias)[0] if bias.exists() else None
    elif kind == "plrec":
        model = PLRec(**params)
        model.Q_ = read_embedding(directory / "items.islm")
        model.W_ = read_embedding(directory / "projector.islm")
        model.norm_ = read_embedding(directory / "norm.islm")[0]
    else:
        raise ParseError(f"{directory}: unknown or missing model kind {kind!r}")
    model.n_items_ = model.Q_.shape[1]
    model.n_iters_ = 0
    model.best_score_ = None
    return model


def write_report(path, report):
    Path(path).write_text(
        json.dumps(report.to_dict() if hasattr(report, "to_dict") else report,
                   sort_keys=True, indent=2),
        encoding="utf-8",
    )
