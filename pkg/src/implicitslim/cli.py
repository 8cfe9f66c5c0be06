"""Command-line front end tying ingestion, extraction, training, and
evaluation together.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
All commands are deterministic given their config and seed; report
timestamps live only inside ``config_echo``.
"""

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import io as formats
from .closed_form import (
    ease_weights,
    explicit_implicit_slim,
    slim_lle_embed,
    slim_lle_weights,
)
from .config import RunConfig, parse_config_file
from .data import IdMap, filter_activity, load_interactions, split_strong
from .errors import ConfigError, DataError, NumericError
from .extraction import ImplicitSlimParams, implicit_slim, iterate_implicit_slim
from .metrics import evaluate
from .models import MatrixFactorization, PLRec
from .sweep import grid_search
from .synth import SynthSpec, generate
from .validation import check_interactions

MF_KEYS = ("latent_dim", "setup", "r_p", "r_q", "s_q", "lambda", "alpha",
           "popularity_threshold", "repeat", "max_iters", "use_bias", "seed")
PLREC_KEYS = ("latent_dim", "setup", "r_q", "s_q", "norm_exponent", "lambda",
              "alpha", "popularity_threshold", "max_iters", "seed")
ALL_MODEL_KEYS = MF_KEYS + ("norm_exponent",)

_HYPER_FLAGS = {
    "latent_dim": "--latent-dim",
    "lambda": "--lambda",
    "alpha": "--alpha",
    "r_p": "--r-p",
    "r_q": "--r-q",
    "s_q": "--s-q",
    "norm_exponent": "--norm-exponent",
    "popularity_threshold": "--popularity-threshold",
    "repeat": "--repeat",
    "max_iters": "--max-iters",
    "seed": "--seed",
    "setup": "--setup",
    "ks": "--ks",
}


def _timestamp():
    return datetime.now(timezone.utc).isoformat()


def _add_hyper_flags(parser, keys):
    parser.add_argument("--config", help="key=value configuration file")
    for key in keys:
        if key == "use_bias":
            parser.add_argument("--use-bias", dest="use_bias",
                                action=argparse.BooleanOptionalAction,
                                default=None)
        else:
            parser.add_argument(_HYPER_FLAGS[key], dest=key, default=None)


def _run_config(args, keys, flag_keys=None):
    file_values = parse_config_file(args.config) if args.config else {}
    unknown = set(file_values) - set(keys)
    if unknown:
        raise ConfigError(
            f"config keys not accepted by this command: {sorted(unknown)}"
        )
    for key in (flag_keys or keys):
        if key not in keys and getattr(args, key, None) is not None:
            raise ConfigError(f"flag for {key!r} does not apply to this command")
    overrides = {key: getattr(args, key, None) for key in keys}
    return RunConfig(file_values, overrides)


def _model_from_values(kind, values):
    if kind == "mf":
        return MatrixFactorization(
            latent_dim=int(values.get("latent_dim", 64)),
            setup=values.get("setup", "vanilla"),
            r_p=values.get("r_p", 0.1),
            r_q=values.get("r_q", 0.1),
            s_q=values.get("s_q", 0.0),
            lam=values.get("lambda", 100.0),
            alpha=values.get("alpha", 1.0),
            popularity_threshold=int(values.get("popularity_threshold", 0)),
            repeat=int(values.get("repeat", 1)),
            max_iters=int(values.get("max_iters", 20)),
            use_bias=bool(values.get("use_bias", False)),
            seed=int(values.get("seed", 0)),
        )
    if kind == "plrec":
        return PLRec(
            latent_dim=int(values.get("latent_dim", 64)),
            setup=values.get("setup", "vanilla"),
            r_q=values.get("r_q", 0.1),
            s_q=values.get("s_q", 0.0),
            norm_exponent=values.get("norm_exponent", 0.0),
            lam=values.get("lambda", 100.0),
            alpha=values.get("alpha", 1.0),
            popularity_threshold=int(values.get("popularity_threshold", 0)),
            max_iters=int(values.get("max_iters", 20)),
            seed=int(values.get("seed", 0)),
        )
    raise ConfigError(f"unknown model kind {kind!r}")


def _scalar_values(cfg, keys):
    return {key: cfg.scalar(key) for key in keys if key in cfg}


def cmd_ingest(args):
    X, id_map = load_interactions(
        args.input,
        fmt=args.format,
        rating_threshold=args.rating_threshold,
        has_header=args.header,
    )
    if args.min_user > 0 or args.min_item > 0:
        X, kept_users, kept_items = filter_activity(
            X, min_user=args.min_user, min_item=args.min_item
        )
        users = id_map.user_list()
        items = id_map.item_list()
        id_map = IdMap(
            user_ids={users[old]: new for new, old in enumerate(kept_users)},
            item_ids={items[old]: new for new, old in enumerate(kept_items)},
        )
    formats.write_sparse_matrix(args.out, X)
    formats.write_id_map(args.out_idmap, id_map)
    print(f"ingested {X.shape[0]} users x {X.shape[1]} items, nnz={X.nnz}")
    return 0


def cmd_split(args):
    X = formats.read_sparse_matrix(args.matrix)
    split = split_strong(
        X,
        valid_frac=args.valid_frac,
        test_frac=args.test_frac,
        fold_in_frac=args.fold_in_frac,
        seed=args.seed,
    )
    formats.write_split(args.out_dir, split, fractions={
        "valid_frac": args.valid_frac,
        "test_frac": args.test_frac,
        "fold_in_frac": args.fold_in_frac,
    })
    print(
        f"split: {split.train.shape[0]} train / "
        f"{split.valid_fold_in.shape[0]} valid / "
        f"{split.test_fold_in.shape[0]} test users"
    )
    return 0


def cmd_extract(args):
    cfg = _run_config(args, ("latent_dim", "lambda", "alpha",
                             "popularity_threshold", "repeat", "seed"))
    X = formats.read_sparse_matrix(args.matrix)
    if args.entity == "user":
        X = check_interactions(X.T)
    latent_dim = int(cfg.scalar("latent_dim", 64))
    lam = cfg.scalar("lambda", 100.0)
    if args.method == "implicit-slim":
        params = ImplicitSlimParams(
            lam=lam,
            alpha=cfg.scalar("alpha", 1.0),
            popularity_threshold=int(cfg.scalar("popularity_threshold", 0)),
            repeat=int(cfg.scalar("repeat", 1)),
        )
        embedding = iterate_implicit_slim(
            X, None, params, latent_dim=latent_dim,
            seed=int(cfg.scalar("seed", 0)),
        )
    elif args.method == "slim-lle":
        embedding = slim_lle_embed(X, lam, latent_dim)
    elif args.method == "ease-weights":
        embedding = ease_weights(X, lam)
    else:  # slim-lle-weights
        embedding = slim_lle_weights(X, lam)
    formats.write_embedding(args.out, embedding)
    print(f"extracted {embedding.shape[0]} x {embedding.shape[1]} matrix")
    return 0


def cmd_train(args):
    keys = MF_KEYS if args.model == "mf" else PLREC_KEYS
    cfg = _run_config(args, keys, flag_keys=ALL_MODEL_KEYS)
    split = formats.read_split(args.split_dir)
    model = _model_from_values(args.model, _scalar_values(cfg, keys))
    model.fit(split.train,
              validation=(split.valid_fold_in, split.valid_holdout))
    formats.save_model(args.out_dir, model)
    score = "n/a" if model.best_score_ is None else f"{model.best_score_:.4f}"
    print(f"trained {args.model} ({model.setup}); "
          f"validation ndcg@{model.validation_k}={score}")
    return 0


def cmd_evaluate(args):
    ks = [int(part) for part in args.ks.split(",")]
    model = formats.load_model(args.model_dir)
    split = formats.read_split(args.split_dir)
    if args.part == "valid":
        fold_in, holdout = split.valid_fold_in, split.valid_holdout
    else:
        fold_in, holdout = split.test_fold_in, split.test_holdout
    report = evaluate(
        model, fold_in, holdout, ks=ks, include_per_user=args.per_user,
        config_echo={
            "command": "evaluate",
            "model_dir": str(args.model_dir),
            "split_dir": str(args.split_dir),
            "part": args.part,
            "ks": ks,
            "timestamp": _timestamp(),
        },
    )
    formats.write_report(args.out, report)
    for name in sorted(report.metrics):
        print(f"{name}: {report.metrics[name]:.5f}")
    return 0


def cmd_oracle_check(args):
    rng = np.random.default_rng(args.seed)
    params = ImplicitSlimParams(lam=args.lam, alpha=args.alpha)
    worst = 0.0
    for _ in range(args.instances):
        X = sp.csr_array(
            (rng.random((args.users, args.items)) < args.density).astype(float)
        )
        Q = rng.standard_normal((args.latent_dim, args.items))
        fast = implicit_slim(X, Q, Q, params)
        explicit = explicit_implicit_slim(
            X, Q, Q, args.lam, args.alpha, diag_mode="approx"
        )
        worst = max(worst, float(np.abs(fast - explicit).max()))
    print(f"max deviation: {worst:.3e} over {args.instances} instances")
    if worst > args.tol:
        raise NumericError(
            f"fast/explicit deviation {worst:.3e} exceeds tolerance {args.tol:.1e}"
        )
    return 0


def cmd_synth(args):
    spec = SynthSpec(
        n_users=args.users,
        n_items=args.items,
        latent_dim_true=args.latent_dim_true,
        n_clusters=args.clusters,
        density_target=args.density,
        popularity_skew=args.popularity_skew,
        seed=args.seed,
    )
    X, labels = generate(spec)
    formats.write_sparse_matrix(args.out, X)
    if args.labels_out:
        Path(args.labels_out).write_text(
            json.dumps({"clusters": [int(c) for c in labels]}), encoding="utf-8"
        )
    print(f"synthesized {X.shape[0]} x {X.shape[1]}, nnz={X.nnz} "
          f"(density {X.nnz / (X.shape[0] * X.shape[1]):.4f})")
    return 0


def cmd_sweep(args):
    keys = MF_KEYS if args.model == "mf" else PLREC_KEYS
    cfg = _run_config(args, keys, flag_keys=ALL_MODEL_KEYS)
    split = formats.read_split(args.split_dir)
    validation = (split.valid_fold_in, split.valid_holdout)
    ks = [int(part) for part in args.ks.split(",")]

    axes = cfg.sweep_axes()
    fixed = {key: cfg.scalar(key) for key in keys
             if key in cfg and key not in dict(axes)}
    best_model, best_params, rows = grid_search(
        lambda values: _model_from_values(args.model, values),
        axes, split.train, validation, fixed=fixed,
        threads=max(1, args.threads),
    )
    test_report = evaluate(
        best_model, split.test_fold_in, split.test_holdout, ks=ks,
        config_echo={"command": "sweep", "timestamp": _timestamp()},
    )

    report = {
        "rows": rows,
        "fixed": fixed,
        "best": {"params": best_params,
                 "valid_ndcg@100": float(best_model.best_score_)},
        "test": test_report.to_dict(),
        "config_echo": {"command": "sweep", "model": args.model,
                        "timestamp": _timestamp()},
    }
    formats.write_report(args.out, report)
    print(f"best point: {best_params} "
          f"(valid ndcg@100 = {best_model.best_score_:.4f})")
    for name in sorted(test_report.metrics):
        print(f"test {name}: {test_report.metrics[name]:.5f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="implicitslim",
        description="Closed-form embedding extraction and recommenders "
                    "for implicit feedback",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="CSV interaction log -> sparse matrix")
    p.add_argument("input")
    p.add_argument("--format", choices=("csv-pairs", "csv-triples"),
                   default="csv-triples")
    p.add_argument("--rating-threshold", type=float, default=None)
    p.add_argument("--header", action="store_true")
    p.add_argument("--min-user", type=int, default=0)
    p.add_argument("--min-item", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--out-idmap", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="strong-generalization split")
    p.add_argument("--matrix", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--valid-frac", type=float, default=0.1)
    p.add_argument("--test-frac", type=float, default=0.1)
    p.add_argument("--fold-in-frac", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("extract",
                       help="embedding extraction or dense weight export")
    p.add_argument("--matrix", required=True)
    p.add_argument("--method",
                   choices=("implicit-slim", "slim-lle", "ease-weights",
                            "slim-lle-weights"),
                   default="implicit-slim")
    p.add_argument("--entity", choices=("item", "user"), default="item")
    p.add_argument("--out", required=True)
    _add_hyper_flags(p, ("latent_dim", "lambda", "alpha",
                         "popularity_threshold", "repeat", "seed"))
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a recommender on a split")
    p.add_argument("--split-dir", required=True)
    p.add_argument("--model", choices=("mf", "plrec"), required=True)
    p.add_argument("--out-dir", required=True)
    _add_hyper_flags(p, ALL_MODEL_KEYS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="rank holdout items and report metrics")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--split-dir", required=True)
    p.add_argument("--part", choices=("valid", "test"), default="test")
    p.add_argument("--ks", default="20,50,100")
    p.add_argument("--per-user", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("oracle-check",
                       help="fast-vs-explicit equivalence at a given size")
    p.add_argument("--users", type=int, default=60)
    p.add_argument("--items", type=int, default=40)
    p.add_argument("--latent-dim", type=int, default=8, dest="latent_dim")
    p.add_argument("--density", type=float, default=0.15)
    p.add_argument("--lambda", type=float, default=5.0, dest="lam")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--users", type=int, default=2000)
    p.add_argument("--items", type=int, default=500)
    p.add_argument("--latent-dim-true", type=int, default=16)
    p.add_argument("--clusters", type=int, default=8)
    p.add_argument("--density", type=float, default=0.05)
    p.add_argument("--popularity-skew", type=float, default=1.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="grid search selected on validation NDCG@100")
    p.add_argument("--split-dir", required=True)
    p.add_argument("--model", choices=("mf", "plrec"), required=True)
    p.add_argument("--ks", default="20,50,100")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_hyper_flags(p, ALL_MODEL_KEYS)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args) or 0
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
