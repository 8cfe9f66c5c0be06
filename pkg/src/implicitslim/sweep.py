"""Deterministic grid search selected on validation NDCG@100."""

import itertools
from concurrent.futures import ThreadPoolExecutor


def grid_points(axes):
    """Cartesian product of ``(key, values)`` axes as dicts, in grid order."""
    if not axes:
        return [{}]
    keys = [key for key, _ in axes]
    return [dict(zip(keys, point))
            for point in itertools.product(*[values for _, values in axes])]


def grid_search(build_model, axes, train, validation, fixed=None, threads=1):
    """Fit one model per grid point; select the best validation score.

    ``build_model`` maps a parameter dict to an unfitted estimator whose
    ``fit(train, validation=...)`` leaves the early-stopping validation
    NDCG in ``best_score_``. Returns ``(best_model, best_params, rows)``
    where rows echo every point with its score, in grid order. The best
    point is refit so the returned model is independent of sweep threading.
    """
    fixed = dict(fixed or {})
    combos = grid_points(axes)

    def run(combo):
        values = dict(fixed)
        values.update(combo)
        model = build_model(values)
        model.fit(train, validation=validation)
        return model.best_score_

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(run, combos))
    else:
        scores = [run(combo) for combo in combos]

    best_index = max(range(len(combos)), key=lambda i: scores[i])
    best_values = dict(fixed)
    best_values.update(combos[best_index])
    best_model = build_model(best_values)
    best_model.fit(train, validation=validation)

    rows = [{"params": combos[i], "valid_score": float(scores[i])}
            for i in range(len(combos))]
    return best_model, combos[best_index], rows
