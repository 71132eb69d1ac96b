"""Random forest: bagged CART trees with per-split feature subsampling."""

from __future__ import annotations

from functools import partial

import numpy as np

from .._rng import derive_seed, parallel_map
from ..errors import DataError
from .model import Model, predict_nodes
from .tree import fit_tree, sqrt_features


def _grow(seed, X, y, min_samples_leaf, max_depth, max_features, bootstrap, criterion):
    rng = np.random.default_rng(seed)
    n = X.shape[0]
    rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
    tree = fit_tree(
        X[rows],
        y[rows],
        min_samples_leaf,
        max_depth,
        criterion=criterion,
        max_features=max_features,
        rng=rng if max_features is not None else None,
    )
    return tree.parameters


def fit_forest(
    X,
    y,
    n_trees: int = 100,
    min_samples_leaf: int = 1,
    seed: int = 0,
    *,
    max_depth: int | None = None,
    max_features: int | str | None = "sqrt",
    bootstrap: bool = True,
    criterion: str = "mse",
    jobs: int = 1,
) -> Model:
    """Fit ``n_trees`` trees; tree ``t`` draws from ``derive_seed(seed, t)``.

    ``max_features="sqrt"`` uses ``ceil(sqrt(d))`` candidate features per split;
    ``None`` considers every feature. Output does not depend on ``jobs``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=float)
    n_trees = int(n_trees)
    if n_trees < 1:
        raise DataError("n_trees must be a positive integer")
    if X.shape[0] < min_samples_leaf:
        raise DataError(f"min_samples_leaf={min_samples_leaf} exceeds the {X.shape[0]} available rows")
    d = X.shape[1]
    m = sqrt_features(d) if max_features == "sqrt" else max_features
    seeds = [derive_seed(seed, t) for t in range(n_trees)]
    grow = partial(
        _grow,
        X=X,
        y=y,
        min_samples_leaf=min_samples_leaf,
        max_depth=max_depth,
        max_features=m,
        bootstrap=bootstrap,
        criterion=criterion,
    )
    trees = parallel_map(grow, seeds, jobs, threads=True)
    hyper = {
        "n_trees": n_trees,
        "min_samples_leaf": int(min_samples_leaf),
        "max_depth": max_depth,
        "max_features": max_features,
        "bootstrap": bool(bootstrap),
        "criterion": criterion,
        "seed": int(seed),
    }
    return Model("forest", hyper, {"trees": trees, "tree_seeds": seeds}, d)


def tree_predictions(model: Model, X) -> np.ndarray:
    """``(n_trees, n_rows)`` matrix of per-tree predictions."""
    X = np.asarray(X, dtype=float)
    return np.vstack([predict_nodes(t, X) for t in model.parameters["trees"]])
