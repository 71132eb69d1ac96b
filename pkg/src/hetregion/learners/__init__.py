"""Supervised learners used for the outcome model and the region model."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .._rng import parallel_map
from ..errors import ConfigError, DataError
from ..metrics import auc, mse
from .forest import fit_forest, tree_predictions
from .linear import fit_logistic, fit_ridge, logistic_objective, ridge_system
from .model import KINDS, Model
from .tree import fit_tree, region_paths, render_rules

# Hyperparameter grids used for every tuned learner.
DEFAULT_GRIDS = {
    "logistic": {"l2_c": [10.0, 1.0, 0.1, 0.01, 0.001, 0.0001, 0.00001]},
    "ridge": {"alpha": [0.01, 0.1, 1.0, 10.0, 100.0]},
    "tree": {"min_samples_leaf": [10, 25, 100]},
    "forest": {"n_trees": [10, 25, 100], "min_samples_leaf": [10, 25, 100]},
}

DEFAULT_PARAMS = {
    "logistic": {"l2_c": 1.0},
    "ridge": {"alpha": 1.0},
    "tree": {"min_samples_leaf": 25},
    "forest": {"n_trees": 25, "min_samples_leaf": 25},
}

_ALLOWED = {
    "logistic": {"l2_c", "max_iter", "tol"},
    "ridge": {"alpha"},
    "tree": {"min_samples_leaf", "max_depth", "criterion"},
    "forest": {"n_trees", "min_samples_leaf", "max_depth", "max_features", "bootstrap", "criterion"},
}


def fit_model(kind: str, X, y, params: dict | None = None, *, seed: int = 0, jobs: int = 1) -> Model:
    """Fit a learner of ``kind`` with ``params`` merged over the defaults."""
    if kind not in KINDS:
        raise ConfigError(f"unknown learner kind {kind!r}; expected one of {KINDS}")
    p = dict(DEFAULT_PARAMS[kind])
    p.update(params or {})
    unknown = set(p) - _ALLOWED[kind]
    if unknown:
        raise ConfigError(f"unknown hyperparameter(s) for {kind}: {sorted(unknown)}")
    if kind == "logistic":
        return fit_logistic(X, y, **p)
    if kind == "ridge":
        return fit_ridge(X, y, **p)
    if kind == "tree":
        return fit_tree(X, y, **p)
    return fit_forest(X, y, seed=seed, jobs=jobs, **p)


@dataclass(frozen=True)
class LearnerConfig:
    """A learner kind, fixed hyperparameters, and an optional tuning grid.

    When ``grid`` is set and validation data is available, the grid is searched
    and the winner refit on train plus validation; otherwise ``params`` are used.
    """

    kind: str
    params: dict = field(default_factory=dict)
    grid: dict | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown learner kind {self.kind!r}; expected one of {KINDS}")
        bad = set(self.params) - _ALLOWED[self.kind]
        if self.grid:
            bad |= set(self.grid) - _ALLOWED[self.kind]
            if any(len(v) == 0 for v in self.grid.values()):
                raise ConfigError("grid candidate lists must be non-empty")
        if bad:
            raise ConfigError(f"unknown hyperparameter(s) for {self.kind}: {sorted(bad)}")

    def with_default_grid(self) -> "LearnerConfig":
        return LearnerConfig(self.kind, self.params, DEFAULT_GRIDS[self.kind])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "grid": self.grid}

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerConfig":
        return cls(d["kind"], dict(d.get("params") or {}), d.get("grid"))

    def fit(self, X, y, *, validation=None, metric="mse", seed=0, jobs=1) -> Model:
        if self.grid and validation is not None and len(validation[1]) > 0:
            model, _ = tune(self.kind, self.grid, (X, y), validation, metric,
                            fixed=self.params, seed=seed, jobs=jobs)
            return model
        return fit_model(self.kind, X, y, self.params, seed=seed, jobs=jobs)


def grid_points(grid: dict) -> list[dict]:
    """Cartesian product of the grid in listed order (first key varies slowest)."""
    if not grid:
        raise ConfigError("empty grid")
    keys = list(grid)
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


def _score_point(point, kind, fixed, train, validation, metric, seed):
    params = dict(fixed or {})
    params.update(point)
    model = fit_model(kind, train[0], train[1], params, seed=seed)
    pred = model.predict(validation[0])
    if metric == "auc":
        return auc(pred, validation[1])
    return mse(pred, validation[1])


def tune(kind, grid, train, validation, metric="mse", *, fixed=None, seed=0, jobs=1):
    """Grid search on ``validation``, then refit the winner on train + validation.

    ``train`` and ``validation`` are ``(X, y)`` pairs. ``metric`` is ``"auc"``
    (maximized) or ``"mse"`` (minimized); ties keep the first-listed point.
    Returns ``(model, table)`` where ``table`` lists every point and its score.
    """
    if metric not in ("auc", "mse"):
        raise ConfigError(f"unknown metric {metric!r}")
    if validation is None or len(validation[1]) == 0:
        raise DataError("tuning needs a non-empty validation set")
    points = grid_points(grid)
    score = partial(_score_point, kind=kind, fixed=fixed, train=train,
                    validation=validation, metric=metric, seed=seed)
    scores = parallel_map(score, points, jobs, threads=True)
    best = 0
    for i, s in enumerate(scores):
        better = s > scores[best] if metric == "auc" else s < scores[best]
        if better:
            best = i
    params = dict(fixed or {})
    params.update(points[best])
    X = np.vstack([np.asarray(train[0], dtype=float), np.asarray(validation[0], dtype=float)])
    y = np.concatenate([np.asarray(train[1], dtype=float), np.asarray(validation[1], dtype=float)])
    model = fit_model(kind, X, y, params, seed=seed)
    table = [{"params": p, metric: float(s), "selected": i == best} for i, (p, s) in enumerate(zip(points, scores))]
    return model, table


__all__ = [
    "DEFAULT_GRIDS",
    "DEFAULT_PARAMS",
    "KINDS",
    "LearnerConfig",
    "Model",
    "fit_forest",
    "fit_logistic",
    "fit_model",
    "fit_ridge",
    "fit_tree",
    "grid_points",
    "logistic_objective",
    "region_paths",
    "render_rules",
    "ridge_system",
    "tree_predictions",
    "tune",
]
