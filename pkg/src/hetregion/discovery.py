"""Alternating region/grouping search.

Starting from the whole feature space, the loop alternates between the
closed-form grouping for the current region and a region model ``h`` fit to
the grouped residuals, thresholded at its ``(1 - beta)`` quantile.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._rng import derive_seed
from .data import Dataset, SplitSpec, split_stratified
from .errors import ComputationError, ConfigError, EmptyRegionError
from .learners import LearnerConfig, Model
from .objective import (
    l_hat_from_sums,
    optimal_grouping_array,
    q_hat_from_sums,
    residuals,
)

CONVERGED = "converged"
ITERATION_LIMIT = "iteration_limit"
CYCLE_DETECTED = "cycle_detected"


@dataclass(frozen=True)
class DiscoverConfig:
    """Everything that determines a discovery run besides the data."""

    beta: float = 0.25
    outcome: LearnerConfig = field(default_factory=lambda: LearnerConfig("logistic"))
    region: LearnerConfig = field(default_factory=lambda: LearnerConfig("ridge"))
    max_iter: int = 100
    exclude_features: tuple[str, ...] = ()
    sample_split: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "exclude_features", tuple(self.exclude_features))
        if not (0 < self.beta <= 1):
            raise ConfigError(f"beta must lie in (0, 1], got {self.beta}")
        if int(self.max_iter) < 1:
            raise ConfigError("max_iter must be a positive integer")

    def replace(self, **changes) -> "DiscoverConfig":
        d = dict(self.__dict__)
        d.update(changes)
        return DiscoverConfig(**d)

    def to_dict(self) -> dict:
        return {
            "beta": float(self.beta),
            "outcome": self.outcome.to_dict(),
            "region": self.region.to_dict(),
            "max_iter": int(self.max_iter),
            "exclude_features": list(self.exclude_features),
            "sample_split": bool(self.sample_split),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscoverConfig":
        return cls(
            beta=float(d["beta"]),
            outcome=LearnerConfig.from_dict(d["outcome"]),
            region=LearnerConfig.from_dict(d["region"]),
            max_iter=int(d["max_iter"]),
            exclude_features=tuple(d.get("exclude_features", ())),
            sample_split=bool(d.get("sample_split", False)),
            seed=int(d.get("seed", 0)),
        )

    def digest(self) -> str:
        return config_hash(self.to_dict())


def config_hash(doc) -> str:
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Region:
    """``{x : h(x[cols]) >= threshold}``; ``cols`` are the dataset columns fed to ``h``."""

    model: Model
    threshold: float
    cols: tuple[int, ...]
    feature_names: tuple[str, ...]
    n_input_features: int

    def scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_input_features:
            raise ComputationError(
                f"region expects {self.n_input_features} feature columns, got {np.shape(X)}"
            )
        return self.model.predict(X[:, list(self.cols)])

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "threshold": float(self.threshold),
            "features": list(self.feature_names),
            "columns": list(self.cols),
            "n_input_features": self.n_input_features,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Region":
        return cls(Model.from_dict(d["model"]), float(d["threshold"]), tuple(d["columns"]),
                   tuple(d["features"]), int(d["n_input_features"]))


def membership(region: Region, X) -> np.ndarray:
    """Boolean membership ``h(x) >= b`` for each row of ``X``."""
    return region.scores(X) >= region.threshold


def quantile_threshold(scores, beta: float) -> float:
    """The ``ceil((1 - beta) n)``-th smallest score (1-based, at least the first).

    Every score at or above it is a member, so at least ``floor(beta n)`` rows
    are selected and ties at the threshold are all included.
    """
    s = np.sort(np.asarray(scores, dtype=float))
    n = s.size
    # the epsilon absorbs products like 0.7 * 10 = 7.000000000000001
    k = max(1, math.ceil((1.0 - beta) * n - 1e-9))
    return float(s[k - 1])


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    grouping: np.ndarray
    membership: np.ndarray
    q_hat: float
    l_hat: float
    region: Region

    @property
    def n_members(self) -> int:
        return int(self.membership.sum())


@dataclass(frozen=True)
class DiscoveryResult:
    outcome_model: Model
    region: Region
    grouping: dict
    history: tuple[IterationRecord, ...]
    termination: str
    selected_iteration: int
    agents: np.ndarray
    config: DiscoverConfig

    @property
    def q_obs(self) -> float:
        """Training objective of the returned region under the returned grouping."""
        return self.history[self.selected_iteration - 1].q_hat

    @property
    def train_membership(self) -> np.ndarray:
        return self.history[self.selected_iteration - 1].membership

    def to_dict(self) -> dict:
        return {
            "outcome_model": self.outcome_model.to_dict(),
            "region": self.region.to_dict(),
            "grouping": {str(a): int(v) for a, v in self.grouping.items()},
            "agents": [str(a) for a in self.agents],
            "termination": self.termination,
            "n_iterations": len(self.history),
            "selected_iteration": self.selected_iteration,
            "history": [
                {
                    "iteration": h.iteration,
                    "q_hat": h.q_hat,
                    "l_hat": h.l_hat,
                    "threshold": h.region.threshold,
                    "n_members": h.n_members,
                    "n_group1": int(h.grouping.sum()),
                }
                for h in self.history
            ],
            "l_hat_trace": [h.l_hat for h in self.history],
            "config": self.config.to_dict(),
        }


def _region_cols(dataset: Dataset, exclude: Sequence[str]) -> tuple[int, ...]:
    excl = set(exclude)
    unknown = excl - set(dataset.feature_names)
    if unknown:
        raise ConfigError(f"excluded feature(s) not in data: {sorted(unknown)}")
    cols = tuple(i for i, n in enumerate(dataset.feature_names) if n not in excl)
    if not cols:
        raise ConfigError("every feature is excluded from the region model")
    return cols


def fit_outcome(dataset: Dataset, config: DiscoverConfig, validation: Dataset | None = None,
                jobs: int = 1) -> Model:
    """Fit ``f`` to ``E[Y | X]`` (tuned by validation AUC when a grid is configured)."""
    val = None if validation is None else (validation.features, validation.decisions)
    return config.outcome.fit(dataset.features, dataset.decisions, validation=val, metric="auc",
                              seed=derive_seed(config.seed, 0), jobs=jobs)


def discover(
    dataset: Dataset,
    config: DiscoverConfig | None = None,
    *,
    validation: Dataset | None = None,
    outcome_model=None,
    jobs: int = 1,
    **overrides,
) -> DiscoveryResult:
    """Run the alternating search on ``dataset``.

    ``outcome_model`` skips fitting ``f`` (any object with ``predict``); since
    ``f`` depends only on features and decisions, agent-permuted reruns can
    share it. ``validation`` is used only to tune learners that carry a grid.
    Keyword ``overrides`` update fields of ``config``.
    """
    config = config or DiscoverConfig()
    if overrides:
        config = config.replace(**overrides)
    n = len(dataset)
    beta = config.beta
    if beta * n < 1:
        raise ConfigError(f"beta * n = {beta * n:.3g} < 1; region would be empty")
    cols = _region_cols(dataset, config.exclude_features)
    names = tuple(dataset.feature_names[c] for c in cols)
    Xh = dataset.features[:, list(cols)]

    rows_g = rows_h = None
    fit_set = dataset
    if config.sample_split:
        parts = split_stratified(dataset, SplitSpec((1 / 3, 1 / 3, 1 / 3), (1, 1, 1), config.seed))
        fit_set = parts[0]
        pos = {int(r): i for i, r in enumerate(dataset.row_ids)}
        rows_g = np.array([pos[int(r)] for r in parts[1].row_ids])
        rows_h = np.array([pos[int(r)] for r in parts[2].row_ids])

    if outcome_model is None:
        f = fit_outcome(fit_set, config, validation, jobs)
    else:
        f = outcome_model
    r = residuals(f, dataset)
    agent_idx = r.agent_idx
    n_agents = r.n_agents

    val_targets = None
    if validation is not None and config.region.grid:
        r_val = residuals(f, validation, agents=None)
        val_lookup = {a: i for i, a in enumerate(r.agents)}
        val_map = np.array([val_lookup.get(a, -1) for a in r_val.agents])
        val_targets = (validation.features[:, list(cols)], r_val.values, val_map[r_val.agent_idx])

    S = np.ones(n, dtype=bool)
    seen = {np.packbits(S).tobytes(): 0}
    history: list[IterationRecord] = []
    termination = ITERATION_LIMIT
    for it in range(1, int(config.max_iter) + 1):
        sel_g = S if rows_g is None else _restrict(S, rows_g)
        if not sel_g.any():
            raise EmptyRegionError(f"iteration {it}: empty region")
        sums = np.bincount(agent_idx[sel_g], weights=r.values[sel_g], minlength=n_agents)
        G = optimal_grouping_array(sums)
        targets = r.values * G[agent_idx]
        fit_rows = slice(None) if rows_h is None else rows_h
        val = None
        if val_targets is not None:
            Xv, rv, vidx = val_targets
            gv = np.where(vidx >= 0, G[np.maximum(vidx, 0)], 1)
            val = (Xv, rv * gv)
        try:
            h = config.region.fit(Xh[fit_rows], targets[fit_rows], validation=val, metric="mse",
                                  seed=derive_seed(config.seed, 1, it), jobs=jobs)
        except Exception as exc:
            raise ComputationError(f"iteration {it}: region model fit failed: {exc}") from exc
        scores = h.predict(Xh)
        b = quantile_threshold(scores[fit_rows], beta)
        S_new = scores >= b
        sums_new = np.bincount(agent_idx[S_new], weights=r.values[S_new], minlength=n_agents)
        n_s = int(S_new.sum())
        region = Region(h, b, cols, names, dataset.n_features)
        history.append(IterationRecord(it, G, S_new, q_hat_from_sums(sums_new, G, n_s),
                                       l_hat_from_sums(sums_new, n_s), region))
        key = np.packbits(S_new).tobytes()
        if np.array_equal(S_new, S):
            termination = CONVERGED
            break
        if key in seen:
            termination = CYCLE_DETECTED
            break
        seen[key] = it
        S = S_new

    if termination == CYCLE_DETECTED:
        best = max(history, key=lambda h: (h.l_hat, -h.iteration))
    else:
        best = history[-1]
    grouping = {str(a): int(g) for a, g in zip(r.agents, best.grouping)}
    return DiscoveryResult(f, best.region, grouping, tuple(history), termination,
                           best.iteration, r.agents, config)


def _restrict(mask: np.ndarray, rows: np.ndarray) -> np.ndarray:
    out = np.zeros_like(mask)
    out[rows] = mask[rows]
    return out

