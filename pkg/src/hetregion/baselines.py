"""Direct-model baseline and the metrics used to score any region method."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from ._rng import derive_seed
from .data import Dataset
from .discovery import quantile_threshold
from .errors import ConfigError, DataError
from .learners import LearnerConfig, Model
from .metrics import auc


@dataclass(frozen=True)
class EvaluationReport:
    region_auc: float
    region_precision: float
    region_recall: float
    partition_accuracy: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def region_metrics(scores, cutoff: float, truth) -> EvaluationReport:
    """AUC of ``scores`` against the true region, and precision/recall of ``scores >= cutoff``.

    Precision is reported as 0 when nothing is selected.
    """
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth, dtype=bool)
    if scores.shape != truth.shape:
        raise DataError(f"{scores.size} scores for {truth.size} truth rows")
    a = auc(scores, truth)
    pred = scores >= cutoff
    tp = int(np.sum(pred & truth))
    precision = tp / int(pred.sum()) if pred.any() else 0.0
    recall = tp / int(truth.sum())
    return EvaluationReport(float(a), float(precision), float(recall))


def partition_accuracy(predicted: Mapping, truth: Mapping) -> float:
    """Agent-level agreement of two binary groupings, maximized over the label swap."""
    if set(map(str, predicted)) != set(map(str, truth)):
        raise DataError("predicted and true groupings cover different agents")
    p = {str(a): int(g) for a, g in predicted.items()}
    t = {str(a): int(g) for a, g in truth.items()}
    if set(t.values()) - {0, 1} or set(p.values()) - {0, 1}:
        raise DataError("partition accuracy needs binary groupings")
    agree = sum(p[a] == t[a] for a in t) / len(t)
    return max(agree, 1.0 - agree)


def balanced_partition(coefficients: Mapping[str, float]) -> dict:
    """Top ``ceil(N/2)`` agents by coefficient (ties by listed order) form group 1."""
    agents = list(coefficients)
    order = sorted(range(len(agents)), key=lambda i: -coefficients[agents[i]])
    top = set(order[: math.ceil(len(agents) / 2)])
    return {a: int(i in top) for i, a in enumerate(agents)}


def agent_one_hot(agent_ids, agents) -> np.ndarray:
    """Indicator columns for all but the last of ``agents``; unseen agents are all zero."""
    col = {a: i for i, a in enumerate(agents[:-1])}
    out = np.zeros((len(agent_ids), len(agents) - 1))
    for r, a in enumerate(agent_ids):
        j = col.get(a)
        if j is not None:
            out[r, j] = 1.0
    return out


@dataclass(frozen=True)
class DirectBaseline:
    scores: np.ndarray
    cutoff: float
    grouping: dict
    coefficients: dict
    outcome_model: Model
    agent_model: Model
    region_model: Model

    @property
    def members(self) -> np.ndarray:
        return self.scores >= self.cutoff


def direct_baseline(train: Dataset, validation: Dataset, test: Dataset, beta: float,
                    region_learner: LearnerConfig | None = None, *, seed: int = 0,
                    jobs: int = 1) -> DirectBaseline:
    """Region where adding agent indicators most improves a logistic model.

    Both logistic models have their ``l2_c`` tuned by validation AUC. The
    per-row utility ``|y - f(x)| - |y - f(a, x)|`` is regressed on ``x``; the
    cutoff is the top-``beta`` quantile of the region model's scores on train
    and validation pooled.
    """
    for name, d in (("train", train), ("validation", validation), ("test", test)):
        if d is None or len(d) == 0:
            raise DataError(f"direct baseline needs a non-empty {name} split")
    if not (0 < beta <= 1):
        raise ConfigError(f"beta must lie in (0, 1], got {beta}")
    agents = list(np.unique(np.concatenate([train.agent_ids, validation.agent_ids])))
    if len(agents) < 2:
        raise DataError("direct baseline needs at least 2 agents")
    region_learner = region_learner or LearnerConfig("ridge")
    logistic = LearnerConfig("logistic").with_default_grid()

    def with_agents(d: Dataset) -> np.ndarray:
        return np.hstack([d.features, agent_one_hot(d.agent_ids, agents)])

    val_x = (validation.features, validation.decisions)
    f = logistic.fit(train.features, train.decisions, validation=val_x, metric="auc", jobs=jobs)
    f_a = logistic.fit(with_agents(train), train.decisions,
                       validation=(with_agents(validation), validation.decisions), metric="auc", jobs=jobs)

    def utility(d: Dataset) -> np.ndarray:
        y = d.decisions.astype(float)
        return np.abs(y - f.predict(d.features)) - np.abs(y - f_a.predict(with_agents(d)))

    h = region_learner.fit(train.features, utility(train),
                           validation=(validation.features, utility(validation)), metric="mse",
                           seed=derive_seed(seed, 2), jobs=jobs)
    pooled = np.concatenate([h.predict(train.features), h.predict(validation.features)])
    cutoff = quantile_threshold(pooled, beta)

    w = np.asarray(f_a.parameters["weights"], dtype=float)[train.n_features:]
    coefs = {a: float(c) for a, c in zip(agents, list(w) + [0.0])}
    return DirectBaseline(h.predict(test.features), cutoff, balanced_partition(coefs), coefs, f, f_a, h)


def load_scores(path, row_id_col: str = "row_id", score_col: str = "score") -> dict:
    """Read an external method's ``(row id, score)`` CSV."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    out = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {row_id_col, score_col} <= set(reader.fieldnames):
            raise DataError(f"{path}: needs columns {row_id_col!r} and {score_col!r}")
        for i, row in enumerate(reader, start=1):
            try:
                out[int(row[row_id_col])] = float(row[score_col])
            except ValueError:
                raise DataError(f"{path}: row {i}: unparseable row id or score") from None
    return out
