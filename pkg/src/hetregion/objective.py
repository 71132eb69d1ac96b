"""Residuals, the empirical objective, optimal grouping and the partially maximized objective.

All region statistics are computed from per-agent residual sums accumulated in
row order (``np.bincount``) and then added in agent-index order. Because float
addition is monotone, this makes the closed-form grouping an exact maximizer
of :func:`q_hat` in floating point, not only in exact arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data import Dataset
from .errors import DataError, EmptyRegionError

Grouping = dict  # agent id -> 0/1


@dataclass(frozen=True)
class Residuals:
    values: np.ndarray
    agent_idx: np.ndarray
    agents: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != np.shape(self.agent_idx):
            raise DataError("residuals and agent index differ in length")
        if np.any(np.abs(v) > 1.0):
            raise DataError("residuals must lie in [-1, 1]")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "agent_idx", np.asarray(self.agent_idx, dtype=np.int64))
        object.__setattr__(self, "agents", np.asarray(self.agents).astype(str))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def permuted(self, agent_idx) -> "Residuals":
        return Residuals(self.values, agent_idx, self.agents)


def outcome_scores(f, X) -> np.ndarray:
    """Scores of ``f`` on ``X``; ``f`` is a fitted model, a callable, or precomputed scores."""
    if hasattr(f, "predict"):
        return np.asarray(f.predict(X), dtype=float)
    if callable(f):
        return np.asarray(f(X), dtype=float)
    return np.asarray(f, dtype=float)


def residuals(f, dataset: Dataset, agents=None) -> Residuals:
    """``r_i = y_i - f(x_i)``; scores outside [0, 1] are an error, never clipped."""
    scores = outcome_scores(f, dataset.features)
    if scores.shape != (len(dataset),):
        raise DataError(f"outcome model returned {scores.shape} scores for {len(dataset)} rows")
    if np.any(~np.isfinite(scores)) or np.any(scores < 0) or np.any(scores > 1):
        bad = int(np.flatnonzero(~((scores >= 0) & (scores <= 1)))[0])
        raise DataError(f"outcome score {scores[bad]!r} at row {bad} lies outside [0, 1]")
    agents, idx = dataset.agent_index(agents)
    return Residuals(dataset.decisions - scores, idx, agents)


def _member(r: Residuals, s) -> np.ndarray:
    s = np.asarray(s, dtype=bool)
    if s.shape != r.values.shape:
        raise DataError(f"membership has {s.size} rows, residuals have {len(r)}")
    return s


def region_sums(r: Residuals, s) -> tuple[np.ndarray, np.ndarray, int]:
    """Per-agent residual sums and row counts inside ``s``, plus the region size."""
    s = _member(r, s)
    n_s = int(s.sum())
    if n_s == 0:
        raise EmptyRegionError()
    idx = r.agent_idx[s]
    sums = np.bincount(idx, weights=r.values[s], minlength=r.n_agents)
    counts = np.bincount(idx, minlength=r.n_agents)
    return sums, counts, n_s


def grouping_array(g: Mapping, agents) -> np.ndarray:
    try:
        return np.array([int(g[a]) for a in agents], dtype=np.int8)
    except KeyError as exc:
        raise DataError(f"grouping has no entry for agent {exc.args[0]!r}") from None


def _ordered_sum(values: np.ndarray) -> float:
    total = 0.0
    for v in values.tolist():
        total += v
    return total


def q_hat_from_sums(sums: np.ndarray, g: np.ndarray, n_s: int) -> float:
    return _ordered_sum(np.where(np.asarray(g) == 1, sums, 0.0)) / n_s


def q_hat(r: Residuals, s, g) -> float:
    """Empirical objective: grouped residual sum over the region divided by the region size."""
    sums, _, n_s = region_sums(r, s)
    garr = grouping_array(g, r.agents) if isinstance(g, Mapping) else np.asarray(g)
    return q_hat_from_sums(sums, garr, n_s)


@dataclass(frozen=True)
class AgentBias:
    bias: dict
    absent: tuple

    def __getitem__(self, agent):
        return self.bias[agent]


def per_agent_bias(r: Residuals, s) -> AgentBias:
    """Each agent's residual sum in the region over the region size.

    Agents with no rows in the region get 0 and are listed in ``absent``.
    """
    sums, counts, n_s = region_sums(r, s)
    bias = {a: float(v) / n_s for a, v in zip(r.agents, sums)}
    absent = tuple(a for a, c in zip(r.agents, counts) if c == 0)
    return AgentBias(bias, absent)


def optimal_grouping_array(sums: np.ndarray) -> np.ndarray:
    return (sums >= 0).astype(np.int8)


def optimal_grouping(r: Residuals, s) -> Grouping:
    """Agents with nonnegative region bias go to group 1 (absent agents included)."""
    sums, _, _ = region_sums(r, s)
    return {a: int(v) for a, v in zip(r.agents, optimal_grouping_array(sums))}


def l_hat_from_sums(sums: np.ndarray, n_s: int) -> float:
    return _ordered_sum(np.maximum(sums, 0.0)) / n_s


def l_hat(r: Residuals, s) -> float:
    """Objective maximized over groupings: positive parts of per-agent sums over region size."""
    sums, _, n_s = region_sums(r, s)
    return l_hat_from_sums(sums, n_s)


def abs_bias_half(r: Residuals, s) -> float:
    """Half the region-weighted sum of absolute per-agent mean residuals.

    ``sum_a (n_aS / n_S) * |mean residual of a in S| / 2``; agrees with
    :func:`l_hat` up to half the region's mean residual.
    """
    sums, _, n_s = region_sums(r, s)
    return 0.5 * _ordered_sum(np.abs(sums)) / n_s
