"""Choosing beta by comparing the training objective with an agent-permutation null."""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Sequence

import numpy as np

from ._rng import derive_seed, parallel_map, rng_for
from .data import Dataset
from .discovery import DiscoverConfig, config_hash, discover, fit_outcome
from .errors import ComputationError, ConfigError, HetRegionError

P_VALUE_RULE = "(1 + #{null >= q_obs}) / (T + 1)"


def permute_agents(dataset: Dataset, seed) -> Dataset:
    """Shuffle the agent column; features and decisions keep their row order."""
    perm = rng_for(seed).permutation(len(dataset))
    return dataset.with_agents(dataset.agent_ids[perm])


def permutation_p_value(q_obs: float, null) -> float:
    null = np.asarray(null, dtype=float)
    return float((1 + np.count_nonzero(null >= q_obs)) / (null.size + 1))


@dataclass(frozen=True)
class BetaPoint:
    beta: float
    q_obs: float
    null: tuple[float, ...]
    p_value: float

    def summary(self) -> dict:
        null = np.asarray(self.null)
        q = np.quantile(null, [0.05, 0.5, 0.95])
        return {
            "beta": self.beta,
            "q_obs": self.q_obs,
            "null_mean": float(null.mean()),
            "null_std": float(null.std(ddof=1)) if null.size > 1 else 0.0,
            "null_q05": float(q[0]),
            "null_median": float(q[1]),
            "null_q95": float(q[2]),
            "p_value": self.p_value,
        }


@dataclass(frozen=True)
class BetaScan:
    points: tuple[BetaPoint, ...]
    selected_beta: float
    T: int
    config: DiscoverConfig
    seed: int

    @property
    def candidates(self) -> list[float]:
        return [p.beta for p in self.points]

    @property
    def p_values(self) -> np.ndarray:
        return np.array([p.p_value for p in self.points])

    def to_dict(self) -> dict:
        cfg = self.config.to_dict()
        return {
            "selected_beta": self.selected_beta,
            "T": self.T,
            "seed": self.seed,
            "p_value_rule": P_VALUE_RULE,
            "table": [p.summary() for p in self.points],
            "config": cfg,
            "config_hash": config_hash(cfg),
        }

    def curve_rows(self) -> list[dict]:
        return [{"beta": p.beta, "q_obs": p.q_obs, "p_value": p.p_value} for p in self.points]


def _run(task, dataset, config, outcome_model, validation):
    """One discover run; ``task`` is ``(beta index, t)`` with ``t = -1`` for the real data."""
    bi, t, beta, master = task
    data = dataset if t < 0 else permute_agents(dataset, derive_seed(master, bi, t))
    cfg = config.replace(beta=beta)
    try:
        res = discover(data, cfg, validation=validation, outcome_model=outcome_model)
    except HetRegionError as exc:
        where = "observed data" if t < 0 else f"permutation {t}"
        raise type(exc)(f"beta={beta:g}, {where}: {exc}") from exc
    return res.q_obs, config_hash(res.config.to_dict())


def tune_beta(
    dataset: Dataset,
    candidates: Sequence[float],
    T: int = 40,
    config: DiscoverConfig | None = None,
    seed: int = 0,
    *,
    validation: Dataset | None = None,
    jobs: int = 1,
) -> BetaScan:
    """Permutation scan over ``candidates``.

    For each beta the observed training objective is compared against ``T``
    runs on agent-permuted copies of the data. The outcome model is fit once
    and shared, since permuting agents leaves features and decisions alone.
    Permutation ``t`` of candidate ``i`` uses ``derive_seed(seed, i, t)``.
    """
    candidates = [float(b) for b in candidates]
    if not candidates:
        raise ConfigError("no beta candidates")
    if int(T) < 1:
        raise ConfigError("T must be a positive integer")
    T = int(T)
    config = (config or DiscoverConfig()).replace(beta=candidates[0])
    f = fit_outcome(dataset, config, validation, jobs)

    tasks = [(bi, t, b, seed) for bi, b in enumerate(candidates) for t in range(-1, T)]
    run = partial(_run, dataset=dataset, config=config, outcome_model=f, validation=validation)
    out = parallel_map(run, tasks, jobs)

    points = []
    for bi, b in enumerate(candidates):
        chunk = out[bi * (T + 1):(bi + 1) * (T + 1)]
        hashes = {h for _, h in chunk}
        if len(hashes) != 1:
            raise ComputationError(f"beta={b:g}: null and observed runs used different configurations")
        q_obs = chunk[0][0]
        null = tuple(q for q, _ in chunk[1:])
        points.append(BetaPoint(b, q_obs, null, permutation_p_value(q_obs, null)))

    best = min(range(len(points)), key=lambda i: (points[i].p_value, points[i].beta))
    return BetaScan(tuple(points), points[best].beta, T, config, seed)
