"""Held-out checks for a discovered region.

* :func:`benchmark_region` compares the test objective of the learned region
  with uniformly random test subsets of the same size.
* :func:`stability` reruns discovery on k folds and measures how consistent
  the regions and groupings are.
* :func:`eta_bound` evaluates the per-agent misgrouping bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Sequence

import numpy as np

from ._rng import parallel_map, rng_for
from .data import Dataset, kfold_stratified
from .discovery import DiscoverConfig, DiscoveryResult, config_hash, discover, membership
from .errors import ConfigError, EmptyRegionError
from .objective import l_hat, q_hat, residuals


def _json_float(x: float):
    return float(x) if math.isfinite(x) else None


@dataclass(frozen=True)
class RegionBenchmark:
    l_train: float
    l_test: float
    q_test: float
    random_mean: float
    random_std: float
    z_score: float
    n_random: int
    region_size: int
    n_test: int
    random_values: tuple[float, ...] = ()

    @property
    def significant(self) -> bool:
        """``l_test`` more than two standard deviations above the random mean."""
        return self.l_test > self.random_mean + 2.0 * self.random_std

    def to_dict(self) -> dict:
        return {
            "table": [
                {"metric": "l_hat", "subset": "train", "value": self.l_train},
                {"metric": "l_hat", "subset": "test", "value": self.l_test},
                {"metric": "l_hat", "subset": "random test regions",
                 "mean": self.random_mean, "std": self.random_std},
                {"metric": "q_hat", "subset": "test (learned grouping)", "value": self.q_test},
            ],
            "z_score": _json_float(self.z_score),
            "significant": self.significant,
            "n_random": self.n_random,
            "region_size": self.region_size,
            "n_test": self.n_test,
        }


def _random_l(i, r, n_s, seed):
    rows = rng_for(seed, i).choice(len(r), size=n_s, replace=False)
    s = np.zeros(len(r), dtype=bool)
    s[rows] = True
    return l_hat(r, s)


def benchmark_region(result: DiscoveryResult, f, train: Dataset, test: Dataset,
                     n_random: int = 100, seed: int = 0, jobs: int = 1) -> RegionBenchmark:
    """Objective of the learned region on train and test versus random test regions.

    Random subset ``i`` is drawn without replacement from ``rng_for(seed, i)``
    and has exactly the learned test region's size. The spread uses the sample
    standard deviation; the z-score is 0 when that spread is 0 and ``l_test``
    equals the mean.
    """
    if int(n_random) < 2:
        raise ConfigError("n_random must be at least 2")
    s_test = membership(result.region, test.features)
    n_s = int(s_test.sum())
    if n_s == 0:
        raise EmptyRegionError("learned region is empty on the test set")
    r_train = residuals(f, train)
    r_test = residuals(f, test)
    l_train = l_hat(r_train, membership(result.region, train.features))
    l_test = l_hat(r_test, s_test)
    # agents unseen in training take group 1, like absent agents
    g = {a: result.grouping.get(str(a), 1) for a in r_test.agents}
    q_test = q_hat(r_test, s_test, g)

    draw = partial(_random_l, r=r_test, n_s=n_s, seed=seed)
    vals = np.array(parallel_map(draw, range(int(n_random)), jobs, threads=True))
    mean = float(vals.mean())
    std = float(vals.std(ddof=1))
    if std > 0:
        z = (l_test - mean) / std
    else:
        z = 0.0 if l_test == mean else math.copysign(math.inf, l_test - mean)
    return RegionBenchmark(l_train, l_test, q_test, mean, std, z, int(n_random), n_s,
                           len(test), tuple(float(v) for v in vals))


@dataclass(frozen=True)
class StabilityReport:
    k: int
    # (1) held-out agreement for points selected under most training folds
    n_majority_points: int
    n_also_held_out: int
    # (2) test-region consistency
    mean_test_region: float
    consistent_test_weight: float
    # (3) agent-pair grouping consistency
    n_eligible_pairs: int
    n_consistent_pairs: int
    shuffle_pair_fraction: float
    fold_hashes: tuple[str, ...] = ()

    @staticmethod
    def _frac(a, b) -> float:
        return a / b if b else math.nan

    @property
    def held_out_fraction(self) -> float:
        return self._frac(self.n_also_held_out, self.n_majority_points)

    @property
    def test_region_fraction(self) -> float:
        return self._frac(self.consistent_test_weight, self.mean_test_region)

    @property
    def pair_fraction(self) -> float:
        return self._frac(self.n_consistent_pairs, self.n_eligible_pairs)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "min_folds": min_folds(self.k),
            "region_held_out": {
                "points_selected_in_most_training_folds": self.n_majority_points,
                "also_selected_when_held_out": self.n_also_held_out,
                "fraction": _json_float(self.held_out_fraction),
            },
            "test_region": {
                "mean_size": self.mean_test_region,
                "weight_in_min_folds": self.consistent_test_weight,
                "fraction": _json_float(self.test_region_fraction),
            },
            "agent_pairs": {
                "eligible": self.n_eligible_pairs,
                "consistent": self.n_consistent_pairs,
                "fraction": _json_float(self.pair_fraction),
                "shuffled_grouping_fraction": _json_float(self.shuffle_pair_fraction),
            },
        }


def min_folds(k: int) -> int:
    return math.ceil(0.75 * k - 1e-9)


def stability_folds(data: Dataset, k: int = 4, seed: int = 0):
    return kfold_stratified(data, k, seed)


def _pair_counts(present: np.ndarray, groups: np.ndarray, need: int) -> tuple[int, int]:
    """Eligible pairs (both present in >= need folds) and those with a stable relation."""
    both = present[:, :, None] & present[:, None, :]
    same = groups[:, :, None] == groups[:, None, :]
    n_both = both.sum(axis=0)
    n_same = (both & same).sum(axis=0)
    n_opp = n_both - n_same
    iu = np.triu_indices(present.shape[1], k=1)
    eligible = n_both[iu] >= need
    consistent = eligible & (np.maximum(n_same, n_opp)[iu] >= need)
    return int(eligible.sum()), int(consistent.sum())


def stability(folds: Sequence[tuple[Dataset, Dataset]], test: Dataset,
              config: DiscoverConfig | None = None, seed: int = 0, *,
              n_shuffles: int = 20, jobs: int = 1) -> StabilityReport:
    """Rerun discovery on each ``(train, held-out)`` fold and summarize agreement.

    Every fold uses ``config`` unchanged (the held-out part tunes gridded
    learners). Rows are matched across folds by row id. ``seed`` drives only
    the shuffled-grouping control.
    """
    k = len(folds)
    if k < 2:
        raise ConfigError("stability needs at least 2 folds")
    config = config or DiscoverConfig()
    need = min_folds(k)
    results = parallel_map(partial(_fold_run, config=config), list(folds), jobs)

    # pooled rows of train + held-out, keyed by row id
    ids = np.unique(np.concatenate([np.concatenate([tr.row_ids, va.row_ids]) for tr, va in folds]))
    pos = {int(r): i for i, r in enumerate(ids)}
    in_tr = np.zeros((k, ids.size), dtype=bool)
    in_va = np.zeros((k, ids.size), dtype=bool)
    sel = np.zeros((k, ids.size), dtype=bool)
    for j, ((tr, va), res) in enumerate(zip(folds, results)):
        for part, flag in ((tr, in_tr), (va, in_va)):
            p = np.array([pos[int(r)] for r in part.row_ids])
            flag[j, p] = True
            sel[j, p] = membership(res.region, part.features)

    n_tr = in_tr.sum(axis=0)
    n_va = in_va.sum(axis=0)
    tr_sel = (in_tr & sel).sum(axis=0)
    va_sel = (in_va & sel).sum(axis=0)
    majority = (n_tr > 0) & (n_va > 0) & (2 * tr_sel > n_tr)
    also = majority & (2 * va_sel >= n_va)

    test_sel = np.vstack([membership(res.region, test.features) for res in results])
    counts = test_sel.sum(axis=0)
    mean_size = float(test_sel.sum(axis=1).mean())
    weight = float(counts[counts >= need].sum() / k)

    agents = np.unique(np.concatenate([test.agent_ids] + [np.concatenate([tr.agent_ids, va.agent_ids])
                                                          for tr, va in folds]))
    apos = {a: i for i, a in enumerate(agents)}
    present = np.zeros((k, agents.size), dtype=bool)
    groups = np.full((k, agents.size), -1, dtype=np.int64)
    for j, ((tr, va), res) in enumerate(zip(folds, results)):
        for part in (tr, va, test):
            m = membership(res.region, part.features)
            present[j, [apos[a] for a in np.unique(part.agent_ids[m])]] = True
        for a, g in res.grouping.items():
            groups[j, apos[a]] = g
    # agents without a learned group in a fold cannot be compared there
    present &= groups >= 0
    n_elig, n_cons = _pair_counts(present, groups, need)

    fracs = []
    for t in range(int(n_shuffles)):
        rng = rng_for(seed, t)
        shuffled = groups.copy()
        for j in range(k):
            known = np.flatnonzero(groups[j] >= 0)
            shuffled[j, known] = rng.permutation(groups[j, known])
        e, c = _pair_counts(present, shuffled, need)
        if e:
            fracs.append(c / e)
    shuffle_frac = float(np.mean(fracs)) if fracs else math.nan

    return StabilityReport(
        k, int(majority.sum()), int(also.sum()), mean_size, weight, n_elig, n_cons, shuffle_frac,
        tuple(config_hash(r.config.to_dict()) for r in results),
    )


def _fold_run(fold, config):
    tr, va = fold
    return discover(tr, config, validation=va)


@dataclass(frozen=True)
class EtaBound:
    eta: float
    below_half: bool
    r_half: float

    def to_dict(self) -> dict:
        return {"eta": self.eta, "below_half": self.below_half, "r_half": _json_float(self.r_half)}


def eta_bound(R: float, alpha: float, beta: float, omega: float) -> EtaBound:
    """``exp(-R alpha^2 beta^2 omega^2 / 2)`` and whether it is below one half.

    Evaluated as ``0.5 ** (R / r_half)`` with ``r_half = 2 ln 2 / (alpha beta omega)^2``,
    which is the same function but makes ``R = r_half`` give exactly 0.5.
    """
    for name, v in (("R", R), ("alpha", alpha), ("beta", beta), ("omega", omega)):
        if not (v >= 0):
            raise ConfigError(f"{name} must be nonnegative, got {v}")
    for name, v in (("alpha", alpha), ("beta", beta), ("omega", omega)):
        if v > 1:
            raise ConfigError(f"{name} must be at most 1, got {v}")
    p = (alpha * beta * omega) ** 2
    if p == 0.0:
        return EtaBound(1.0, False, math.inf)
    r_half = 2.0 * math.log(2.0) / p
    eta = 0.5 ** (R / r_half)
    return EtaBound(eta, R > r_half, r_half)
