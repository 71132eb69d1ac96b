import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetregion._rng import rng_for
from hetregion.data import Dataset, SplitSpec, split_stratified
from hetregion.discovery import DiscoverConfig, discover, membership
from hetregion.errors import ConfigError, EmptyRegionError
from hetregion.objective import l_hat, residuals
from hetregion.synthgen import SyntheticConfig, generate
from hetregion.tuning import permute_agents
from hetregion.validation import (
    benchmark_region,
    eta_bound,
    min_folds,
    stability,
    stability_folds,
)


def perfect_data(n=40):
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, n)
    X = np.c_[y, rng.normal(size=n)]
    return Dataset(X, [f"a{i % 4}" for i in range(n)], y, ("y_copy", "noise"))


def oracle_f(X):
    return np.asarray(X)[:, 0]


def test_zero_residuals_give_zero_everywhere():
    d = perfect_data()
    res = discover(d, beta=0.3, outcome_model=oracle_f)
    bench = benchmark_region(res, oracle_f, d, d, n_random=10)
    assert bench.l_train == bench.l_test == 0.0
    assert set(bench.random_values) == {0.0}
    assert bench.random_std == 0.0 and bench.z_score == 0.0 and not bench.significant


def test_benchmark_errors():
    d = perfect_data()
    res = discover(d, beta=0.3, outcome_model=oracle_f)
    with pytest.raises(ConfigError):
        benchmark_region(res, oracle_f, d, d, n_random=1)
    empty = replace(res, region=replace(res.region, threshold=math.inf))
    with pytest.raises(EmptyRegionError):
        benchmark_region(empty, oracle_f, d, d)


@pytest.fixture(scope="module")
def strong():
    data, truth, oracle = generate(SyntheticConfig(n_rows=2000, n_agents=10, seed=4))
    train, _, test = split_stratified(data, SplitSpec((0.5, 0.0, 0.5), (1, 0, 1), seed=4))
    return train, test, truth


def test_random_subsets_match_region_size_and_stream(strong):
    train, test, _ = strong
    res = discover(train, beta=0.2)
    bench = benchmark_region(res, res.outcome_model, train, test, n_random=30, seed=2)
    s = membership(res.region, test.features)
    assert bench.region_size == int(s.sum()) and bench.n_test == len(test)
    r = residuals(res.outcome_model, test)
    # independent redraw of subset 7: without replacement, exactly region-sized
    rows = rng_for(2, 7).choice(len(test), size=bench.region_size, replace=False)
    assert np.unique(rows).size == bench.region_size
    mask = np.zeros(len(test), bool)
    mask[rows] = True
    assert bench.random_values[7] == l_hat(r, mask)
    assert bench.random_std == pytest.approx(np.std(bench.random_values, ddof=1))
    assert bench.l_test == l_hat(r, s)
    jobs4 = benchmark_region(res, res.outcome_model, train, test, n_random=30, seed=2, jobs=4)
    assert jobs4 == bench
    doc = bench.to_dict()
    assert [row["subset"] for row in doc["table"]][:3] == ["train", "test", "random test regions"]


def test_permuted_agents_show_no_systematic_significance(strong):
    train, test, _ = strong
    zs = []
    for seed in range(20):
        tr = permute_agents(train, 100 + seed)
        te = permute_agents(test, 200 + seed)
        res = discover(tr, beta=0.2, max_iter=5)
        zs.append(benchmark_region(res, res.outcome_model, tr, te, n_random=50, seed=seed).z_score)
    assert abs(np.mean(zs)) < 1


def test_identical_folds_are_fully_consistent():
    data, _, _ = generate(SyntheticConfig(n_rows=800, n_agents=6, seed=1))
    fold = (data, data)
    rep = stability([fold] * 4, data, DiscoverConfig(beta=0.2, max_iter=5))
    assert rep.held_out_fraction == 1.0
    assert rep.test_region_fraction == 1.0
    assert rep.n_eligible_pairs > 0 and rep.pair_fraction == 1.0
    assert len(set(rep.fold_hashes)) == 1


def test_stability_beats_shuffle_control_on_two_groups():
    data, _, _ = generate(SyntheticConfig(n_rows=3000, n_agents=12, group_coefficients=(0.0, 3.0), seed=2))
    trval, _, test = split_stratified(data, SplitSpec((0.75, 0.0, 0.25), (1, 0, 1), seed=2))
    folds = stability_folds(trval, 4, seed=2)
    rep = stability(folds, test, DiscoverConfig(beta=0.2, max_iter=10), seed=3)
    assert rep.pair_fraction > rep.shuffle_pair_fraction
    for v in rep.to_dict()["agent_pairs"]["fraction"], rep.held_out_fraction, rep.test_region_fraction:
        assert 0 <= v <= 1
    with pytest.raises(ConfigError):
        stability(folds[:1], test)


def test_min_folds():
    assert [min_folds(k) for k in (2, 3, 4, 5, 8)] == [2, 3, 3, 4, 6]


def test_eta_examples():
    assert eta_bound(100, 0.0, 0.25, 0.5).eta == 1.0
    e = eta_bound(100, 0.3, 0.25, 0.5)
    assert e.eta == pytest.approx(math.exp(-0.0703125), rel=1e-12)
    assert e.eta == pytest.approx(0.93211, abs=1e-5)  # quoted value is 0.9321025 rounded up
    for a, b, w in [(0.3, 0.25, 0.5), (1.0, 1.0, 1.0), (0.7, 0.1, 0.9)]:
        R = 2 * math.log(2) / (a * b * w) ** 2
        half = eta_bound(R, a, b, w)
        assert half.eta == 0.5 and not half.below_half
        assert eta_bound(R * 1.001, a, b, w).below_half
    with pytest.raises(ConfigError):
        eta_bound(-1, 0.1, 0.1, 0.1)
    with pytest.raises(ConfigError):
        eta_bound(1, 1.5, 0.1, 0.1)


unit = st.floats(0.01, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e4), unit, unit, unit, st.integers(0, 3), st.floats(1.0001, 3.0))
def test_eta_monotone_decreasing(R, a, b, w, which, factor):
    args = [R, a, b, w]
    base = eta_bound(*args).eta
    bigger = list(args)
    bigger[which] = bigger[which] * factor if which == 0 else min(1.0, bigger[which] * factor)
    assert eta_bound(*bigger).eta <= base
    assert base == pytest.approx(math.exp(-R * a * a * b * b * w * w / 2), rel=1e-12, abs=1e-300)
