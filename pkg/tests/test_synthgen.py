import csv
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from hetregion.errors import ConfigError, DataError, EmptyRegionError
from hetregion.synthgen import (
    DEFAULT_BASE,
    SYNTHETIC_FEATURES,
    DiscreteDGP,
    RegionRule,
    SeedTable,
    SyntheticConfig,
    SyntheticTruth,
    counterfactual_q,
    generate,
    generate_multigroup,
    multigroup_coefficients,
)


@pytest.fixture(scope="module")
def big():
    return generate(SyntheticConfig(n_rows=60_000, n_agents=40, seed=8))


def test_multigroup_coefficients():
    assert multigroup_coefficients(2) == (-1.5, 1.5)
    assert multigroup_coefficients(3) == (-1.5, 0.0, 1.5)
    assert len(multigroup_coefficients(10)) == 10
    with pytest.raises(ConfigError):
        multigroup_coefficients(1)


@pytest.mark.parametrize("n_groups", [2, 3, 5, 10])
def test_multigroup_sizes_are_balanced(n_groups):
    _, truth, _ = generate_multigroup(SyntheticConfig(n_rows=500, seed=n_groups), n_groups)
    sizes = Counter(truth.agent_groups.values())
    assert len(sizes) == n_groups
    assert max(sizes.values()) - min(sizes.values()) <= 1
    if n_groups == 10:
        assert set(sizes.values()) == {4}
    assert truth.n_groups == n_groups


def test_default_setup_and_rule_fractions(big):
    data, truth, _ = big
    assert data.feature_names == SYNTHETIC_FEATURES
    assert truth.group_coefficients == (0.0, 1.5)
    assert sorted(Counter(truth.agent_groups.values()).values()) == [20, 20]
    assert 0.18 < truth.region.mean() < 0.22
    misd = RegionRule.parse("misdemeanor").mask(data.features, data.feature_names)
    assert 0.18 < misd.mean() < 0.24
    # base policy is exactly the documented logit outside the region
    X = data.features
    base = DEFAULT_BASE["intercept"] + X @ np.array([DEFAULT_BASE[n] for n in SYNTHETIC_FEATURES])
    np.testing.assert_allclose(truth.group_probs[:, 0], expit(base), rtol=1e-12)
    np.testing.assert_allclose(truth.group_probs[~truth.region, 1], expit(base[~truth.region]), rtol=1e-12)


def test_empirical_rates_match_oracle(big):
    data, truth, _ = big
    groups = np.array([truth.agent_groups[a] for a in data.agent_ids])
    p = truth.group_probs[np.arange(len(data)), groups]
    assert np.all((p > 0) & (p < 1))
    for in_region in (False, True):
        for g in (0, 1):
            rows = (truth.region == in_region) & (groups == g)
            n = rows.sum()
            sd = np.sqrt(np.sum(p[rows] * (1 - p[rows]))) / n
            assert abs(data.decisions[rows].mean() - p[rows].mean()) < 3 * sd


def test_assignment_marginals_uniform(big):
    data, truth, _ = big
    counts = np.array([np.sum(data.agent_ids == a) for a in truth.agents])
    n, k = len(data), len(truth.agents)
    sd = np.sqrt(n * (1 / k) * (1 - 1 / k))
    assert np.all(np.abs(counts - n / k) < 4 * sd)  # 40 agents: 4 sigma keeps the family-wise rate small


def test_oracle_is_group_share_mixture(big):
    data, truth, oracle = big
    np.testing.assert_allclose(oracle.predict(data.features), truth.oracle_mean(), rtol=1e-12)
    np.testing.assert_allclose(oracle.group_probs(data.features), truth.group_probs)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(0.01, 2))
def test_policy_means_monotone_in_coefficient(c, step):
    cfg = SyntheticConfig(n_rows=300, seed=1)
    _, lo, _ = generate(cfg.replace(group_coefficients=(0.0, c)))
    _, hi, _ = generate(cfg.replace(group_coefficients=(0.0, c + step)))
    r = lo.region
    assert hi.group_probs[r, 1].mean() > lo.group_probs[r, 1].mean()
    np.testing.assert_array_equal(hi.group_probs[~r], lo.group_probs[~r])


def test_zero_coefficients_share_one_policy():
    _, truth, _ = generate(SyntheticConfig(n_rows=500, group_coefficients=(0.0, 0.0), seed=2))
    np.testing.assert_array_equal(truth.group_probs[:, 0], truth.group_probs[:, 1])
    g = {a: 1 if i % 3 == 0 else 0 for i, a in enumerate(truth.agents)}
    assert counterfactual_q(truth, truth.region, g) == pytest.approx(0.0, abs=1e-15)


def test_counterfactual_q_closed_form():
    # two groups, equal agent counts, upper group selected
    p1, p0 = 0.8, 0.3
    probs = np.array([[p0, p1]] * 5)
    truth = SyntheticTruth(np.ones(5, bool), ("a", "b"), {"a": 0, "b": 1}, probs)
    assert counterfactual_q(truth, np.ones(5, bool), {"a": 0, "b": 1}) == pytest.approx(
        0.5 * (p1 - (p1 + p0) / 2), abs=1e-15)
    single = SyntheticTruth(np.ones(5, bool), ("a", "b"), {"a": 0, "b": 0}, probs[:, :1])
    assert counterfactual_q(single, np.ones(5, bool), {"a": 1, "b": 1}) == 0.0
    with pytest.raises(EmptyRegionError):
        counterfactual_q(truth, np.zeros(5, bool), {"a": 1, "b": 1})


def test_generation_deterministic_and_round_trip(tmp_path):
    cfg = SyntheticConfig(n_rows=400, n_agents=7, seed=13)
    d1, t1, _ = generate(cfg)
    d2, t2, _ = generate(cfg)
    np.testing.assert_array_equal(d1.features, d2.features)
    assert d1.agent_ids.tolist() == d2.agent_ids.tolist()
    np.testing.assert_array_equal(d1.decisions, d2.decisions)
    d3, _, _ = generate(cfg.replace(seed=14))
    assert not np.array_equal(d1.decisions, d3.decisions)
    t1.save(tmp_path / "truth.json")
    back = SyntheticTruth.load(tmp_path / "truth.json")
    np.testing.assert_array_equal(back.region, t1.region)
    np.testing.assert_array_equal(back.group_probs, t1.group_probs)
    assert back.agent_groups == t1.agent_groups and back.agents == t1.agents
    t2.save(tmp_path / "t2.json")
    assert (tmp_path / "truth.json").read_text() == (tmp_path / "t2.json").read_text()


def test_rule_parsing():
    r = RegionRule.parse("misdemeanor == 1 and age <= 35")
    assert str(r) == "misdemeanor == 1 & age <= 35"
    assert r.features == ("misdemeanor", "age")
    X = np.array([[1.0, 35.0], [1.0, 35.1], [0.0, 20.0]])
    assert r.mask(X, ["misdemeanor", "age"]).tolist() == [True, False, False]
    assert RegionRule.parse("x > -1.5e0").mask(np.array([[-1.0], [-2.0]]), ["x"]).tolist() == [True, False]
    for bad in ("age ~ 3", "", "age <= abc"):
        with pytest.raises(ConfigError):
            RegionRule.parse(bad)
    with pytest.raises(ConfigError):
        r.mask(X, ["misdemeanor", "years"])


def test_generate_errors():
    with pytest.raises(DataError, match="region rule"):
        generate(SyntheticConfig(n_rows=50, region_rule="age < 0"))
    with pytest.raises(ConfigError):
        generate(SyntheticConfig(n_rows=50, n_agents=2, group_assignment={"agent_000": 0, "agent_001": 2}))
    with pytest.raises(ConfigError):
        generate(SyntheticConfig(n_rows=50, n_agents=2, group_assignment={"agent_000": 0}))


def test_seed_table_reuses_features(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "seed.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "v", "judge", "y"])
        for _ in range(300):
            u, v = rng.normal(), rng.integers(0, 2)
            w.writerow([f"{u:.6f}", v, "j", int(rng.random() < expit(u))])
    src = SeedTable(str(path), ("u", "v"), "judge", "y")
    data, truth, _ = generate(SyntheticConfig(n_agents=6, region_rule="v == 1", feature_source=src, seed=1))
    assert len(data) == 300 and data.feature_names == ("u", "v")
    assert truth.meta["base_coefficients"]["u"] > 0  # fit on the seed decisions
    no_y = SeedTable(str(path), ("u", "v"))
    with pytest.raises(ConfigError, match="base_coefficients"):
        generate(SyntheticConfig(region_rule="v == 1", feature_source=no_y))
    data2, _, _ = generate(SyntheticConfig(region_rule="v == 1", feature_source=no_y,
                                           base_coefficients={"u": 1.0}))
    np.testing.assert_array_equal(data2.features, data.features)


def test_discrete_dgp_truth_and_sampling():
    dgp = DiscreteDGP.random(16, 4, seed=3)
    assert np.all(dgp.assignment.min(axis=1) == 0)  # default hides one agent per context
    np.testing.assert_allclose(dgp.assignment.sum(axis=1), 1)
    X = dgp.context_features()
    assert dgp.context_of(X).tolist() == list(range(16))
    data, ctx = dgp.sample(50_000, seed=1)
    np.testing.assert_array_equal(dgp.context_of(data.features), ctx)
    freq = np.bincount(ctx, minlength=16) / len(ctx)
    sd = np.sqrt(dgp.context_probs * (1 - dgp.context_probs) / len(ctx))
    assert np.all(np.abs(freq - dgp.context_probs) < 4 * sd + 1e-12)
    truth = dgp.truth()
    # selecting every agent yields zero: the average policy is the mixture
    assert counterfactual_q(truth, truth.region, {a: 1 for a in truth.agents}) == pytest.approx(0, abs=1e-15)
