import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetregion.data import Dataset
from hetregion.errors import DataError, EmptyRegionError
from hetregion.objective import (
    Residuals,
    abs_bias_half,
    l_hat,
    optimal_grouping,
    per_agent_bias,
    q_hat,
    residuals,
)


def res(values, idx, agents=None):
    idx = np.asarray(idx)
    if agents is None:
        agents = [f"a{i}" for i in range(idx.max() + 1)]
    return Residuals(np.asarray(values, dtype=float), idx, agents)


def random_instance(seed, n_agents=6, n_rows=30):
    rng = np.random.default_rng(seed)
    r = res(rng.uniform(-1, 1, n_rows), rng.integers(0, n_agents, n_rows),
            [f"a{i}" for i in range(n_agents)])
    s = rng.random(n_rows) < 0.6
    s[rng.integers(n_rows)] = True
    return r, s


def brute_max(r, s):
    best = -np.inf
    for bits in itertools.product((0, 1), repeat=r.n_agents):
        best = max(best, q_hat(r, s, np.array(bits)))
    return best


def test_residual_examples():
    d = Dataset(np.zeros((4, 1)), ["a", "b", "a", "b"], [1, 0, 1, 1], ("x",))
    r = residuals(np.array([0.2, 0.7, 0.5, 0.9]), d)
    np.testing.assert_allclose(r.values, [0.8, -0.7, 0.5, 0.1], atol=1e-15)
    assert residuals(lambda X: np.full(len(X), 0.5), d).values.tolist() == [0.5, -0.5, 0.5, 0.5]
    assert residuals(d.decisions.astype(float), d).values.tolist() == [0, 0, 0, 0]


def test_residuals_reject_out_of_range_scores():
    d = Dataset(np.zeros((2, 1)), ["a", "b"], [1, 0], ("x",))
    with pytest.raises(DataError, match="outside"):
        residuals(np.array([0.5, 1.2]), d)
    with pytest.raises(DataError):
        residuals(np.array([np.nan, 0.5]), d)


def test_q_hat_examples():
    r = res([0.5, -0.5, 0.25], [0, 0, 1])
    s = np.ones(3, bool)
    assert q_hat(r, s, {"a0": 1, "a1": 0}) == 0.0
    assert q_hat(r, s, {"a0": 0, "a1": 0}) == 0.0
    one = res([0.3], [0])
    assert q_hat(one, [True], {"a0": 1}) == 0.3
    with pytest.raises(EmptyRegionError, match="empty region"):
        q_hat(r, np.zeros(3, bool), {"a0": 1, "a1": 1})
    with pytest.raises(DataError, match="a1"):
        q_hat(r, s, {"a0": 1})


def test_per_agent_bias_and_l_hat_examples():
    # two agents, sums +0.9 and -0.3 over 6 region rows
    r = res([0.3, 0.3, 0.3, -0.1, -0.1, -0.1, 0.7], [0, 0, 0, 1, 1, 1, 2])
    s = np.array([1, 1, 1, 1, 1, 1, 0], bool)
    b = per_agent_bias(r, s)
    assert b["a0"] == pytest.approx(0.15) and b["a1"] == pytest.approx(-0.05)
    assert b["a2"] == 0.0 and b.absent == ("a2",)
    assert l_hat(r, s) == pytest.approx(0.15)
    assert optimal_grouping(r, s) == {"a0": 1, "a1": 0, "a2": 1}


def test_grouping_tie_rule():
    # biases +0.1, 0.0, -0.2 (the middle agent's residuals cancel)
    r = res([0.3, 0.25, -0.25, -0.6], [0, 1, 1, 2])
    assert optimal_grouping(r, np.ones(4, bool)) == {"a0": 1, "a1": 1, "a2": 0}
    pos = res([0.1, 0.2, 0.3], [0, 1, 2])
    assert set(optimal_grouping(pos, np.ones(3, bool)).values()) == {1}
    zero = res(np.zeros(5), [0, 1, 0, 1, 0])
    assert l_hat(zero, np.ones(5, bool)) == 0.0


@pytest.mark.parametrize("seed", range(25))
def test_optimal_grouping_matches_exhaustive_search(seed):
    r, s = random_instance(seed)
    g = optimal_grouping(r, s)
    best = brute_max(r, s)
    assert q_hat(r, s, g) == best  # exact, no tolerance
    assert l_hat(r, s) == best


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 40))
def test_l_hat_identities(seed, n_agents, n_rows):
    r, s = random_instance(seed, n_agents, n_rows)
    lh = l_hat(r, s)
    assert lh >= 0
    assert lh == q_hat(r, s, optimal_grouping(r, s))
    sums = np.bincount(r.agent_idx[s], weights=r.values[s], minlength=r.n_agents)
    assert (lh == 0) == bool(np.all(sums <= 0))
    # l_hat minus half the absolute bias is half the region mean residual
    assert lh - abs_bias_half(r, s) == pytest.approx(0.5 * r.values[s].mean(), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_q_hat_invariant_to_row_order_and_relabeling(seed):
    rng = np.random.default_rng(seed)
    r, s = random_instance(seed, 5, 25)
    g = rng.integers(0, 2, 5)
    base = q_hat(r, s, g)
    perm = rng.permutation(len(r))
    shuffled = Residuals(r.values[perm], r.agent_idx[perm], r.agents)
    assert q_hat(shuffled, s[perm], g) == pytest.approx(base, abs=1e-12)
    relabel = rng.permutation(5)  # old index i becomes relabel[i]
    inv = np.argsort(relabel)
    renamed = Residuals(r.values, relabel[r.agent_idx], r.agents[inv])
    assert q_hat(renamed, s, g[inv]) == pytest.approx(base, abs=1e-12)


def test_residual_range_invariant():
    with pytest.raises(DataError):
        res([1.5], [0])
    with pytest.raises(DataError):
        Residuals(np.zeros(3), np.zeros(2, int), ["a"])
