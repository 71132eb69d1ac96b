import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetregion.data import (
    CsvSchema,
    Dataset,
    SplitSpec,
    concat,
    kfold_stratified,
    largest_remainder,
    load_csv,
    normalize,
    split_counts,
    split_stratified,
    write_csv,
)
from hetregion.errors import DataError


def make(n=12, agents=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    a = np.array([f"a{i % agents}" for i in range(n)])
    y = rng.integers(0, 2, n)
    return Dataset(X, a, y, ("x0", "x1"))


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_three_row_file(tmp_path):
    p = write(tmp_path, "age,agent,y\n30,j1,1\n40,j2,0\n50,j1,1\n")
    d = load_csv(p, CsvSchema("agent", "y", ("age",)))
    assert d.n_features == 1
    assert list(d.agents) == ["j1", "j2"]
    assert d.features[:, 0].tolist() == [30.0, 40.0, 50.0]
    assert d.decisions.tolist() == [1, 0, 1]


def test_bad_decision_names_row(tmp_path):
    rows = "".join(f"{i},a,{1 if i != 5 else 2}\n" for i in range(1, 7))
    p = write(tmp_path, "x,agent,y\n" + rows)
    with pytest.raises(DataError, match="row 5"):
        load_csv(p, CsvSchema("agent", "y", ("x",)))


def test_header_only_is_no_rows(tmp_path):
    p = write(tmp_path, "x,agent,y\n")
    with pytest.raises(DataError, match="no rows"):
        load_csv(p, CsvSchema("agent", "y", ("x",)))


def test_unparseable_cell_reports_row_and_column(tmp_path):
    p = write(tmp_path, "x,agent,y\n1,a,0\nabc,a,1\n")
    with pytest.raises(DataError) as exc:
        load_csv(p, CsvSchema("agent", "y", ("x",)))
    assert "row 2" in str(exc.value) and "x" in str(exc.value)


def test_missing_file_and_duplicate_roles(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "nope.csv", CsvSchema("agent", "y", ("x",)))
    with pytest.raises(DataError):
        CsvSchema("agent", "agent", ("x",))
    with pytest.raises(DataError):
        CsvSchema("agent", "y", ("x", "y"))


def test_dataset_invariants():
    with pytest.raises(DataError):
        Dataset(np.zeros((0, 1)), [], [], ("x",))
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 1)), ["a"], [0, 1], ("x",))
    with pytest.raises(DataError, match="row 1"):
        Dataset(np.zeros((2, 1)), ["a", "b"], [0, 3], ("x",))
    d = make()
    with pytest.raises(ValueError):
        d.features[0, 0] = 1.0  # read-only


def test_round_trip_12_digits(tmp_path):
    rng = np.random.default_rng(3)
    d = Dataset(rng.normal(size=(20, 3)) * 1e3, rng.choice(["p", "q"], 20), rng.integers(0, 2, 20),
                ("a", "b", "c"))
    p = tmp_path / "rt.csv"
    write_csv(d, p, row_id_col="rid")
    back = load_csv(p, CsvSchema("agent", "decision", ("a", "b", "c"), "rid"))
    np.testing.assert_allclose(back.features, d.features, rtol=1e-12)
    assert back.agent_ids.tolist() == d.agent_ids.tolist()
    assert back.decisions.tolist() == d.decisions.tolist()
    assert back.row_ids.tolist() == list(range(20))


def test_normalize_examples():
    d = Dataset(np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]), ["a"] * 3, [0, 1, 0], ("v", "c"))
    with pytest.warns(UserWarning, match="c"):
        z, stats = normalize(d)
    assert stats.mean[0] == 2.0
    assert stats.std[0] == pytest.approx(np.sqrt(2 / 3))  # population convention
    assert z.features[0, 0] == pytest.approx(-z.features[2, 0])
    assert z.features[:, 1].tolist() == [0.0, 0.0, 0.0]
    assert stats.degenerate == ("c",)
    np.testing.assert_allclose(stats.invert(z.features)[:, 0], d.features[:, 0])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_normalize_idempotent(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d)) * rng.uniform(0.1, 100, d) + rng.uniform(-50, 50, d)
    ds = Dataset(X, ["a"] * n, np.zeros(n), tuple(f"f{i}" for i in range(d)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        once, _ = normalize(ds)
        twice, _ = normalize(once)
    ok = once.features.std(axis=0) > 0
    assert np.all(np.abs(once.features[:, ok].mean(axis=0)) < 1e-9)
    np.testing.assert_allclose(twice.features[:, ok], once.features[:, ok], atol=1e-9)


def test_largest_remainder():
    assert largest_remainder(10, [0.6, 0.2, 0.2]).tolist() == [6, 2, 2]
    assert largest_remainder(1, [1, 1, 1]).tolist() == [1, 0, 0]
    assert largest_remainder(7, [0.5, 0.5]).sum() == 7


def test_split_four_rows_paper_fractions():
    c = split_counts(4, (0.375, 0.125, 0.5), (1, 1, 2))
    assert c.tolist() == [1, 1, 2]
    d = Dataset(np.arange(4.0), ["a"] * 4, [0, 1, 0, 1], ("x",))
    tr, va, te = split_stratified(d, SplitSpec((0.375, 0.125, 0.5), (1, 1, 2)))
    assert (len(tr), len(va), len(te)) == (1, 1, 2)


def test_split_identity_and_infeasible():
    d = make(9)
    tr, va, te = split_stratified(d, SplitSpec((1, 0, 0), (1, 0, 0)))
    assert len(tr) == 9 and va is None and te is None
    small = Dataset(np.zeros((2, 1)), ["solo", "solo"], [0, 1], ("x",))
    with pytest.raises(DataError, match="solo"):
        split_stratified(small, SplitSpec((0.6, 0.2, 0.2), (1, 1, 1)))


def test_split_deterministic():
    d = make(60, 4)
    a = split_stratified(d, SplitSpec(seed=5))
    b = split_stratified(d, SplitSpec(seed=5))
    c = split_stratified(d, SplitSpec(seed=6))
    for x, y in zip(a, b):
        assert x.row_ids.tolist() == y.row_ids.tolist()
    assert [len(x) for x in a] == [len(x) for x in c]
    assert any(x.row_ids.tolist() != y.row_ids.tolist() for x, y in zip(a, c))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_split_partitions_exactly(seed):
    rng = np.random.default_rng(seed)
    n_agents = int(rng.integers(1, 6))
    counts = rng.integers(3, 15, n_agents)
    agents = np.repeat([f"a{i}" for i in range(n_agents)], counts)
    n = agents.size
    d = Dataset(rng.normal(size=(n, 1)), agents, rng.integers(0, 2, n), ("x",))
    parts = [p for p in split_stratified(d, SplitSpec(seed=seed)) if p is not None]
    ids = np.concatenate([p.row_ids for p in parts])
    assert sorted(ids.tolist()) == list(range(n))
    for p in parts:  # minimum of one row per agent in each split
        assert set(p.agents) == set(d.agents)


def test_kfold_reuses_rows_only_for_small_agents():
    agents = ["big"] * 8 + ["tiny"] * 2
    d = Dataset(np.arange(10.0), agents, [0, 1] * 5, ("x",))
    folds = kfold_stratified(d, 4, seed=1)
    held = [set(va.row_ids.tolist()) for _, va in folds]
    big = [h & set(range(8)) for h in held]
    assert all(len(b) == 2 for b in big)
    assert set().union(*big) == set(range(8))
    assert all(h & {8, 9} for h in held)
    for tr, va in folds:
        assert not set(tr.row_ids.tolist()) & set(va.row_ids.tolist())


def test_concat_and_subset():
    d = make(10)
    both = concat(d.subset(np.arange(4)), d.subset(np.arange(4, 10)))
    np.testing.assert_array_equal(both.features, d.features)
    assert both.row_ids.tolist() == list(range(10))
