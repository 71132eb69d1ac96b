"""Dataset container, CSV ingestion, normalization and per-agent splitting."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._rng import rng_for
from .errors import DataError


@dataclass(frozen=True)
class Dataset:
    """Rows of ``(x, agent, y)``.

    ``row_ids`` identify rows of the originating file so that splits and folds
    can be traced back; they default to ``0..n-1``.
    """

    features: np.ndarray
    agent_ids: np.ndarray
    decisions: np.ndarray
    feature_names: tuple[str, ...]
    row_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        a = np.asarray(self.agent_ids).astype(str)
        y = np.asarray(self.decisions)
        n = X.shape[0]
        if n < 1:
            raise DataError("no rows")
        if a.shape != (n,) or y.shape != (n,):
            raise DataError(
                f"length mismatch: features {n}, agents {a.shape[0]}, decisions {y.shape[0]}"
            )
        if not np.all((y == 0) | (y == 1)):
            bad = int(np.flatnonzero((y != 0) & (y != 1))[0])
            raise DataError(f"decision at row {bad} is {y[bad]!r}, expected 0 or 1")
        names = tuple(str(s) for s in self.feature_names)
        if len(names) != X.shape[1]:
            raise DataError(f"{len(names)} feature names for {X.shape[1]} feature columns")
        ids = np.arange(n) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        if ids.shape != (n,):
            raise DataError("row_ids length mismatch")
        X.setflags(write=False)
        y = y.astype(np.int8)
        y.setflags(write=False)
        a.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "agent_ids", a)
        object.__setattr__(self, "decisions", y)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "row_ids", ids)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def agents(self) -> np.ndarray:
        """Sorted distinct agent ids; position in this array is the dense agent index."""
        return np.unique(self.agent_ids)

    def agent_index(self, agents: Sequence[str] | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(agents, idx)`` with ``agents[idx[i]] == agent_ids[i]``.

        If ``agents`` is given, every dataset agent must appear in it.
        """
        if agents is None:
            agents, idx = np.unique(self.agent_ids, return_inverse=True)
            return agents, idx.astype(np.int64)
        agents = np.asarray(agents).astype(str)
        order = np.argsort(agents, kind="stable")
        pos = np.searchsorted(agents[order], self.agent_ids)
        pos = np.clip(pos, 0, len(agents) - 1)
        found = agents[order][pos] == self.agent_ids
        if not np.all(found):
            missing = self.agent_ids[~found][0]
            raise DataError(f"agent {missing!r} not in the supplied agent list")
        return agents, order[pos].astype(np.int64)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return Dataset(
            self.features[rows],
            self.agent_ids[rows],
            self.decisions[rows],
            self.feature_names,
            self.row_ids[rows],
        )

    def with_agents(self, agent_ids) -> "Dataset":
        return Dataset(self.features, agent_ids, self.decisions, self.feature_names, self.row_ids)

    def with_features(self, features, feature_names=None) -> "Dataset":
        names = self.feature_names if feature_names is None else feature_names
        return Dataset(features, self.agent_ids, self.decisions, names, self.row_ids)

    def columns(self, names: Sequence[str]) -> np.ndarray:
        idx = [self.feature_index(n) for n in names]
        return self.features[:, idx]

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise DataError(f"unknown feature {name!r}") from None


def concat(*datasets: Dataset) -> Dataset:
    names = datasets[0].feature_names
    for d in datasets[1:]:
        if d.feature_names != names:
            raise DataError("cannot concatenate datasets with different feature columns")
    return Dataset(
        np.vstack([d.features for d in datasets]),
        np.concatenate([d.agent_ids for d in datasets]),
        np.concatenate([d.decisions for d in datasets]),
        names,
        np.concatenate([d.row_ids for d in datasets]),
    )


@dataclass(frozen=True)
class CsvSchema:
    agent_col: str
    decision_col: str
    feature_cols: tuple[str, ...]
    row_id_col: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "feature_cols", tuple(self.feature_cols))
        if not self.feature_cols:
            raise DataError("schema needs at least one feature column")
        roles = [self.agent_col, self.decision_col, *self.feature_cols]
        if self.row_id_col is not None:
            roles.append(self.row_id_col)
        seen = set()
        for r in roles:
            if r in seen:
                raise DataError(f"column {r!r} assigned to more than one role")
            seen.add(r)


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Read a UTF-8 CSV with one header row into a :class:`Dataset`.

    Row numbers in error messages are 1-based data rows (the header is row 0).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        wanted = [schema.agent_col, schema.decision_col, *schema.feature_cols]
        if schema.row_id_col is not None:
            wanted.append(schema.row_id_col)
        missing = [c for c in wanted if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}")
        col = {name: header.index(name) for name in wanted}
        feats, agents, ys, ids = [], [], [], []
        for rowno, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {rowno} has {len(row)} fields, expected {len(header)}")
            vals = []
            for name in schema.feature_cols:
                cell = row[col[name]]
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: row {rowno}, column {name!r}: cannot parse {cell!r} as a number"
                    ) from None
            cell = row[col[schema.decision_col]].strip()
            try:
                y = float(cell)
            except ValueError:
                y = None
            if y not in (0.0, 1.0):
                raise DataError(
                    f"{path}: row {rowno}, column {schema.decision_col!r}: decision {cell!r} not in {{0,1}}"
                )
            if schema.row_id_col is not None:
                try:
                    ids.append(int(row[col[schema.row_id_col]]))
                except ValueError:
                    raise DataError(f"{path}: row {rowno}: bad row id") from None
            feats.append(vals)
            agents.append(row[col[schema.agent_col]].strip())
            ys.append(int(y))
    if not ys:
        raise DataError(f"{path}: no rows")
    return Dataset(
        np.array(feats, dtype=float),
        np.array(agents, dtype=str),
        np.array(ys, dtype=np.int8),
        schema.feature_cols,
        np.array(ids, dtype=np.int64) if schema.row_id_col is not None else None,
    )


def write_csv(dataset: Dataset, path, agent_col="agent", decision_col="decision",
              row_id_col: str | None = None) -> None:
    """Write ``dataset`` with full float precision (``repr`` round-trips exactly)."""
    header = list(dataset.feature_names) + [agent_col, decision_col]
    if row_id_col is not None:
        header = [row_id_col] + header
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(dataset)):
            row = [repr(float(v)) for v in dataset.features[i]]
            row += [dataset.agent_ids[i], int(dataset.decisions[i])]
            if row_id_col is not None:
                row = [int(dataset.row_ids[i])] + row
            w.writerow(row)


@dataclass(frozen=True)
class Normalization:
    mean: np.ndarray
    std: np.ndarray
    degenerate: tuple[str, ...] = ()

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.zeros_like(X)
        ok = self.std > 0
        out[:, ok] = (X[:, ok] - self.mean[ok]) / self.std[ok]
        return out

    def invert(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.std + self.mean

    def to_dict(self) -> dict:
        return {
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
            "degenerate": list(self.degenerate),
        }


def normalize(dataset: Dataset) -> tuple[Dataset, Normalization]:
    """Standardize each feature to mean 0, population std 1.

    Constant columns become all zeros and trigger a ``UserWarning``.
    """
    X = dataset.features
    mean = X.mean(axis=0)
    std = X.std(axis=0)  # population convention (ddof=0)
    # near-constant columns count as degenerate relative to their scale
    scale = np.maximum(np.abs(mean), 1.0)
    degenerate = std <= 1e-12 * scale
    std = np.where(degenerate, 0.0, std)
    names = tuple(n for n, d in zip(dataset.feature_names, degenerate) if d)
    if names:
        warnings.warn(f"constant feature(s) mapped to zeros: {list(names)}", UserWarning, stacklevel=2)
    stats = Normalization(mean, std, names)
    return dataset.with_features(stats.apply(X)), stats


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    min_per_agent: tuple[int, int, int] = (1, 1, 1)
    seed: int = 0

    def __post_init__(self):
        f = tuple(float(v) for v in self.fractions)
        m = tuple(int(v) for v in self.min_per_agent)
        if len(f) != 3 or len(m) != 3:
            raise DataError("split needs exactly three fractions and three minima")
        if any(v < 0 for v in f) or abs(sum(f) - 1.0) > 1e-9:
            raise DataError(f"split fractions must be nonnegative and sum to 1, got {f}")
        if any(v < 0 for v in m):
            raise DataError("min_per_agent entries must be nonnegative")
        object.__setattr__(self, "fractions", f)
        object.__setattr__(self, "min_per_agent", m)


def largest_remainder(total: int, weights: Sequence[float]) -> np.ndarray:
    """Integer apportionment of ``total`` proportional to ``weights``.

    Remainder ties go to the lowest index.
    """
    w = np.asarray(weights, dtype=float)
    if total == 0:
        return np.zeros(len(w), dtype=int)
    if w.sum() <= 0:
        raise ValueError("weights must have positive sum")
    quota = total * w / w.sum()
    base = np.floor(quota + 1e-12).astype(int)
    rest = total - base.sum()
    frac = quota - base
    order = sorted(range(len(w)), key=lambda k: (-round(frac[k], 12), k))
    for k in order[:rest]:
        base[k] += 1
    return base


def split_counts(n: int, fractions: Sequence[float], minima: Sequence[int]) -> np.ndarray:
    """Per-agent split sizes: reserve the minima, then apportion the rest.

    The leftover rows are apportioned by largest remainder in proportion to how far
    each split's minimum falls short of its ideal share ``n * fraction``; when no
    split falls short the leftover follows the fractions themselves.
    """
    f = np.asarray(fractions, dtype=float)
    m = np.asarray(minima, dtype=int)
    rest = n - int(m.sum())
    if rest < 0:
        raise ValueError("infeasible")
    shortfall = np.maximum(n * f - m, 0.0)
    weights = shortfall if shortfall.sum() > 0 else f
    return m + largest_remainder(rest, weights)


def split_stratified(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset | None, Dataset | None]:
    """Split rows into train/validation/test separately within each agent.

    Splits with zero rows come back as ``None``. Rows keep their original
    relative order inside each split.
    """
    agents, idx = dataset.agent_index()
    parts: list[list[np.ndarray]] = [[], [], []]
    for k, agent in enumerate(agents):
        rows = np.flatnonzero(idx == k)
        try:
            counts = split_counts(len(rows), spec.fractions, spec.min_per_agent)
        except ValueError:
            raise DataError(
                f"agent {agent!r} has {len(rows)} rows; cannot satisfy minimum {spec.min_per_agent}"
            ) from None
        perm = rng_for(spec.seed, k).permutation(rows)
        edges = np.cumsum(counts)[:-1]
        for part, chunk in zip(parts, np.split(perm, edges)):
            part.append(chunk)
    out = []
    for part in parts:
        rows = np.sort(np.concatenate(part)) if part else np.array([], dtype=int)
        out.append(dataset.subset(rows) if len(rows) else None)
    return tuple(out)


def split_report(splits: Sequence[Dataset | None]) -> dict:
    """Per-split row and agent counts, JSON-ready."""
    names = ("train", "validation", "test")
    out = {}
    for name, d in zip(names, splits):
        if d is None:
            out[name] = {"rows": 0, "agents": 0}
        else:
            out[name] = {"rows": len(d), "agents": int(len(d.agents))}
    return out


def kfold_stratified(dataset: Dataset, k: int, seed: int = 0) -> list[tuple[Dataset, Dataset]]:
    """``k`` (train, held-out) folds, balanced within each agent.

    Each agent's rows are shuffled and dealt round-robin into the ``k`` held-out
    folds. An agent with fewer than ``k`` rows has rows reused so that every
    held-out fold holds at least one of its rows; those reused rows are the only
    overlap between held-out folds.
    """
    if k < 2:
        raise DataError("need at least 2 folds")
    agents, idx = dataset.agent_index()
    held: list[list[int]] = [[] for _ in range(k)]
    for a in range(len(agents)):
        rows = rng_for(seed, a).permutation(np.flatnonzero(idx == a))
        if len(rows) >= k:
            for j, r in enumerate(rows):
                held[j % k].append(int(r))
        else:
            for j in range(k):
                held[j].append(int(rows[j % len(rows)]))
    folds = []
    n = len(dataset)
    for j in range(k):
        mask = np.zeros(n, dtype=bool)
        mask[held[j]] = True
        folds.append((dataset.subset(~mask), dataset.subset(mask)))
    return folds


def parse_fractions(text: str) -> tuple[float, float, float]:
    vals = tuple(float(v) for v in text.split(","))
    if len(vals) != 3:
        raise DataError(f"expected three comma-separated fractions, got {text!r}")
    return vals

