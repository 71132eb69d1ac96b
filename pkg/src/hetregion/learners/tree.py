"""CART regression/classification trees built greedily on numeric features."""

from __future__ import annotations

import math

import numpy as np

from ..errors import DataError
from .model import Model


def _tie_tol(v):
    return 1e-10 * max(1.0, abs(float(v)))


def best_split(x: np.ndarray, y: np.ndarray, min_samples_leaf: int, criterion: str = "mse"):
    """Best threshold on one feature.

    Returns ``(decrease, threshold)`` or ``None`` when no admissible split exists.
    ``decrease`` is the drop in total (sample-weighted) impurity. Among equal
    decreases the lowest threshold wins.
    """
    n = x.shape[0]
    if n < 2 * min_samples_leaf:
        return None
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order]
    cs = np.cumsum(ys)
    cs2 = np.cumsum(ys * ys)
    # candidate i: left = first i+1 sorted rows
    lo = min_samples_leaf - 1
    hi = n - min_samples_leaf
    if hi <= lo:
        return None
    i = np.arange(lo, hi)
    valid = xs[i] < xs[i + 1]
    if not valid.any():
        return None
    i = i[valid]
    nl = i + 1.0
    nr = n - nl
    sl = cs[i]
    sr = cs[-1] - sl
    if criterion == "gini":
        # binary targets: n * gini = 2 * (count1 - count1^2 / n)
        imp_l = 2.0 * (sl - sl * sl / nl)
        imp_r = 2.0 * (sr - sr * sr / nr)
        total = 2.0 * (cs[-1] - cs[-1] ** 2 / n)
    else:
        imp_l = cs2[i] - sl * sl / nl
        imp_r = (cs2[-1] - cs2[i]) - sr * sr / nr
        total = cs2[-1] - cs[-1] ** 2 / n
    dec = total - imp_l - imp_r
    # cumulative sums round differently per threshold; treat near-equal as tied
    k = int(np.argmax(dec >= dec.max() - _tie_tol(dec.max())))
    j = i[k]
    thr = 0.5 * (xs[j] + xs[j + 1])
    if not xs[j] <= thr < xs[j + 1]:
        thr = xs[j]
    return float(dec[k]), float(thr)


def fit_tree(
    X,
    y,
    min_samples_leaf: int = 1,
    max_depth: int | None = None,
    *,
    criterion: str = "mse",
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> Model:
    """Grow a CART tree.

    Splits maximize the impurity decrease (variance, or Gini for binary targets)
    over every (feature, midpoint threshold) pair; ties go to the lowest feature
    index, then the lowest threshold. Leaves store the mean target.

    ``max_features`` draws that many candidate features per split from ``rng``
    (used by random forests).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if y.shape != (n,):
        raise DataError("target length does not match rows")
    min_samples_leaf = int(min_samples_leaf)
    if min_samples_leaf < 1:
        raise DataError("min_samples_leaf must be a positive integer")
    if n < min_samples_leaf:
        raise DataError(f"min_samples_leaf={min_samples_leaf} exceeds the {n} available rows")
    if criterion not in ("mse", "gini"):
        raise DataError(f"unknown criterion {criterion!r}")
    if criterion == "gini" and not np.all((y == 0) | (y == 1)):
        raise DataError("gini criterion needs binary targets")
    if max_features is not None and rng is None:
        raise DataError("max_features needs an rng")

    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[rows].mean()))
        count.append(len(rows))
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, rows, depth = stack.pop()
        yr = y[rows]
        if max_depth is not None and depth >= max_depth:
            continue
        if len(rows) < 2 * min_samples_leaf or yr.max() == yr.min():
            continue
        if max_features is None:
            cands = range(d)
        else:
            cands = np.sort(rng.choice(d, size=min(max_features, d), replace=False))
        best = None
        for f in cands:
            res = best_split(X[rows, f], yr, min_samples_leaf, criterion)
            if res is not None and res[0] > 1e-12 and (best is None or res[0] > best[0] + _tie_tol(best[0])):
                best = (res[0], int(f), res[1])
        if best is None:
            continue
        _, f, thr = best
        go_left = X[rows, f] <= thr
        lrows, rrows = rows[go_left], rows[~go_left]
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        # push right first so the left subtree is numbered first
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))

    params = {
        "feature": np.array(feature, dtype=np.int64),
        "threshold": np.array(threshold, dtype=float),
        "left": np.array(left, dtype=np.int64),
        "right": np.array(right, dtype=np.int64),
        "value": np.array(value, dtype=float),
        "n_samples": np.array(count, dtype=np.int64),
    }
    hyper = {"min_samples_leaf": min_samples_leaf, "max_depth": max_depth, "criterion": criterion}
    return Model("tree", hyper, params, d)


def sqrt_features(d: int) -> int:
    return max(1, math.ceil(math.sqrt(d)))


def render_rules(model: Model, feature_names, threshold: float | None = None, *,
                 to_raw=None, indent: str = "  ") -> str:
    """Indented if/else rendering of a tree; leaves at or above ``threshold`` are marked.

    ``to_raw(feature_index, value)`` maps split thresholds back to original units.
    """
    if model.kind != "tree":
        raise ValueError("rule rendering needs a tree model")
    p = model.parameters
    lines = []

    def walk(node, depth):
        pad = indent * depth
        f = int(p["feature"][node])
        if f < 0:
            v = float(p["value"][node])
            mark = ""
            if threshold is not None:
                mark = "  <-- IN REGION" if v >= threshold else ""
            lines.append(f"{pad}leaf {node}: h = {v:.4f} (n={int(p['n_samples'][node])}){mark}")
            return
        name = feature_names[f]
        thr = float(p["threshold"][node])
        if to_raw is not None:
            thr = to_raw(f, thr)
        lines.append(f"{pad}if {name} <= {thr:.6g}:")
        walk(int(p["left"][node]), depth + 1)
        lines.append(f"{pad}else:  # {name} > {thr:.6g}")
        walk(int(p["right"][node]), depth + 1)

    walk(0, 0)
    return "\n".join(lines)


def region_paths(model: Model, feature_names, threshold: float, *, to_raw=None) -> list[str]:
    """Conjunctions describing each leaf with value >= ``threshold``."""
    p = model.parameters
    out = []

    def walk(node, conds):
        f = int(p["feature"][node])
        if f < 0:
            if float(p["value"][node]) >= threshold:
                out.append(" AND ".join(conds) if conds else "(all rows)")
            return
        name = feature_names[f]
        thr = float(p["threshold"][node])
        if to_raw is not None:
            thr = to_raw(f, thr)
        walk(int(p["left"][node]), conds + [f"{name} <= {thr:.6g}"])
        walk(int(p["right"][node]), conds + [f"{name} > {thr:.6g}"])

    walk(0, [])
    return out
