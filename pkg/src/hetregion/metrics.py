"""Scoring rules shared by tuning, baselines and evaluation."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .errors import DataError


def auc(scores, labels) -> float:
    """ROC AUC as the Mann-Whitney rank statistic; tied scores count one half."""
    s = np.asarray(scores, dtype=float)
    t = np.asarray(labels).astype(bool)
    if s.shape != t.shape:
        raise DataError("scores and labels differ in length")
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC is undefined when the truth has a single class")
    ranks = rankdata(s)  # average ranks for ties
    u = ranks[t].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def mse(pred, target) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    return float(np.mean((pred - target) ** 2))


def precision_recall(member, truth) -> tuple[float, float]:
    """Precision and recall of a boolean selection; 0 when undefined."""
    m = np.asarray(member, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    tp = float(np.sum(m & t))
    prec = tp / m.sum() if m.any() else 0.0
    rec = tp / t.sum() if t.any() else 0.0
    return float(prec), float(rec)
