"""Fitted-model container and its JSON document format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import expit

MODEL_FORMAT = "hetregion.model"
MODEL_VERSION = 1

KINDS = ("logistic", "ridge", "tree", "forest")


@dataclass(frozen=True)
class Model:
    """An immutable fitted learner.

    ``parameters`` holds plain Python/NumPy values only: ``weights`` and
    ``intercept`` for the linear kinds, node arrays for ``tree`` and a list of
    node dicts for ``forest``.
    """

    kind: str
    hyperparameters: dict
    parameters: dict
    n_features: int
    info: dict = field(default_factory=dict, compare=False)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.shape[1] != self.n_features:
            raise ValueError(f"model expects {self.n_features} features, got {X.shape[1]}")
        if self.kind in ("logistic", "ridge"):
            w = np.asarray(self.parameters["weights"], dtype=float)
            z = X @ w + float(self.parameters["intercept"])
            return expit(z) if self.kind == "logistic" else z
        if self.kind == "tree":
            return predict_nodes(self.parameters, X)
        if self.kind == "forest":
            trees = self.parameters["trees"]
            total = np.zeros(X.shape[0])
            for t in trees:
                total += predict_nodes(t, X)
            return total / len(trees)
        raise ValueError(f"unknown model kind {self.kind!r}")

    def apply(self, X) -> np.ndarray:
        """Leaf index of each row (tree models only)."""
        if self.kind != "tree":
            raise ValueError("apply() is defined for tree models only")
        return leaf_index(self.parameters, np.asarray(X, dtype=float))

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": self.kind,
            "n_features": self.n_features,
            "hyperparameters": _jsonable(self.hyperparameters),
            "parameters": _jsonable(self.parameters),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Model":
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError("not a model document")
        if doc.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model document version {doc.get('version')!r}")
        kind = doc["kind"]
        params = doc["parameters"]
        if kind == "tree":
            params = _node_arrays(params)
        elif kind == "forest":
            params = dict(params, trees=[_node_arrays(t) for t in params["trees"]])
        elif kind in ("logistic", "ridge"):
            params = dict(params, weights=np.asarray(params["weights"], dtype=float))
        return cls(kind, dict(doc["hyperparameters"]), params, int(doc["n_features"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Model":
        return cls.from_dict(json.loads(text))


NODE_KEYS = ("feature", "threshold", "left", "right", "value", "n_samples")


def _node_arrays(d: dict) -> dict:
    out = dict(d)
    for k in NODE_KEYS:
        dtype = float if k in ("threshold", "value") else np.int64
        out[k] = np.asarray(d[k], dtype=dtype)
    return out


def leaf_index(nodes: dict, X: np.ndarray) -> np.ndarray:
    feature = nodes["feature"]
    threshold = nodes["threshold"]
    left = nodes["left"]
    right = nodes["right"]
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = np.flatnonzero(feature[node] >= 0)
    while active.size:
        cur = node[active]
        f = feature[cur]
        go_left = X[active, f] <= threshold[cur]
        node[active] = np.where(go_left, left[cur], right[cur])
        active = active[feature[node[active]] >= 0]
    return node


def predict_nodes(nodes: dict, X: np.ndarray) -> np.ndarray:
    return nodes["value"][leaf_index(nodes, X)]


def _jsonable(obj: Any):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj
