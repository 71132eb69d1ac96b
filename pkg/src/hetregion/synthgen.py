"""Semi-synthetic and synthetic data with a known region of disagreement.

Agents are assigned to cases uniformly at random. Every agent follows the
logistic policy of its group::

    logit P(Y = 1 | x, group g) = base(x) + coef[g] * 1{x in region}

so groups agree outside the region. The truth object stores the per-row
probabilities under every group policy, which is all that is needed to
evaluate counterfactual quantities without re-running the generator.
"""

from __future__ import annotations

import json
import operator
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from ._rng import rng_for
from .data import CsvSchema, Dataset, load_csv
from .errors import ConfigError, DataError, EmptyRegionError
from .learners import fit_logistic

TRUTH_FORMAT = "hetregion.truth"
TRUTH_VERSION = 1

SYNTHETIC_FEATURES = (
    "age",
    "drug_possession",
    "misdemeanor",
    "priors_count",
    "juv_fel_count",
    "juv_misd_count",
)

# logit of the shared base policy on the synthetic features
DEFAULT_BASE = {
    "intercept": 0.5,
    "age": -0.04,
    "drug_possession": 0.2,
    "misdemeanor": -0.3,
    "priors_count": 0.15,
    "juv_fel_count": 0.4,
    "juv_misd_count": 0.3,
}

DRUG_RULE = "drug_possession == 1"
MISDEMEANOR_RULE = "misdemeanor == 1 & age <= 35"
PRESET_RULES = {"drug": DRUG_RULE, "misdemeanor": MISDEMEANOR_RULE}


def synthetic_features(n: int, rng: np.random.Generator, drug_rate: float = 0.20):
    """Recidivism-style case features.

    age: 18 + Gamma(2, 8) years; drug_possession: Bernoulli(``drug_rate``);
    misdemeanor: Bernoulli(0.34); priors_count: NegBin(1, 0.25) (mean 3);
    juv_fel_count: Poisson(0.1); juv_misd_count: Poisson(0.15).
    With these rates ``MISDEMEANOR_RULE`` covers about 21% of cases.
    """
    age = 18.0 + rng.gamma(2.0, 8.0, size=n)
    drug = (rng.random(n) < drug_rate).astype(float)
    misd = (rng.random(n) < 0.34).astype(float)
    priors = rng.negative_binomial(1, 0.25, size=n).astype(float)
    juv_fel = rng.poisson(0.1, size=n).astype(float)
    juv_misd = rng.poisson(0.15, size=n).astype(float)
    X = np.column_stack([np.round(age, 1), drug, misd, priors, juv_fel, juv_misd])
    return X, SYNTHETIC_FEATURES


_OPS = {
    "==": operator.eq,
    "!=": operator.ne,
    "<=": operator.le,
    ">=": operator.ge,
    "<": operator.lt,
    ">": operator.gt,
}
_COND = re.compile(r"^\s*([A-Za-z_][\w.]*)\s*(==|!=|<=|>=|<|>)\s*(-?[\d.eE+-]+)\s*$")


@dataclass(frozen=True)
class RegionRule:
    """Conjunction of ``feature op value`` conditions, e.g. ``"misdemeanor == 1 & age <= 35"``."""

    conditions: tuple[tuple[str, str, float], ...]

    @classmethod
    def parse(cls, text: str) -> "RegionRule":
        text = PRESET_RULES.get(text, text)
        conds = []
        for part in re.split(r"\s*(?:&|\band\b)\s*", text.strip()):
            m = _COND.match(part)
            if not m:
                raise ConfigError(f"cannot parse region condition {part!r}")
            conds.append((m.group(1), m.group(2), float(m.group(3))))
        if not conds:
            raise ConfigError("empty region rule")
        return cls(tuple(conds))

    def __str__(self) -> str:
        return " & ".join(f"{f} {op} {v:g}" for f, op, v in self.conditions)

    @property
    def features(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(f for f, _, _ in self.conditions))

    def mask(self, X: np.ndarray, names: Sequence[str]) -> np.ndarray:
        names = list(names)
        out = np.ones(X.shape[0], dtype=bool)
        for f, op, v in self.conditions:
            if f not in names:
                raise ConfigError(f"region rule refers to unknown feature {f!r}")
            out &= _OPS[op](X[:, names.index(f)], v)
        return out


@dataclass(frozen=True)
class SeedTable:
    """Reuse the feature rows of an existing CSV; its decisions (if any) fit the base policy."""

    path: str
    feature_cols: tuple[str, ...]
    agent_col: str | None = None
    decision_col: str | None = None


@dataclass(frozen=True)
class SyntheticConfig:
    n_rows: int = 4500
    n_agents: int = 40
    region_rule: str = DRUG_RULE
    group_coefficients: tuple[float, ...] = (0.0, 1.5)
    base_coefficients: Mapping[str, float] | None = None
    feature_source: SeedTable | None = None
    group_assignment: Mapping[str, int] | None = None
    drug_rate: float = 0.20
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "group_coefficients", tuple(float(c) for c in self.group_coefficients))
        if self.n_agents < 1:
            raise ConfigError("n_agents must be positive")
        if len(self.group_coefficients) < 1:
            raise ConfigError("need at least one group coefficient")
        if self.n_rows < 1 and self.feature_source is None:
            raise ConfigError("n_rows must be positive")

    def replace(self, **changes) -> "SyntheticConfig":
        d = dict(self.__dict__)
        d.update(changes)
        return SyntheticConfig(**d)

    def to_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "n_agents": self.n_agents,
            "region_rule": str(RegionRule.parse(self.region_rule)),
            "group_coefficients": list(self.group_coefficients),
            "base_coefficients": None if self.base_coefficients is None else dict(self.base_coefficients),
            "feature_source": None if self.feature_source is None else dict(self.feature_source.__dict__),
            "drug_rate": self.drug_rate,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class SyntheticTruth:
    """Ground truth for a generated dataset.

    ``group_probs[i, g]`` is ``P(Y = 1 | x_i)`` under group ``g``'s policy.
    ``assignment`` is ``None`` for uniform assignment over ``agents`` or an
    ``(n_rows, n_agents)`` matrix of ``P(A = a | x_i)``. ``weights`` (optional)
    turn the rows into a weighted population, e.g. enumerated contexts.
    """

    region: np.ndarray
    agents: tuple[str, ...]
    agent_groups: dict
    group_probs: np.ndarray
    group_coefficients: tuple[float, ...] = ()
    assignment: np.ndarray | None = None
    weights: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_groups(self) -> int:
        return self.group_probs.shape[1]

    def agent_group_array(self) -> np.ndarray:
        return np.array([self.agent_groups[a] for a in self.agents], dtype=np.int64)

    def assignment_matrix(self) -> np.ndarray:
        n = self.group_probs.shape[0]
        if self.assignment is None:
            return np.full((n, len(self.agents)), 1.0 / len(self.agents))
        return np.asarray(self.assignment, dtype=float)

    def agent_probs(self) -> np.ndarray:
        """``(n_rows, n_agents)`` matrix of ``E[Y(a) | x_i]``."""
        return self.group_probs[:, self.agent_group_array()]

    def oracle_mean(self) -> np.ndarray:
        """``E[Y | x_i] = sum_a P(a | x_i) E[Y(a) | x_i]`` for every row."""
        return np.sum(self.assignment_matrix() * self.agent_probs(), axis=1)

    def to_dict(self) -> dict:
        return {
            "format": TRUTH_FORMAT,
            "version": TRUTH_VERSION,
            "region": [int(v) for v in self.region],
            "agents": list(self.agents),
            "agent_groups": {a: int(g) for a, g in self.agent_groups.items()},
            "group_coefficients": list(self.group_coefficients),
            "group_probs": [[float(v) for v in row] for row in self.group_probs],
            "assignment": "uniform" if self.assignment is None else np.asarray(self.assignment).tolist(),
            "weights": None if self.weights is None else [float(w) for w in self.weights],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticTruth":
        if d.get("format") != TRUTH_FORMAT:
            raise DataError("not a truth document")
        assignment = d.get("assignment", "uniform")
        return cls(
            np.asarray(d["region"], dtype=bool),
            tuple(d["agents"]),
            {a: int(g) for a, g in d["agent_groups"].items()},
            np.asarray(d["group_probs"], dtype=float),
            tuple(d.get("group_coefficients", ())),
            None if assignment == "uniform" else np.asarray(assignment, dtype=float),
            None if d.get("weights") is None else np.asarray(d["weights"], dtype=float),
            d.get("meta", {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SyntheticTruth":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class OracleOutcome:
    """Exact ``E[Y | x]`` for data from :func:`generate` (uniform assignment)."""

    base_weights: np.ndarray
    intercept: float
    rule: RegionRule
    feature_names: tuple[str, ...]
    group_coefficients: tuple[float, ...]
    group_shares: tuple[float, ...]

    def group_probs(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        base = X @ self.base_weights + self.intercept
        region = self.rule.mask(X, self.feature_names).astype(float)
        return expit(base[:, None] + region[:, None] * np.asarray(self.group_coefficients)[None, :])

    def predict(self, X) -> np.ndarray:
        return self.group_probs(X) @ np.asarray(self.group_shares)


def _base_policy(config: SyntheticConfig, X, names, seed_decisions):
    if config.base_coefficients is not None:
        coefs = dict(config.base_coefficients)
    elif seed_decisions is not None:
        m = fit_logistic(X, seed_decisions, 1.0)
        coefs = {n: float(w) for n, w in zip(names, m.parameters["weights"])}
        coefs["intercept"] = m.parameters["intercept"]
    elif tuple(names) == SYNTHETIC_FEATURES:
        coefs = dict(DEFAULT_BASE)
    else:
        raise ConfigError("base_coefficients are required when the seed table has no decisions")
    unknown = set(coefs) - set(names) - {"intercept"}
    if unknown:
        raise ConfigError(f"base coefficients for unknown features: {sorted(unknown)}")
    w = np.array([float(coefs.get(n, 0.0)) for n in names])
    return w, float(coefs.get("intercept", 0.0)), coefs


def agent_names(n_agents: int) -> tuple[str, ...]:
    width = max(3, len(str(n_agents - 1)))
    return tuple(f"agent_{i:0{width}d}" for i in range(n_agents))


def balanced_groups(n_agents: int, n_groups: int, rng: np.random.Generator) -> np.ndarray:
    """Random group labels with sizes differing by at most one."""
    perm = rng.permutation(n_agents)
    groups = np.empty(n_agents, dtype=np.int64)
    groups[perm] = np.arange(n_agents) * n_groups // n_agents
    return groups


def generate(config: SyntheticConfig) -> tuple[Dataset, SyntheticTruth, OracleOutcome]:
    """Draw a dataset with its ground truth and exact outcome oracle.

    Independent random streams (keyed off ``config.seed``) drive features,
    group labels, case assignment and decisions.
    """
    rule = RegionRule.parse(config.region_rule)
    seed_decisions = None
    if config.feature_source is None:
        X, names = synthetic_features(config.n_rows, rng_for(config.seed, 0), config.drug_rate)
    else:
        src = config.feature_source
        X, names, seed_decisions = _load_seed(src)
    n = X.shape[0]
    region = rule.mask(X, names)
    if not region.any() or region.all():
        raise DataError(f"region rule {rule} selects {int(region.sum())} of {n} rows; need a proper subset")

    coefs = config.group_coefficients
    n_groups = len(coefs)
    agents = agent_names(config.n_agents)
    if config.group_assignment is not None:
        missing = set(agents) - set(config.group_assignment)
        if missing:
            raise ConfigError(f"group_assignment misses agents {sorted(missing)[:3]}")
        groups = np.array([int(config.group_assignment[a]) for a in agents])
        if groups.min() < 0 or groups.max() >= n_groups:
            raise ConfigError(f"group labels must lie in 0..{n_groups - 1} for {n_groups} coefficients")
    else:
        groups = balanced_groups(config.n_agents, n_groups, rng_for(config.seed, 1))

    w, b, base_coefs = _base_policy(config, X, names, seed_decisions)
    shares = np.bincount(groups, minlength=n_groups) / config.n_agents
    oracle = OracleOutcome(w, b, rule, tuple(names), tuple(coefs), tuple(float(s) for s in shares))
    probs = oracle.group_probs(X)

    row_agent = rng_for(config.seed, 2).integers(0, config.n_agents, size=n)
    p_row = probs[np.arange(n), groups[row_agent]]
    y = (rng_for(config.seed, 3).random(n) < p_row).astype(np.int8)

    dataset = Dataset(X, np.asarray(agents)[row_agent], y, names)
    truth = SyntheticTruth(
        region=region,
        agents=agents,
        agent_groups={a: int(g) for a, g in zip(agents, groups)},
        group_probs=probs,
        group_coefficients=tuple(coefs),
        meta={
            "region_rule": str(rule),
            "region_fraction": float(region.mean()),
            "base_coefficients": base_coefs,
            "config": config.to_dict(),
        },
    )
    return dataset, truth, oracle


def _load_seed(src: SeedTable):
    import csv

    with Path(src.path).open(newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh))
    agent_col = src.agent_col
    if agent_col is None:
        # load_csv needs an agent column; fall back to any spare column
        spare = [h for h in header if h not in src.feature_cols and h != src.decision_col]
        if not spare:
            raise DataError("seed table needs an agent column or a spare column")
        agent_col = spare[0]
    if src.decision_col is not None:
        d = load_csv(src.path, CsvSchema(agent_col, src.decision_col, src.feature_cols))
        return d.features, d.feature_names, d.decisions.astype(float)
    X, names = _load_features_only(src.path, src.feature_cols)
    return X, names, None


def _load_features_only(path, cols):
    import csv

    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for i, row in enumerate(reader, start=1):
            try:
                rows.append([float(row[c]) for c in cols])
            except (KeyError, ValueError):
                raise DataError(f"{path}: row {i}: bad or missing feature value") from None
    if not rows:
        raise DataError(f"{path}: no rows")
    return np.array(rows), tuple(cols)


def multigroup_coefficients(n_groups: int, low: float = -1.5, high: float = 1.5) -> tuple[float, ...]:
    if n_groups < 2:
        raise ConfigError("n_groups must be at least 2")
    return tuple(float(v) for v in np.linspace(low, high, n_groups))


def generate_multigroup(config: SyntheticConfig, n_groups: int, low: float = -1.5, high: float = 1.5):
    """:func:`generate` with ``n_groups`` equally spaced region coefficients on ``[low, high]``."""
    return generate(config.replace(group_coefficients=multigroup_coefficients(n_groups, low, high)))


def counterfactual_q(truth: SyntheticTruth, s, g) -> float:
    """Population objective from the oracle.

    ``sum_{a: g(a)=1} P(A=a | S) E[Y(a) - Y(pi) | A=a, S]``, evaluated over the
    truth's rows (weighted if the truth carries weights) as
    ``E_S[ sum_a pi(a|x) g(a) (E[Y(a)|x] - E[Y|x]) ]``.
    """
    s = np.asarray(s, dtype=bool)
    if s.shape != truth.region.shape:
        raise DataError("membership length does not match truth rows")
    if not s.any():
        raise EmptyRegionError()
    garr = np.array([int(g[a]) for a in truth.agents], dtype=float) if isinstance(g, Mapping) else np.asarray(g, float)
    P = truth.assignment_matrix()[s]
    mu = truth.agent_probs()[s]
    ybar = np.sum(P * mu, axis=1, keepdims=True)
    contrib = np.sum(P * garr[None, :] * (mu - ybar), axis=1)
    w = np.ones(contrib.shape) if truth.weights is None else np.asarray(truth.weights, float)[s]
    return float(np.sum(w * contrib) / np.sum(w))


@dataclass(frozen=True)
class DiscreteDGP:
    """Finite population of contexts with per-agent policies and assignment.

    Context ``k`` is encoded by its binary digits as features. ``policies[k, a]``
    is ``E[Y(a) | x_k]`` and ``assignment[k, a]`` is ``P(A = a | x_k)``.
    """

    context_probs: np.ndarray
    policies: np.ndarray
    assignment: np.ndarray

    @property
    def n_contexts(self) -> int:
        return len(self.context_probs)

    @property
    def n_bits(self) -> int:
        return max(1, int(np.ceil(np.log2(self.n_contexts))))

    @property
    def agents(self) -> tuple[str, ...]:
        return agent_names(self.policies.shape[1])

    def context_features(self) -> np.ndarray:
        k = np.arange(self.n_contexts)
        return ((k[:, None] >> np.arange(self.n_bits)[None, :]) & 1).astype(float)

    def context_of(self, X) -> np.ndarray:
        X = np.asarray(X)
        return (X.astype(np.int64) << np.arange(self.n_bits)[None, :]).sum(axis=1)

    def oracle_table(self) -> np.ndarray:
        return np.sum(self.assignment * self.policies, axis=1)

    def predict(self, X) -> np.ndarray:
        """Exact ``E[Y | x]``; lets the DGP act as the outcome model."""
        return self.oracle_table()[self.context_of(X)]

    def truth(self) -> SyntheticTruth:
        """Truth over the enumerated contexts, weighted by their probabilities."""
        agents = self.agents
        return SyntheticTruth(
            region=np.ones(self.n_contexts, dtype=bool),
            agents=agents,
            agent_groups={a: i for i, a in enumerate(agents)},
            group_probs=np.asarray(self.policies, dtype=float),
            assignment=np.asarray(self.assignment, dtype=float),
            weights=np.asarray(self.context_probs, dtype=float),
        )

    def sample(self, n: int, seed: int = 0) -> tuple[Dataset, np.ndarray]:
        rng = rng_for(seed, 0)
        ctx = rng.choice(self.n_contexts, size=n, p=self.context_probs)
        # inverse-CDF draw of the agent given the context
        cdf = np.cumsum(self.assignment, axis=1)[ctx]
        u = rng_for(seed, 1).random(n)
        agent = np.minimum((u[:, None] > cdf).sum(axis=1), self.policies.shape[1] - 1)
        p = self.policies[ctx, agent]
        y = (rng_for(seed, 2).random(n) < p).astype(np.int8)
        X = self.context_features()[ctx]
        names = tuple(f"bit{j}" for j in range(self.n_bits))
        return Dataset(X, np.asarray(self.agents)[agent], y, names), ctx

    @classmethod
    def random(cls, n_contexts: int = 16, n_agents: int = 4, seed: int = 0,
               overlap: bool = False) -> "DiscreteDGP":
        """Random DGP; without ``overlap`` some agents never see some contexts."""
        rng = rng_for(seed, 99)
        probs = rng.dirichlet(np.ones(n_contexts))
        policies = rng.uniform(0.1, 0.9, size=(n_contexts, n_agents))
        assign = rng.dirichlet(np.ones(n_agents), size=n_contexts)
        if not overlap:
            # each context hides one agent, keeping at least two visible
            hidden = rng.integers(0, n_agents, size=n_contexts)
            assign[np.arange(n_contexts), hidden] = 0.0
            assign /= assign.sum(axis=1, keepdims=True)
        return cls(probs, policies, assign)
