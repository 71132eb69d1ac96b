"""Command-line entry point: ``hetregion <subcommand> [options]``.

Options may also come from ``--config FILE``, a flat ``key = value`` file whose
keys are option names (``n-random`` or ``n_random``); flags on the command line
win. Reports are JSON with the resolved configuration and its hash embedded;
tables meant for plotting are CSV.

Exit codes: 0 success, 2 configuration error, 3 data or I/O error,
4 computation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import synthgen
from .baselines import direct_baseline, load_scores, partition_accuracy, region_metrics
from .data import CsvSchema, Dataset, SplitSpec, load_csv, normalize, parse_fractions, split_report, split_stratified, write_csv
from .discovery import DiscoverConfig, DiscoveryResult, Region, config_hash, discover
from .errors import ComputationError, ConfigError, DataError
from .learners import KINDS, LearnerConfig, Model, region_paths, render_rules
from .tuning import tune_beta
from .validation import benchmark_region, stability, stability_folds

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_COMPUTE = 0, 2, 3, 4

_REQUIRED = {
    "generate": ("out", "truth_out"),
    "discover": ("data",),
    "tune-beta": ("data",),
    "validate": ("data",),
    "baseline": ("data",),
    "evaluate": ("truth",),
    "stability": ("data",),
}

# options that never change results; kept out of the embedded config
_NOT_CONFIG = {"command", "config", "jobs", "out", "truth_out", "model_out", "rules_out",
               "curve_out", "scores_out", "func"}


def _floats(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


def _names(text) -> list[str]:
    if text is None or text == "":
        return []
    return [v.strip() for v in str(text).split(",") if v.strip()]


def beta_grid(text: str) -> list[float]:
    """``"0.02:0.42:0.04"`` (inclusive range) or a comma list."""
    if ":" in text:
        try:
            lo, hi, step = (float(v) for v in text.split(":"))
        except ValueError:
            raise ConfigError(f"bad beta range {text!r}; expected lo:hi:step") from None
        if step <= 0 or hi < lo:
            raise ConfigError(f"bad beta range {text!r}")
        n = int(round((hi - lo) / step)) + 1
        return [round(lo + i * step, 10) for i in range(n)]
    return _floats(text)


def read_config_file(path) -> dict:
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for no, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{no}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


# ---------------------------------------------------------------- data access

def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", default=None, help="input CSV")
    p.add_argument("--agent-col", default="agent")
    p.add_argument("--decision-col", default="decision")
    p.add_argument("--feature-cols", default=None, help="comma list; default: every other column")
    p.add_argument("--row-id-col", default=None, help="default: 'row_id' if present")
    p.add_argument("--normalize", action="store_true", help="standardize features first")


def _split_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--split", default="0.6,0.2,0.2", help="train,validation,test fractions")
    p.add_argument("--min-per-agent", default="1,1,1", help="per-agent minimum rows in each split")


def _learner_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beta", type=float, default=0.25)
    p.add_argument("--outcome", default="logistic", choices=KINDS)
    p.add_argument("--region", default="ridge", choices=KINDS)
    p.add_argument("--tune", action="store_true", help="grid-tune both learners on validation data")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--exclude", default="", help="features kept out of the region model")
    p.add_argument("--sample-split", action="store_true")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="flat key = value file; flags override it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)


def load_dataset(args) -> tuple[Dataset, object]:
    path = Path(args.data)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            header = [h.strip() for h in next(csv.reader(fh))]
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    except StopIteration:
        raise DataError(f"{path}: empty file") from None
    row_id = args.row_id_col
    if row_id is None and "row_id" in header:
        row_id = "row_id"
    feats = _names(args.feature_cols) or [
        h for h in header if h not in (args.agent_col, args.decision_col, row_id)
    ]
    d = load_csv(path, CsvSchema(args.agent_col, args.decision_col, tuple(feats), row_id))
    stats = None
    if args.normalize:
        d, stats = normalize(d)
    return d, stats


def _splits(args, d: Dataset):
    spec = SplitSpec(parse_fractions(args.split), tuple(int(v) for v in _names(args.min_per_agent)),
                     args.seed)
    tr, va, te = split_stratified(d, spec)
    return tr, va, te


def discover_config(args) -> DiscoverConfig:
    outcome = LearnerConfig(args.outcome)
    region = LearnerConfig(args.region)
    if args.tune:
        outcome, region = outcome.with_default_grid(), region.with_default_grid()
    return DiscoverConfig(args.beta, outcome, region, args.max_iter, tuple(_names(args.exclude)),
                          args.sample_split, args.seed)


def resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_CONFIG}


def write_json(path, doc) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def write_table(path, rows: list[dict]) -> None:
    if not rows:
        return
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def report(args, body: dict) -> dict:
    cfg = resolved(args)
    return {"command": args.command, "config": cfg, "config_hash": config_hash(cfg), **body}


# ------------------------------------------------------------------ rendering

def describe_region(result: DiscoveryResult, d: Dataset, stats=None) -> str:
    region = result.region
    names = region.feature_names
    if d is not None and np.all(region.scores(d.features) >= region.threshold):
        head = "region covers every row"
    else:
        head = f"region: h(x) >= {region.threshold:.6g}"
    to_raw = None
    if stats is not None:
        cols = region.cols
        to_raw = lambda f, v: float(v * stats.std[cols[f]] + stats.mean[cols[f]])  # noqa: E731
    m = region.model
    if m.kind == "tree":
        body = render_rules(m, names, region.threshold, to_raw=to_raw)
        paths = region_paths(m, names, region.threshold, to_raw=to_raw)
        return "\n".join([head, body, "", "region paths:"] + [f"  {p}" for p in paths])
    if m.kind in ("ridge", "logistic"):
        w = m.parameters["weights"]
        terms = [f"  {w_i:+.4g} * {n}" for w_i, n in zip(w, names)]
        return "\n".join([head, f"h(x) = {m.parameters['intercept']:.4g}"] + terms)
    return f"{head}\n({m.kind} with {m.hyperparameters.get('n_trees')} trees)"


def _result_doc(result: DiscoveryResult, stats=None) -> dict:
    doc = result.to_dict()
    if stats is not None:
        doc["normalization"] = stats.to_dict()
    return doc


def load_result(path) -> tuple[Model, Region, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        doc = doc.get("result", doc)
        return Model.from_dict(doc["outcome_model"]), Region.from_dict(doc["region"]), doc["grouping"]
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"{path}: not a discovery model file ({exc})") from None


# ---------------------------------------------------------------- subcommands

def cmd_generate(args) -> int:
    source = None
    if args.seed_csv:
        cols = _names(args.seed_features)
        if not cols:
            raise ConfigError("--seed-features is required with --seed-csv")
        source = synthgen.SeedTable(args.seed_csv, tuple(cols), args.seed_agent_col, args.seed_decision_col)
    coefs = tuple(_floats(args.coefficients))
    if args.n_groups:
        coefs = synthgen.multigroup_coefficients(args.n_groups)
    cfg = synthgen.SyntheticConfig(
        n_rows=args.n_rows, n_agents=args.n_agents, region_rule=args.rule,
        group_coefficients=coefs, feature_source=source, drug_rate=args.drug_rate, seed=args.seed,
    )
    d, truth, _ = synthgen.generate(cfg)
    try:
        write_csv(d, args.out, row_id_col="row_id")
        truth.save(args.truth_out)
    except OSError as exc:
        raise DataError(f"cannot write output: {exc}") from None
    print(f"wrote {len(d)} rows, {cfg.n_agents} agents, region fraction "
          f"{truth.meta['region_fraction']:.3f} -> {args.out}, {args.truth_out}")
    return EXIT_OK


def cmd_discover(args) -> int:
    d, stats = load_dataset(args)
    tr, va, te = _splits(args, d)
    result = discover(tr, discover_config(args), validation=va, jobs=args.jobs)
    body = {"result": _result_doc(result, stats), "splits": split_report([tr, va, te])}
    if te is not None:
        body["test_region_size"] = int((result.region.scores(te.features) >= result.region.threshold).sum())
    write_json(args.out, report(args, body))
    text = describe_region(result, tr, stats)
    if args.rules_out:
        Path(args.rules_out).write_text(text + "\n", encoding="utf-8")
    if args.scores_out and te is not None:
        write_table(args.scores_out, [
            {"row_id": int(r), "score": float(s), "member": int(s >= result.region.threshold)}
            for r, s in zip(te.row_ids, result.region.scores(te.features))
        ])
    if args.out not in (None, "-"):
        print(text)
    return EXIT_OK


def cmd_tune_beta(args) -> int:
    d, _ = load_dataset(args)
    tr, va, _ = _splits(args, d)
    scan = tune_beta(tr, beta_grid(args.betas), args.T, discover_config(args), args.seed,
                     validation=va, jobs=args.jobs)
    write_json(args.out, report(args, {"scan": scan.to_dict()}))
    if args.curve_out:
        write_table(args.curve_out, scan.curve_rows())
    return EXIT_OK


def cmd_validate(args) -> int:
    d, _ = load_dataset(args)
    tr, va, te = _splits(args, d)
    if te is None:
        raise DataError("validate needs a non-empty test split")
    result = discover(tr, discover_config(args), validation=va, jobs=args.jobs)
    bench = benchmark_region(result, result.outcome_model, tr, te, args.n_random, args.seed, jobs=args.jobs)
    write_json(args.out, report(args, {"benchmark": bench.to_dict(), "termination": result.termination}))
    return EXIT_OK


def cmd_baseline(args) -> int:
    d, _ = load_dataset(args)
    tr, va, te = _splits(args, d)
    region = LearnerConfig(args.region)
    if args.tune:
        region = region.with_default_grid()
    base = direct_baseline(tr, va, te, args.beta, region, seed=args.seed, jobs=args.jobs)
    body = {"cutoff": base.cutoff, "grouping": base.grouping, "agent_coefficients": base.coefficients,
            "test_region_size": int(base.members.sum())}
    if args.truth:
        truth = synthgen.SyntheticTruth.load(args.truth)
        body["evaluation"] = _evaluate(base.scores, base.cutoff, te.row_ids, truth, base.grouping)
    write_json(args.out, report(args, body))
    if args.scores_out:
        write_table(args.scores_out, [
            {"row_id": int(r), "score": float(s), "member": int(s >= base.cutoff)}
            for r, s in zip(te.row_ids, base.scores)
        ])
    return EXIT_OK


def _evaluate(scores, cutoff, row_ids, truth, grouping=None) -> dict:
    row_ids = np.asarray(row_ids, dtype=np.int64)
    if row_ids.size and (row_ids.min() < 0 or row_ids.max() >= truth.region.size):
        raise DataError("row ids do not match the truth file")
    m = region_metrics(scores, cutoff, truth.region[row_ids])
    out = m.to_dict()
    if grouping is not None and truth.n_groups == 2:
        known = {a: g for a, g in truth.agent_groups.items() if a in grouping}
        pred = {a: grouping[a] for a in known}
        out["partition_accuracy"] = partition_accuracy(pred, known)
    return out


def cmd_evaluate(args) -> int:
    truth = synthgen.SyntheticTruth.load(args.truth)
    if args.scores:
        scores = load_scores(args.scores)
        if args.cutoff is None:
            raise ConfigError("--cutoff is required with --scores")
        ids = np.array(sorted(scores), dtype=np.int64)
        body = _evaluate(np.array([scores[i] for i in ids]), args.cutoff, ids, truth)
    elif args.model:
        if not args.data:
            raise ConfigError("--model needs --data")
        _, region, grouping = load_result(args.model)
        d, _ = load_dataset(args)
        rows = d
        if args.subset == "test":
            _, _, rows = _splits(args, d)
            if rows is None:
                raise DataError("test split is empty")
        body = _evaluate(region.scores(rows.features), region.threshold, rows.row_ids, truth, grouping)
    else:
        raise ConfigError("evaluate needs --scores or --model")
    write_json(args.out, report(args, {"evaluation": body}))
    return EXIT_OK


def cmd_stability(args) -> int:
    d, _ = load_dataset(args)
    tr, va, te = _splits(args, d)
    if te is None:
        raise DataError("stability needs a non-empty test split")
    pool = tr if va is None else Dataset(
        np.vstack([tr.features, va.features]), np.concatenate([tr.agent_ids, va.agent_ids]),
        np.concatenate([tr.decisions, va.decisions]), tr.feature_names,
        np.concatenate([tr.row_ids, va.row_ids]))
    folds = stability_folds(pool, args.k, args.seed)
    rep = stability(folds, te, discover_config(args), args.seed, jobs=args.jobs)
    write_json(args.out, report(args, {"stability": rep.to_dict()}))
    return EXIT_OK


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetregion", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = sub.choices

    p = sub.add_parser("generate", help="write a synthetic dataset and its truth file")
    _common(p)
    p.add_argument("--out", default=None, help="dataset CSV")
    p.add_argument("--truth-out", default=None, help="truth JSON")
    p.add_argument("--n-rows", type=int, default=4500)
    p.add_argument("--n-agents", type=int, default=40)
    p.add_argument("--rule", default="drug", help="'drug', 'misdemeanor' or e.g. 'age <= 30 & priors_count >= 2'")
    p.add_argument("--coefficients", default="0,1.5", help="per-group region logit terms")
    p.add_argument("--n-groups", type=int, default=None, help="equally spaced coefficients on [-1.5, 1.5]")
    p.add_argument("--drug-rate", type=float, default=0.20)
    p.add_argument("--seed-csv", default=None, help="reuse feature rows of this CSV")
    p.add_argument("--seed-features", default=None)
    p.add_argument("--seed-agent-col", default=None)
    p.add_argument("--seed-decision-col", default=None, help="fit the base policy to this column")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("discover", help="find a region of heterogeneity")
    _common(p)
    _data_args(p)
    _split_args(p)
    _learner_args(p)
    p.add_argument("--out", default="-", help="report JSON (also usable as a model file)")
    p.add_argument("--rules-out", default=None, help="text rendering of the region")
    p.add_argument("--scores-out", default=None, help="CSV of test-row region scores")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("tune-beta", help="permutation scan over beta")
    _common(p)
    _data_args(p)
    _split_args(p)
    _learner_args(p)
    p.add_argument("--betas", default="0.02:0.42:0.04")
    p.add_argument("--T", type=int, default=40, dest="T")
    p.add_argument("--out", default="-")
    p.add_argument("--curve-out", default=None, help="CSV of the p-value curve")
    p.set_defaults(func=cmd_tune_beta)

    p = sub.add_parser("validate", help="test objective versus random regions")
    _common(p)
    _data_args(p)
    _split_args(p)
    _learner_args(p)
    p.add_argument("--n-random", type=int, default=100)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("baseline", help="direct-model baseline")
    _common(p)
    _data_args(p)
    _split_args(p)
    p.add_argument("--beta", type=float, default=0.25)
    p.add_argument("--region", default="ridge", choices=("ridge", "tree", "forest"))
    p.add_argument("--tune", action="store_true")
    p.add_argument("--truth", default=None, help="truth JSON for region metrics")
    p.add_argument("--out", default="-")
    p.add_argument("--scores-out", default=None)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("evaluate", help="score a region against a truth file")
    _common(p)
    p.add_argument("--truth", default=None, help="truth JSON")
    p.add_argument("--scores", default=None, help="CSV with row_id,score columns")
    p.add_argument("--cutoff", type=float, default=None)
    p.add_argument("--model", default=None, help="discover report JSON")
    p.add_argument("--data", default=None)
    p.add_argument("--agent-col", default="agent")
    p.add_argument("--decision-col", default="decision")
    p.add_argument("--feature-cols", default=None)
    p.add_argument("--row-id-col", default=None)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--subset", default="test", choices=("test", "all"))
    _split_args(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stability", help="fold-to-fold consistency of regions and groupings")
    _common(p)
    _data_args(p)
    _split_args(p)
    _learner_args(p)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_stability)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        values = read_config_file(args.config)
        sub = parser.subcommands[args.command]
        known = {a.dest: a for a in sub._actions}
        unknown = sorted(set(values) - set(known) - {"config"})
        if unknown:
            raise ConfigError(f"unknown key(s) in {args.config}: {unknown}")
        defaults = {}
        for key, text in values.items():
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                defaults[key] = text.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                defaults[key] = action.type(text)
            else:
                defaults[key] = text
            if action.choices is not None and defaults[key] not in action.choices:
                raise ConfigError(f"{args.config}: {key} must be one of {list(action.choices)}")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    # checked here rather than by argparse so a config file can supply them
    for key in _REQUIRED.get(args.command, ()):
        if getattr(args, key) in (None, ""):
            raise ConfigError(f"--{key.replace('_', '-')} is required for {args.command}")
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ComputationError as exc:
        print(f"computation error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
