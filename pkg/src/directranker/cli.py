"""Command-line front end: ``directranker <subcommand> ...``.

Hyperparameters come from a flat ``key = value`` file; ``--set key=value`` and
``--seed`` override it. Without ``--seed`` the ``RANKER_SEED`` environment
variable is used, then the config's ``seed``, then 0. Every run writes a JSON
manifest next to its primary output; wall-clock data lives only there (and in
the training log).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, build, parse_grid, read_kv, split_keys
from .experiments import (
    DEFAULT_SWEEP_VALUES,
    SWEEP_VARIABLES,
    GridSpec,
    SyntheticProtocolConfig,
    detect_boundaries,
    grid_search,
    run_synthetic_protocol,
    ExperimentReport,
    successive_pair_outputs,
    synthetic_train_config,
)
from .letor import (
    apply_normalizer,
    binarize,
    discover_folds,
    fit_normalizer,
    load_folds,
    read_letor,
    write_letor,
)
from .metrics import evaluate, metric_name, parse_metric
from .model import load_model, save_model
from .synthetic import SyntheticConfig, generate
from .training import TrainConfig, train

logger = logging.getLogger("directranker")


class CLIError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve_seed(args, values: dict) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("RANKER_SEED")
    if env is not None:
        return int(env)
    return int(values.get("seed", 0))


def _config_values(args) -> dict[str, str]:
    values = read_kv(args.config) if getattr(args, "config", None) else {}
    for item in getattr(args, "set", None) or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        values[key.strip()] = val.strip()
    return values


def _write_manifest(out_path, subcommand, config, seed, inputs, started, extra=None):
    manifest = {
        "subcommand": subcommand,
        "artifact_version": __version__,
        "master_seed": seed,
        "config": config,
        "inputs": {str(p): _digest(p) for p in inputs},
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "wall_seconds": round(time.time() - started, 3),
    }
    if extra:
        manifest.update(extra)
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _train_config(values, seed) -> TrainConfig:
    values = {k: v for k, v in values.items() if k != "seed"}
    return build(TrainConfig, values, seed=seed)


def _prepare_training_data(data, binarize_at, normalize):
    stats = fit_normalizer(data) if normalize else None
    if stats is not None:
        data = apply_normalizer(stats, data)
    if binarize_at:
        data = binarize(data, binarize_at)
    return data, stats


def _load_scoring(model_path, data_path):
    model, stats = load_model(model_path)
    data = read_letor(data_path)
    if data.feature_dim != model.input_dim:
        raise CLIError(f"model expects {model.input_dim} features, data has {data.feature_dim}")
    X = data.X if stats is None else apply_normalizer(stats, data).X
    return model, data, X


def _csv_text(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------- subcommands


def cmd_train(args):
    started = time.time()
    values = _config_values(args)
    seed = _resolve_seed(args, values)
    config = _train_config(values, seed)
    data = read_letor(args.data)
    train_ds, stats = _prepare_training_data(data, args.binarize, not args.no_normalize)
    model, log = train(train_ds, config)
    save_model(args.model_out, model, stats)
    log_path = args.log_out or str(args.model_out) + ".log.csv"
    Path(log_path).write_text(log.to_csv())
    _write_manifest(args.model_out, "train", asdict(config), seed, [args.data], started,
                    {"binarize": args.binarize, "normalize": not args.no_normalize, "training_log": log_path})
    print(f"trained {len(log.epochs)} epochs, final mean cost "
          f"{log.epochs[-1][1] if log.epochs else float('nan'):.6g} -> {args.model_out}")


def report_rows(report, fold="1"):
    rows = [["fold", "metric", "k", "mean", "stderr", "n_used", "n_excluded"]]
    per = [["fold", "qid", "metric", "k", "value"]]
    for name in report.per_query:
        m, k = parse_metric(name)
        agg = report.map_value if m == "map" else report.ndcg_at[k]
        rows.append([fold, m, k or "", repr(agg.mean), repr(agg.stderr),
                     report.n_queries_used[name], report.n_queries_excluded[name]])
        for qid, v in report.per_query[name].items():
            per.append([fold, qid, m, k or "", "" if v is None else repr(v)])
    return rows, per


def cmd_evaluate(args):
    started = time.time()
    metrics = [m for m in args.metrics.split(",") if m.strip()]
    if not metrics:
        raise CLIError("--metrics must name at least one metric")
    for m in metrics:
        parse_metric(m)
    model, data, X = _load_scoring(args.model, args.data)
    report = evaluate(data, model.scores(X), metrics, map_threshold=args.map_threshold)
    rows, per = report_rows(report, args.fold)
    Path(args.out).write_text(_csv_text(rows))
    per_path = args.per_query_out or str(args.out) + ".per_query.csv"
    Path(per_path).write_text(_csv_text(per))
    _write_manifest(args.out, "evaluate", {"metrics": metrics, "map_threshold": args.map_threshold},
                    None, [args.model, args.data], started)
    for r in rows[1:]:
        print(f"{metric_name(r[1], r[2])}: {float(r[3]):.4f} +- {float(r[4]):.4f} "
              f"({r[5]} queries, {r[6]} excluded)")


def cmd_rank(args):
    model, data, X = _load_scoring(args.model, args.data)
    groups = data.queries
    if args.qid not in groups:
        raise CLIError(f"qid {args.qid} not in {args.data}")
    rows = groups[args.qid]
    order = model.sort_documents(list(X[rows]))
    for i in order:
        print(int(data.line_index[rows[i]]))


def cmd_synth(args):
    started = time.time()
    values = _config_values(args)
    seed = _resolve_seed(args, values)
    values = {k: v for k, v in values.items() if k != "seed"}
    syn = build(SyntheticConfig, values, seed=seed)
    train_ds, test_ds, spec = generate(syn)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_letor(out / "train.txt", train_ds)
    write_letor(out / "test.txt", test_ds)
    rows = [["class", "feature", "mean", "std"]]
    for c in range(spec.means.shape[0]):
        for f in range(spec.means.shape[1]):
            rows.append([c, f + 1, repr(float(spec.means[c, f])), repr(float(spec.stds[c, f]))])
    (out / "class_spec.csv").write_text(_csv_text(rows))
    _write_manifest(out / "synth", "synth", asdict(syn), seed, [], started)
    print(f"wrote {len(train_ds)} train / {len(test_ds)} test documents to {out}")


def _sweep_point(args):
    syn, overrides, protocol = args
    return run_synthetic_protocol(syn, synthetic_train_config(syn, **overrides), protocol)


def cmd_sweep(args):
    started = time.time()
    values = _config_values(args)
    seed = _resolve_seed(args, values)
    values = {k: v for k, v in values.items() if k != "seed"}
    syn_v, proto_v, train_v = split_keys(values, SyntheticConfig, SyntheticProtocolConfig, TrainConfig)
    base = build(SyntheticConfig, syn_v)
    protocol = build(SyntheticProtocolConfig, proto_v, seed=seed)
    overrides = {k: v for k, v in asdict(build(TrainConfig, train_v)).items() if k in train_v}
    if args.values:
        from .config import coerce_value

        sweep_values = [coerce_value(SyntheticConfig, args.variable, v) for v in args.values.split(",")]
    else:
        sweep_values = DEFAULT_SWEEP_VALUES[args.variable]
    jobs = [(replace(base, **{args.variable: v}), overrides, protocol) for v in sweep_values]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            points = list(pool.map(_sweep_point, jobs))
    else:
        points = [_sweep_point(j) for j in jobs]
    report = ExperimentReport(args.variable, sweep_values, points, seed, time.time() - started)
    Path(args.out).write_text(report.to_csv())
    _write_manifest(args.out, "sweep", {"variable": args.variable, "values": sweep_values,
                                        "synthetic": asdict(base), "protocol": asdict(protocol),
                                        "train_overrides": overrides}, seed, [], started,
                    {"point_seconds": [p.seconds for p in points]})
    for v, p in zip(sweep_values, points):
        print(f"{args.variable}={v}: mu={p.mu:.4f} +- {p.stderr:.4f}")


def cmd_gridsearch(args):
    started = time.time()
    values = _config_values(args)
    seed = _resolve_seed(args, values)
    base = _train_config(values, seed)
    grid_values = parse_grid(read_kv(args.grid), TrainConfig) if args.grid else {"seed": [seed]}
    grid = GridSpec(grid_values)
    specs = discover_folds(args.folds_dir)
    folds = load_folds(specs, normalize=not args.no_normalize)
    result = grid_search(folds, grid, base, args.metric, args.inner_folds, args.binarize,
                         seed=seed)
    Path(args.out).write_text(result.to_csv())
    inputs = [p for s in specs for p in (s.train, s.test, s.validation) if p is not None]
    _write_manifest(args.out, "gridsearch", {"base": asdict(base), "grid": grid.values, "metric": args.metric,
                                             "binarize": args.binarize, "inner_folds": args.inner_folds},
                    seed, inputs, started,
                    {"best_configs": [asdict(fr.best_config) for fr in result.folds],
                     "flagged_folds": [fr.fold for fr in result.folds if fr.flagged]})
    for name, agg in result.summary.items():
        print(f"{name}: {agg.mean:.4f} +- {agg.stderr:.4f} over {agg.count} folds")


def cmd_peaks(args):
    started = time.time()
    model, data, X = _load_scoring(args.model, args.data)
    rows = data.queries[args.qid] if args.qid is not None else np.arange(len(data))
    outputs, order = successive_pair_outputs(model, list(X[rows]), return_order=True)
    bounds = set(detect_boundaries(outputs, args.k))
    out = [["position", "line_index", "next_line_index", "output", "boundary"]]
    for i, o in enumerate(outputs):
        out.append([i, int(data.line_index[rows[order[i]]]), int(data.line_index[rows[order[i + 1]]]),
                    repr(float(o)), int(i in bounds)])
    Path(args.out).write_text(_csv_text(out))
    _write_manifest(args.out, "peaks", {"qid": args.qid, "k": args.k}, None, [args.model, args.data], started)
    print(f"{len(outputs)} successive outputs; boundaries after positions {sorted(bounds)}")


# ---------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(prog="directranker", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="key = value configuration file")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value")
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("train", help="train a model on a LETOR file")
    sp.add_argument("--data", required=True)
    sp.add_argument("--model-out", required=True)
    sp.add_argument("--log-out")
    sp.add_argument("--binarize", type=int, metavar="T", help="map grades >= T to 1, others to 0")
    sp.add_argument("--no-normalize", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="NDCG@k / MAP report for a model on a LETOR file")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--metrics", default="ndcg@10,map")
    sp.add_argument("--map-threshold", type=int, default=1)
    sp.add_argument("--fold", default="1")
    sp.add_argument("--out", required=True)
    sp.add_argument("--per-query-out")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("rank", help="print line numbers of one query's documents, best first")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--qid", type=int, required=True)
    sp.set_defaults(func=cmd_rank)

    sp = sub.add_parser("synth", help="write a synthetic train/test pair in LETOR format")
    sp.add_argument("--out-dir", required=True)
    common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("sweep", help="synthetic protocol over one dataset parameter")
    sp.add_argument("--variable", choices=SWEEP_VARIABLES, required=True)
    sp.add_argument("--values", help="comma separated; defaults to the built-in grid")
    sp.add_argument("--out", required=True)
    sp.add_argument("--jobs", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("gridsearch", help="nested-CV grid search over LETOR Fold* directories")
    sp.add_argument("--folds-dir", required=True)
    sp.add_argument("--grid", help="grid file: key = v1 | v2 | ...")
    sp.add_argument("--metric", default="ndcg@10")
    sp.add_argument("--inner-folds", type=int, default=5)
    sp.add_argument("--binarize", type=int, metavar="T")
    sp.add_argument("--no-normalize", action="store_true")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_gridsearch)

    sp = sub.add_parser("peaks", help="successive-pair outputs and class boundaries of a sorted list")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--qid", type=int)
    sp.add_argument("--k", type=int, help="number of classes, if known")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_peaks)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CLIError, ConfigError, OSError, ValueError, KeyError) as exc:
        print(f"directranker {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
