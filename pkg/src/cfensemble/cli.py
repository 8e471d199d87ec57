"""Command line: ``cfensemble {ingest,run,bench,inspect}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import platform
import sys
from dataclasses import asdict, replace

from . import __version__, archive
from .config import ConfigError, load_config
from .dataset import ParseError, load_movielens, parse_ratings, random_split, summary, write_canonical
from .ensemble import BaseLearnerSpec, default_params
from .evaluation import (
    ExperimentConfig,
    ModelDescriptor,
    build_model,
    cost_accuracy_frontier,
    make_splits,
    run_protocol,
    time_scaling_probe,
)

log = logging.getLogger("cfensemble")


class UsageError(Exception):
    pass


def _write_text(path: str, text: str) -> None:
    archive.atomic_write(path, text)


def cmd_ingest(args) -> int:
    try:
        ds = parse_ratings(args.input, args.format)
    except ParseError as exc:
        print(f"error: {args.input}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    buf = io.StringIO()
    write_canonical(ds, buf)
    _write_text(args.out, buf.getvalue())
    _write_text(args.out + ".summary.json", json.dumps(summary(ds), indent=2, sort_keys=True) + "\n")
    print(f"{len(ds)} ratings, {ds.num_users} users, {ds.num_items} items -> {args.out}")
    return 0


def _descriptor_manifest(desc: ModelDescriptor) -> dict:
    return {
        "name": desc.name,
        "family": desc.spec.family,
        "method": desc.method,
        "K": desc.K,
        "seed": desc.seed,
        "learner_seed": desc.spec.seed,
        "delta": desc.delta,
        "n": desc.n,
        "params": asdict(desc.spec.params),
        "params_list": [asdict(p) for p in desc.params_list],
    }


def _manifest(config_path: str, config: ExperimentConfig) -> dict:
    return {
        "tool": "cfensemble",
        "version": __version__,
        "python": platform.python_version(),
        "config_file": os.path.abspath(config_path),
        "dataset": config.dataset_path,
        "format": config.format,
        "ratio": config.ratio,
        "split_seeds": list(config.split_seeds),
        "baseline": config.baseline,
        "workers": config.workers,
        "models": [_descriptor_manifest(d) for d in config.models],
    }


def cmd_run(args) -> int:
    overrides = {"seed": args.seed, "workers": args.workers, "format": args.format, "out": args.out}
    try:
        config = load_config(args.config, extended=args.extended, overrides=overrides)
    except ConfigError as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return 2
    out = config.output_dir or "results"
    try:
        report = run_protocol(config)
    except (OSError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write_text(os.path.join(out, "report.csv"), report.to_csv())
    _write_text(os.path.join(out, "report.json"), report.to_json() + "\n")
    _write_text(os.path.join(out, "manifest.json"), json.dumps(_manifest(args.config, config), indent=2) + "\n")
    if args.save_models:
        ds = load_movielens(config.dataset_path, config.format)
        split = make_splits(ds, config.ratio, config.split_seeds[:1])[0]
        failed = {c.model for c in report.failures}
        for desc in config.models:
            if desc.name not in failed:
                model = build_model(desc, split.train)
                archive.save(model, os.path.join(out, "models", f"{desc.name}.cfm"))
    for name, row in report.summary().items():
        line = f"{name:32s} rmse {row['rmse_mean']:.4f} ± {row['rmse_std']:.4f}  train {row['train_s_mean']:.2f}s"
        if "p_vs_baseline" in row:
            line += f"  p={row['p_vs_baseline']:.3g}"
        print(line)
    if report.failures:
        for cell in report.failures:
            print(f"failed: {cell.model} split {cell.split}: {cell.error}", file=sys.stderr)
        return 1
    return 0


def _parse_range(text: str) -> list[int]:
    if "-" in text and "," not in text:
        lo, hi = (int(x) for x in text.split("-"))
        values = list(range(lo, hi + 1))
    else:
        values = [int(x) for x in text.split(",")]
    if len(values) < 3:
        raise UsageError("the K range needs at least 3 sizes")
    return values


def _bench_descriptor(args) -> ModelDescriptor:
    params = default_params(args.family)
    if args.factors is not None:
        params = replace(params, factors=args.factors)
    if args.k is not None:
        params = replace(params, k=args.k)
    spec = BaseLearnerSpec(args.family, params, args.seed)
    return ModelDescriptor(f"{args.method}-{args.family}", spec, args.method, 1, args.seed)


def cmd_bench(args) -> int:
    try:
        K_list = _parse_range(args.k_range)
        desc = _bench_descriptor(args)
        if desc.method == "fusion":
            raise UsageError("fusion has a fixed size; use bagging, adaboost_rt or random_injection")
    except (UsageError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        ds = load_movielens(args.dataset, args.format)
    except (OSError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    split = random_split(ds, 0.8, args.split_seed)
    result = time_scaling_probe(desc, split.train, K_list, split.test)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["K", "train_s", "predict_s"])
    for K, train_s, predict_s in result.points:
        writer.writerow([K, f"{train_s:.4f}", f"{predict_s:.4f}"])
    _write_text(os.path.join(args.out, "scaling.csv"), buf.getvalue())
    fit = {"slope": result.slope, "intercept": result.intercept, "r_squared": result.r_squared,
           "model": desc.name, "split_seed": args.split_seed}
    _write_text(os.path.join(args.out, "scaling_fit.json"), json.dumps(fit, indent=2) + "\n")
    print(f"slope {result.slope:.4f}s/member  intercept {result.intercept:.4f}s  R^2 {result.r_squared:.4f}")
    if args.frontier:
        try:
            config = load_config(args.frontier, overrides={"workers": 1})
        except ConfigError as exc:
            print(f"error: {args.frontier}: {exc}", file=sys.stderr)
            return 2
        report = run_protocol(config)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["model", "train_seconds", "rmse"])
        for name, seconds, score in cost_accuracy_frontier(report):
            writer.writerow([name, f"{seconds:.4f}", f"{score:.6f}"])
        _write_text(os.path.join(args.out, "frontier.csv"), buf.getvalue())
        if report.failures:
            return 1
    return 0


def cmd_inspect(args) -> int:
    try:
        with open(args.archive, "rb") as fh:
            data = fh.read()
        lines = archive.describe(data)
    except (OSError, archive.ArchiveError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print("\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfensemble", description="Ensembles of collaborative-filtering models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert a MovieLens file to the canonical CSV")
    p.add_argument("input")
    p.add_argument("--format", choices=("ml100k", "ml1m", "csv"), default="ml100k")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("run", help="run the evaluation protocol described by a config file")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, help="default seed for models without their own")
    p.add_argument("--workers", type=int, default=None, help="parallel cells (default: number of CPUs)")
    p.add_argument("--format", choices=("ml100k", "ml1m", "csv"), default=None)
    p.add_argument("--extended", action="store_true", help="use the extended dataset and models")
    p.add_argument("--save-models", action="store_true", help="archive every model trained on the first split")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="ensemble-size timing probe and cost/accuracy frontier")
    p.add_argument("--dataset", required=True)
    p.add_argument("--format", choices=("ml100k", "ml1m", "csv"), default=None)
    p.add_argument("--family", default="fnm", choices=("knn_user", "knn_item", "ismf", "rismf", "brismf", "fnm"))
    p.add_argument("--method", default="random_injection", choices=("bagging", "adaboost_rt", "random_injection"))
    p.add_argument("--factors", type=int)
    p.add_argument("--k", type=int, help="neighbourhood size for k-NN families")
    p.add_argument("--k-range", default="1-10", help="ensemble sizes, e.g. 1-10 or 1,2,4,8")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=1)
    p.add_argument("--workers", type=int, default=1, help="ignored: timing probes run single-threaded")
    p.add_argument("--frontier", help="config file whose models form the cost/accuracy frontier")
    p.add_argument("--out", default="bench")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="list the sections of a model archive")
    p.add_argument("archive")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
