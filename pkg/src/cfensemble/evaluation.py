"""Experimental protocol: repeated random splits, RMSE/MAE, paired t-tests, timing."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .dataset import RatingsDataset, SplitPair, load_movielens, random_split
from .ensemble import (
    BaseLearnerSpec,
    EnsembleModel,
    adaboost_rt,
    bag,
    fit_base,
    fuse,
    inject_randomness,
)

log = logging.getLogger(__name__)

DEFAULT_SPLIT_SEEDS = (1, 2, 3, 4, 5)


def _scored(predict: Callable, test: RatingsDataset) -> np.ndarray:
    if len(test) == 0:
        raise ValueError("cannot score an empty test set")
    pred = np.asarray(predict(test.users, test.items), dtype=np.float64)
    return test.clip(pred) - test.ratings


def rmse(predict: Callable, test: RatingsDataset) -> float:
    """Root mean squared error of clamped predictions over every test rating."""
    err = _scored(predict, test)
    return float(np.sqrt(np.mean(err * err)))


def mae(predict: Callable, test: RatingsDataset) -> float:
    return float(np.mean(np.abs(_scored(predict, test))))


# ---------------------------------------------------------------------------
# Significance
# ---------------------------------------------------------------------------


def paired_t_test(scores_a: Sequence[float], scores_b: Sequence[float]) -> tuple[float, float]:
    """Two-sided paired t-test on ``a - b``.

    When the differences have zero variance the statistic is infinite and
    the p-value is 0, unless the mean difference is also 0 (then t = 0,
    p = 1).
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise ValueError("need at least two pairs")
    d = a - b
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0 or not np.isfinite(sd):
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(len(d)))
    p = 2.0 * stats.t.sf(abs(t), df=len(d) - 1)
    return float(t), float(min(1.0, p))


# ---------------------------------------------------------------------------
# Model descriptors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelDescriptor:
    """A named base model or ensemble to train on every split.

    ``method`` is ``single``, ``bagging``, ``adaboost_rt``, ``fusion`` or
    ``random_injection``.  Fusion reads ``params_list`` (with ``spec.family``
    as the family); the others read ``spec``.
    """

    name: str
    spec: BaseLearnerSpec
    method: str = "single"
    K: int = 1
    seed: int = 0
    delta: float | None = None
    n: float = 1
    params_list: tuple = ()

    def __post_init__(self):
        if self.method not in ("single", "bagging", "adaboost_rt", "fusion", "random_injection"):
            raise ValueError(f"{self.name}: unknown method {self.method!r}")
        if self.K < 1:
            raise ValueError(f"{self.name}: K must be >= 1")
        if self.method == "fusion" and not self.params_list:
            raise ValueError(f"{self.name}: fusion needs a non-empty params_list")


def build_model(desc: ModelDescriptor, train: RatingsDataset, w=None):
    if desc.method == "single":
        return fit_base(desc.spec, train, w)
    if desc.method == "bagging":
        return bag(train, w, desc.spec, desc.K, desc.seed)
    if desc.method == "adaboost_rt":
        return adaboost_rt(train, desc.spec, desc.K, desc.delta, desc.n, desc.seed)
    if desc.method == "fusion":
        return fuse(train, w, desc.spec.family, list(desc.params_list))
    return inject_randomness(train, w, desc.spec, desc.K, desc.seed)


# ---------------------------------------------------------------------------
# Protocol
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    dataset_path: str | None
    models: list
    format: str | None = None
    ratio: float = 0.8
    split_seeds: tuple = DEFAULT_SPLIT_SEEDS
    output_dir: str | None = None
    baseline: str | None = None
    workers: int = 1

    def __post_init__(self):
        if not self.split_seeds:
            raise ValueError("need at least one split seed")
        if not self.models:
            raise ValueError("need at least one model descriptor")
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ValueError("model names must be unique")
        if self.baseline is not None and self.baseline not in names:
            raise ValueError(f"baseline {self.baseline!r} is not a configured model")


@dataclass
class Cell:
    model: str
    split: int
    rmse: float = math.nan
    mae: float = math.nan
    train_s: float = math.nan
    predict_s: float = math.nan
    error: str | None = None


@dataclass
class ExperimentReport:
    cells: list
    models: list
    split_seeds: tuple
    baseline: str | None = None
    metadata: dict = field(default_factory=dict)

    def scores(self, model: str, metric: str = "rmse") -> np.ndarray:
        return np.array([getattr(c, metric) for c in self.cells if c.model == model])

    @property
    def failures(self) -> list:
        return [c for c in self.cells if c.error is not None]

    def summary(self) -> dict:
        out = {}
        for name in self.models:
            row = {}
            for metric in ("rmse", "mae", "train_s", "predict_s"):
                vals = self.scores(name, metric)
                row[f"{metric}_mean"] = float(np.mean(vals)) if len(vals) else math.nan
                row[f"{metric}_std"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            if self.baseline is not None and name != self.baseline and len(self.split_seeds) > 1:
                ok = not any(c.error for c in self.cells if c.model in (name, self.baseline))
                if ok:
                    t, p = paired_t_test(self.scores(name), self.scores(self.baseline))
                    row["t_vs_baseline"], row["p_vs_baseline"] = t, p
            out[name] = row
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["model", "split", "rmse", "mae", "train_s", "predict_s"])
        for c in self.cells:
            writer.writerow(
                [c.model, c.split, f"{c.rmse:.6f}", f"{c.mae:.6f}", f"{c.train_s:.4f}", f"{c.predict_s:.4f}"]
            )
        return buf.getvalue()

    def to_json(self, timings: bool = True) -> str:
        cells = []
        for c in self.cells:
            d = {"model": c.model, "split": c.split, "rmse": c.rmse, "mae": c.mae}
            if timings:
                d.update(train_s=c.train_s, predict_s=c.predict_s)
            if c.error:
                d["error"] = c.error
            cells.append(d)
        summary = self.summary()
        if not timings:
            for row in summary.values():
                for key in [k for k in row if k.startswith(("train_s", "predict_s"))]:
                    del row[key]
        doc = {
            "split_seeds": list(self.split_seeds),
            "baseline": self.baseline,
            "models": self.models,
            "cells": cells,
            "summary": summary,
            "metadata": self.metadata,
        }
        return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True)


def make_splits(ds: RatingsDataset, ratio: float, seeds: Sequence[int]) -> list[SplitPair]:
    return [random_split(ds, ratio, s) for s in seeds]


def evaluate_cell(desc: ModelDescriptor, split: SplitPair) -> Cell:
    cell = Cell(desc.name, split.seed)
    try:
        t0 = time.perf_counter()
        model = build_model(desc, split.train)
        t1 = time.perf_counter()
        pred = model.predict(split.test.users, split.test.items)
        t2 = time.perf_counter()
    except Exception as exc:  # recorded per cell; the grid continues
        log.exception("cell %s / split %s failed", desc.name, split.seed)
        cell.error = f"{type(exc).__name__}: {exc}"
        return cell
    cell.train_s, cell.predict_s = t1 - t0, t2 - t1
    cell.rmse = rmse(lambda u, i: pred, split.test)
    cell.mae = mae(lambda u, i: pred, split.test)
    return cell


def run_protocol(config: ExperimentConfig, dataset: RatingsDataset | None = None) -> ExperimentReport:
    """Train and score every model on the same train/test splits."""
    if dataset is None:
        dataset = load_movielens(config.dataset_path, config.format)
    splits = make_splits(dataset, config.ratio, config.split_seeds)
    jobs = [(desc, split) for desc in config.models for split in splits]
    # boosting rounds are timed and reweighted sequentially: keep them off the pool
    pooled = [job for job in jobs if job[0].method != "adaboost_rt"]
    results = {}
    if config.workers > 1 and len(pooled) > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            for job, cell in zip(pooled, pool.map(lambda job: evaluate_cell(*job), pooled)):
                results[id(job)] = cell
    for job in jobs:
        if id(job) not in results:
            results[id(job)] = evaluate_cell(*job)
    cells = [results[id(job)] for job in jobs]
    return ExperimentReport(
        cells,
        [d.name for d in config.models],
        tuple(config.split_seeds),
        config.baseline,
        {"ratio": config.ratio, "num_ratings": len(dataset)},
    )


# ---------------------------------------------------------------------------
# Cost measurements
# ---------------------------------------------------------------------------


@dataclass
class ScalingResult:
    points: list  # (K, train_seconds, predict_seconds)
    slope: float
    intercept: float
    r_squared: float


def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares slope, intercept and R^2."""
    res = stats.linregress(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))
    return float(res.slope), float(res.intercept), float(res.rvalue**2)


def time_scaling_probe(
    desc: ModelDescriptor,
    train: RatingsDataset,
    K_list: Sequence[int],
    test: RatingsDataset | None = None,
) -> ScalingResult:
    """Build the ensemble fresh for every ``K`` and time it, in this thread.

    One untimed build at the smallest size runs first so that compiled
    kernels are loaded before the clock starts.
    """
    K_list = list(K_list)
    if len(K_list) < 3:
        raise ValueError("time scaling needs at least 3 ensemble sizes")
    if K_list != sorted(K_list):
        raise ValueError("K_list must be ascending")
    build_model(replace(desc, K=K_list[0]), train)
    points = []
    for K in K_list:
        d = replace(desc, K=K)
        t0 = time.perf_counter()
        model = build_model(d, train)
        t1 = time.perf_counter()
        predict_s = 0.0
        if test is not None:
            model.predict(test.users, test.items)
            predict_s = time.perf_counter() - t1
        points.append((K, t1 - t0, predict_s))
    slope, intercept, r2 = linear_fit([p[0] for p in points], [p[1] for p in points])
    return ScalingResult(points, slope, intercept, r2)


def cost_accuracy_frontier(report: ExperimentReport) -> list[tuple[str, float, float]]:
    """``(model, mean train seconds, mean RMSE)`` for every model in a report."""
    summary = report.summary()
    return [(name, summary[name]["train_s_mean"], summary[name]["rmse_mean"]) for name in report.models]


def ensemble_size_curve(ens: EnsembleModel, test: RatingsDataset) -> list[float]:
    """RMSE of every prefix of an ensemble (sizes 1..K)."""
    preds = ens.member_predictions(test.users, test.items)
    w = ens.member_weights
    out = []
    for size in range(1, len(ens) + 1):
        combined = (w[:size] / w[:size].sum()) @ preds[:size]
        out.append(rmse(lambda u, i: combined, test))
    return out
