"""Acceptance criteria, each checked at its stated tolerance.

Criteria 1-5 train the full grid on MovieLens 100K (five random 80:20
splits, seeds 1-5); a cold run takes roughly a quarter of an hour on one
core.  Every criterion prints one PASS/FAIL line, repeated in the terminal
summary under "acceptance criteria".
"""

import os
import subprocess
import sys
import time
from functools import cached_property

import numpy as np
import pytest

from cfensemble.dataset import data_dir, load_movielens
from cfensemble.ensemble import (
    BaseLearnerSpec,
    adaboost_rt,
    bag,
    fit_base,
    fuse,
    inject_randomness,
    knn_fusion_params,
    latent_size_fusion_params,
)
from cfensemble.evaluation import ensemble_size_curve, linear_fit, make_splits, rmse
from cfensemble.factorization import MfHyperParams
from cfensemble.fnm import FnmHyperParams
from cfensemble.knn import KnnConfig

from conftest import record_criterion

SPLIT_SEEDS = (1, 2, 3, 4, 5)
BASELINE_TOLERANCE = 0.015
TARGETS = {
    "knn_user": 0.9535,
    "knn_item": 0.9526,
    "ismf": 0.9434,
    "rismf": 0.9407,
    "brismf": 0.9268,
    "fnm": 0.9231,
}
KNN_GRID = [(metric, k) for metric in ("pearson", "cosine") for k in (5, 10, 20)]
MF_SIZES = (3, 4, 5, 10, 20, 30, 40, 50)
FNM_SIZES = (3, 4, 5, 10, 20, 30)
BAGGED_MF_FACTORS = 10
PERSPECTIVE = {"knn_user": "user_user", "knn_item": "item_item"}


class Grid:
    """Lazily trained cells; every entry is (mean RMSE, mean train seconds)."""

    def __init__(self, dataset):
        self.splits = make_splits(dataset, 0.8, SPLIT_SEEDS)
        self.cells = {}

    def cell(self, key, build):
        if key not in self.cells:
            scores, seconds, models = [], [], []
            for split in self.splits:
                t0 = time.perf_counter()
                model = build(split.train)
                seconds.append(time.perf_counter() - t0)
                scores.append(rmse(model.predict, split.test))
                models.append(model)
            self.cells[key] = (float(np.mean(scores)), float(np.mean(seconds)), models)
        return self.cells[key]

    def base_cell(self, family, params):
        spec = BaseLearnerSpec(family, params)
        return self.cell(("base", family, params), lambda train: fit_base(spec, train))

    def best(self, family):
        """(params, mean RMSE, mean train seconds) of the family's best configuration."""
        if family in PERSPECTIVE:
            options = [KnnConfig(PERSPECTIVE[family], m, k) for m, k in KNN_GRID]
        elif family == "fnm":
            options = [FnmHyperParams(factors=f) for f in FNM_SIZES]
        else:
            options = [MfHyperParams(family, factors=f) for f in MF_SIZES]
        scored = [(self.base_cell(family, p)[0], i, p) for i, p in enumerate(options)]
        score, _, params = min(scored)
        return params, score, self.base_cell(family, params)[1]

    @cached_property
    def knn_user_spec(self):
        return BaseLearnerSpec("knn_user", self.best("knn_user")[0])

    @cached_property
    def fnm_spec(self):
        return BaseLearnerSpec("fnm", self.best("fnm")[0])

    def bagged_mf(self, variant, K=50):
        spec = BaseLearnerSpec(variant, MfHyperParams(variant, factors=BAGGED_MF_FACTORS))
        return self.cell(("bag", variant, K), lambda train: bag(train, None, spec, K, seed=0))

    def adaboost_knn_user(self, K=10):
        return self.cell(("ada", "knn_user", K), lambda train: adaboost_rt(train, self.knn_user_spec, K, seed=0))

    def fusion_fnm(self):
        params = latent_size_fusion_params(FnmHyperParams(), 10)
        return self.cell(("fusion", "fnm"), lambda train: fuse(train, None, "fnm", params))

    def random_fnm(self, K=10):
        return self.cell(("random", "fnm", K), lambda train: inject_randomness(train, None, self.fnm_spec, K, seed=0))

    def knn_ensembles(self):
        spec = self.knn_user_spec
        k = spec.params.k
        return {
            "bagging(20) k-NN-User": self.cell(("bag", "knn_user", 20), lambda t: bag(t, None, spec, 20, seed=0)),
            "AdaBoost.RT(10) k-NN-User": self.adaboost_knn_user(),
            "fusion(4) k-NN": self.cell(
                ("fusion", "knn"), lambda t: fuse(t, None, "knn", knn_fusion_params("both", k, spec.params.metric))
            ),
            "random(10) k-NN-User": self.cell(("random", "knn_user", 10), lambda t: inject_randomness(t, None, spec, 10)),
        }


@pytest.fixture(scope="session")
def grid(ml100k_path):
    return Grid(load_movielens(ml100k_path))


def gain(baseline, ensemble):
    return (baseline - ensemble) / baseline


def test_criterion_1_baselines(grid):
    parts, ok = [], True
    for family, target in TARGETS.items():
        params, score, _ = grid.best(family)
        inside = abs(score - target) <= BASELINE_TOLERANCE
        ok &= inside
        label = f"k={params.k} {params.metric}" if family in PERSPECTIVE else f"F={params.factors}"
        parts.append(f"{family} {score:.4f} ({label}, target {target}){'' if inside else ' OUT'}")
    record_criterion(1, "baseline reproduction within 0.015", ok, "; ".join(parts))
    assert ok


def test_criterion_2_ensemble_gains(grid):
    checks = []
    for variant in ("ismf", "rismf", "brismf"):
        base = grid.best(variant)[1]
        ens = grid.bagged_mf(variant)[0]
        checks.append((f"bagging(50) {variant}", base, ens, 0.01))
    fnm_base = grid.best("fnm")[1]
    checks.append(("fusion(10) fnm", fnm_base, grid.fusion_fnm()[0], 0.004))
    checks.append((f"random(10) fnm F={grid.fnm_spec.params.factors}", fnm_base, grid.random_fnm()[0], 0.004))
    checks.append(("AdaBoost.RT(10) k-NN-User", grid.best("knn_user")[1], grid.adaboost_knn_user()[0], 0.008))
    parts, ok = [], True
    for name, base, ens, needed in checks:
        g = gain(base, ens)
        ok &= g >= needed
        parts.append(f"{name} {base:.4f}->{ens:.4f} ({100 * g:+.2f}%, need {100 * needed:.1f}%)")
    record_criterion(2, "ensemble gains over baselines", ok, "; ".join(parts))
    assert ok


def test_criterion_3_weak_beats_strong(grid):
    _, ismf_score, ismf_seconds = grid.best("ismf")
    ensembles = grid.knn_ensembles()
    name, (score, seconds, _) = min(ensembles.items(), key=lambda item: item[1][0])
    accurate = score <= ismf_score + 0.005
    cheap = seconds <= ismf_seconds / 3
    detail = (
        f"best k-NN ensemble {name} rmse {score:.4f} vs ISMF {ismf_score:.4f}+0.005 "
        f"({'ok' if accurate else 'too high'}); train {seconds:.2f}s vs ISMF {ismf_seconds:.2f}s, "
        f"ratio {seconds / ismf_seconds:.2f} (need <= 0.33)"
    )
    record_criterion(3, "k-NN ensemble vs ISMF crossover", accurate and cheap, detail)
    assert accurate and cheap


def test_criterion_4_linear_cost(grid):
    train = grid.splits[0].train
    spec = grid.fnm_spec
    inject_randomness(train, None, spec, 1)  # load compiled kernels before timing
    sizes = list(range(1, 11))
    seconds = []
    for K in sizes:
        t0 = time.perf_counter()
        inject_randomness(train, None, spec, K)
        seconds.append(time.perf_counter() - t0)
    slope, intercept, r2 = linear_fit(sizes, seconds)
    detail = f"random FNM F={spec.params.factors}, K=1..10: slope {slope:.3f}s/member, intercept {intercept:.3f}s, R^2 {r2:.4f}"
    record_criterion(4, "training time linear in K (R^2 >= 0.98)", r2 >= 0.98, detail)
    assert r2 >= 0.98


def test_criterion_5_monotone_trend(grid):
    _, _, models = grid.random_fnm()
    curves = np.array([ensemble_size_curve(ens, split.test) for ens, split in zip(models, grid.splits)])
    series = curves.mean(axis=0)
    steps = np.diff(series)
    ok = series[-1] < series[0] and bool(np.all(steps <= 0.002))
    detail = "mean RMSE K=1..10: " + " ".join(f"{v:.4f}" for v in series) + f"; largest step up {steps.max():+.4f}"
    record_criterion(5, "random FNM RMSE falls with K", ok, detail)
    assert ok


PROPERTY_TESTS = [
    "test_knn.py::test_equal_weights_coincide_with_unweighted",
    "test_factorization.py::test_equal_weights_give_identical_trajectories",
    "test_factorization.py::test_weight_two_equals_doubled_learning_rate",
    "test_fnm.py::test_equal_weights_give_identical_trajectories",
    "test_ensemble.py::test_adaboost_two_round_hand_trace",
    "test_ensemble.py::test_adaboost_distribution_invariants",
    "test_dataset.py::test_bootstrap_conserves_total_weight",
    "test_factorization.py::test_sgd_step_follows_the_objective_gradient",
    "test_fnm.py::test_epoch_moves_against_the_objective_gradient",
    "test_ensemble.py::test_size_one_ensembles_reproduce_the_base_model",
    "test_ensemble.py::test_convexity",
    "test_dataset.py::test_split_partitions_the_ratings",
]


def test_criterion_6_property_suite():
    here = os.path.dirname(__file__)
    t0 = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *PROPERTY_TESTS],
        cwd=here,
        capture_output=True,
        text=True,
    )
    elapsed = time.perf_counter() - t0
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0 and elapsed < 60
    record_criterion(6, "property suite passes in under a minute", ok, f"{summary} ({elapsed:.1f}s wall)")
    assert ok, proc.stdout[-3000:]


def test_criterion_7_extended(request):
    path = os.path.join(data_dir(), "ml-1m", "ratings.dat")
    if not request.config.getoption("--extended"):
        record_criterion(7, "ML-1M spot checks", "SKIP", "needs --extended")
        pytest.skip("extended checks run with --extended")
    if not os.path.exists(path):
        record_criterion(7, "ML-1M spot checks", "SKIP", f"{path} not found")
        pytest.skip(f"{path} not found")
    splits = make_splits(load_movielens(path, "ml1m"), 0.8, SPLIT_SEEDS)
    brismf = min(
        np.mean([rmse(fit_base(BaseLearnerSpec("brismf", MfHyperParams("brismf", factors=f)), s.train).predict, s.test) for s in splits])
        for f in MF_SIZES
    )
    spec = BaseLearnerSpec("ismf", MfHyperParams("ismf", factors=BAGGED_MF_FACTORS))
    bagged = np.mean([rmse(bag(s.train, None, spec, 30).predict, s.test) for s in splits])
    ok = abs(brismf - 0.8620) <= 0.02 and abs(bagged - 0.8523) <= 0.02
    record_criterion(7, "ML-1M spot checks", ok, f"BRISMF {brismf:.4f} (0.8620); bagging(30) ISMF {bagged:.4f} (0.8523)")
    assert ok
