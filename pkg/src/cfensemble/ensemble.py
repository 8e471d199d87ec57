"""Homogeneous ensembles: bagging, AdaBoost.RT, fusion and randomness injection.

Every constructor takes a :class:`BaseLearnerSpec` (or a list of parameter
records for fusion) and returns an :class:`EnsembleModel`, whose prediction
is a convex combination of its members' clamped predictions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np

from .dataset import (
    RatingsDataset,
    WeightVector,
    bootstrap_weights,
    check_weights,
    uniform_distribution,
)
from .factorization import MfHyperParams, fit_mf
from .fnm import FnmHyperParams, fit_fnm
from .knn import KnnConfig, KnnModel, fit_knn

log = logging.getLogger(__name__)

FAMILIES = ("knn", "knn_user", "knn_item", "ismf", "rismf", "brismf", "fnm")
METHODS = ("single", "bagging", "adaboost_rt", "fusion", "random_injection")
BETA_CLAMP = (1e-6, 1.0 - 1e-6)

MF_FUSION_SIZES = {
    5: (3, 4, 5, 10, 20),
    10: (3, 4, 5, 10, 15, 20, 25, 30, 40, 50),
}


@dataclass(frozen=True)
class BaseLearnerSpec:
    """A base algorithm family, its parameter record and a seed.

    ``seed`` replaces the seed stored in ``params`` when the learner is fit.
    """

    family: str
    params: Any = None
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        params = self.params
        if params is None:
            params = default_params(self.family)
        _check_params(self.family, params)
        object.__setattr__(self, "params", params)

    def with_seed(self, seed: int) -> "BaseLearnerSpec":
        return replace(self, seed=seed)

    def resolved_params(self):
        return replace(self.params, seed=self.seed)


def default_params(family: str):
    if family in ("knn", "knn_user"):
        return KnnConfig("user_user")
    if family == "knn_item":
        return KnnConfig("item_item")
    if family in ("ismf", "rismf", "brismf"):
        return MfHyperParams(family)
    if family == "fnm":
        return FnmHyperParams()
    raise ValueError(family)


def _check_params(family: str, params) -> None:
    if family.startswith("knn"):
        if not isinstance(params, KnnConfig):
            raise TypeError(f"{family} expects KnnConfig, got {type(params).__name__}")
        if family == "knn_user" and params.perspective != "user_user":
            raise ValueError("knn_user requires perspective 'user_user'")
        if family == "knn_item" and params.perspective != "item_item":
            raise ValueError("knn_item requires perspective 'item_item'")
    elif family in ("ismf", "rismf", "brismf"):
        if not isinstance(params, MfHyperParams):
            raise TypeError(f"{family} expects MfHyperParams, got {type(params).__name__}")
        if params.variant != family:
            raise ValueError(f"{family} spec carries variant {params.variant!r}")
    elif not isinstance(params, FnmHyperParams):
        raise TypeError(f"fnm expects FnmHyperParams, got {type(params).__name__}")


def fit_base(spec: BaseLearnerSpec, train: RatingsDataset, w: WeightVector | None = None):
    """Train the learner described by ``spec``; the uniform fit contract."""
    params = spec.resolved_params()
    if spec.family.startswith("knn"):
        return fit_knn(train, w, params)
    if spec.family == "fnm":
        return fit_fnm(train, w, params)
    return fit_mf(train, w, params)


def clamped_predictions(model, users, items, scale=(1.0, 5.0)) -> np.ndarray:
    return np.clip(model.predict(users, items), scale[0], scale[1])


class EnsembleBuildError(RuntimeError):
    def __init__(self, member: int, cause: BaseException):
        self.member = member
        super().__init__(f"ensemble member {member} failed: {cause}")


@dataclass(eq=False)
class EnsembleModel:
    members: list
    member_weights: np.ndarray
    method: str
    build_log: list = field(default_factory=list)
    scale: tuple = (1.0, 5.0)
    member_seeds: list | None = None

    def __post_init__(self):
        self.member_weights = np.asarray(self.member_weights, dtype=np.float64)
        if len(self.members) < 1 or len(self.members) != len(self.member_weights):
            raise ValueError("need one weight per member and at least one member")
        if np.any(self.member_weights < 0) or self.member_weights.sum() <= 0:
            raise ValueError("member weights must be non-negative with positive sum")
        if self.method not in METHODS:
            raise ValueError(f"unknown ensemble method {self.method!r}")

    def __len__(self) -> int:
        return len(self.members)

    def member_predictions(self, users, items) -> np.ndarray:
        """Matrix of clamped member predictions, one row per member."""
        users = np.atleast_1d(np.asarray(users, dtype=np.int64))
        items = np.atleast_1d(np.asarray(items, dtype=np.int64))
        rows = []
        for idx, member in enumerate(self.members):
            if self.member_seeds is not None and isinstance(member, KnnModel):
                pred = member.predict(users, items, seed=self.member_seeds[idx])
            else:
                pred = member.predict(users, items)
            rows.append(np.clip(pred, self.scale[0], self.scale[1]))
        return np.vstack(rows)

    def predict(self, users, items) -> np.ndarray:
        preds = self.member_predictions(users, items)
        weights = self.member_weights / self.member_weights.sum()
        return np.clip(weights @ preds, self.scale[0], self.scale[1])

    def prefix(self, size: int) -> "EnsembleModel":
        """The ensemble made of the first ``size`` members."""
        return EnsembleModel(
            self.members[:size],
            self.member_weights[:size],
            self.method,
            self.build_log[:size],
            self.scale,
            None if self.member_seeds is None else self.member_seeds[:size],
        )


def ensemble_predict(ens: EnsembleModel, u: int, i: int) -> float:
    return float(ens.predict([u], [i])[0])


def _child_seeds(seed: int, count: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


def _fit_member(index: int, spec: BaseLearnerSpec, train, w):
    try:
        return fit_base(spec, train, w)
    except Exception as exc:
        raise EnsembleBuildError(index, exc) from exc


# ---------------------------------------------------------------------------
# Bagging
# ---------------------------------------------------------------------------


class _RawWeights(WeightVector):
    """Non-negative real weights used as given (products of base and sample weights)."""

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if len(values) and (not np.all(np.isfinite(values)) or values.min() < 0):
            raise ValueError("weights must be finite and non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def training_weights(self) -> np.ndarray:
        return np.array(self.values)


def _as_weights(values: np.ndarray) -> WeightVector:
    if np.all(values == np.round(values)):
        return WeightVector(values, "multiplicity")
    return _RawWeights(values)


def _member_seed(spec: BaseLearnerSpec, t: int, derived: Sequence[int]) -> int:
    # member 0 keeps the learner spec's own seed so a size-1 ensemble is the base model
    return spec.seed if t == 0 else derived[t]


def bag(
    train: RatingsDataset,
    w_base: WeightVector | None,
    spec: BaseLearnerSpec,
    K: int,
    seed: int = 0,
    sampler: Callable[[RatingsDataset, int], WeightVector] = bootstrap_weights,
) -> EnsembleModel:
    """Average of ``K`` learners, each fit on a bootstrap reweighting of ``train``.

    Member ``t`` trains with weights ``w_base * multiplicities_t``.  ``sampler``
    replaces the bootstrap draw; tests use it to force an identity sample.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    base = check_weights(train, w_base).training_weights()
    sample_seeds = _child_seeds(seed, K)
    learner_seeds = _child_seeds(seed + 1, K)
    members, build_log = [], []
    for t in range(K):
        draw = sampler(train, sample_seeds[t])
        member_spec = spec.with_seed(_member_seed(spec, t, learner_seeds))
        members.append(_fit_member(t, member_spec, train, _as_weights(base * draw.values)))
        build_log.append({"member": t, "sample_seed": sample_seeds[t], "seed": member_spec.seed})
    return EnsembleModel(members, np.ones(K), "bagging", build_log, train.scale)


# ---------------------------------------------------------------------------
# AdaBoost.RT
# ---------------------------------------------------------------------------


def default_delta(train: RatingsDataset, w: WeightVector | None = None) -> float:
    """Weighted mean absolute deviation of the ratings from their weighted mean.

    Constant data would give 0, which is not a usable threshold; 0.5 is
    returned instead.
    """
    if len(train) == 0:
        raise ValueError("empty training set")
    weights = check_weights(train, w).training_weights()
    total = weights.sum()
    if total <= 0:
        weights, total = np.ones(len(train)), float(len(train))
    mu = np.dot(weights, train.ratings) / total
    delta = float(np.dot(weights, np.abs(train.ratings - mu)) / total)
    return delta if delta > 0 else 0.5


def adaboost_rt(
    train: RatingsDataset,
    spec: BaseLearnerSpec,
    K: int,
    delta: float | None = None,
    n: float = 1,
    seed: int = 0,
    learner: Callable = fit_base,
) -> EnsembleModel:
    """AdaBoost.RT with absolute error as the correct/incorrect criterion.

    Round ``t`` fits on distribution ``D_t``, marks training ratings with
    ``|prediction - rating| > delta`` as wrong, sets
    ``beta_t = clamp(eps_t ** n)`` where ``eps_t`` is the mass of the wrong
    ratings, then multiplies the mass of correct ratings by ``beta_t`` and
    renormalises.  Member ``t`` votes with weight ``log(1 / beta_t)``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if n < 1:
        raise ValueError("exponent n must be >= 1")
    if delta is None:
        delta = default_delta(train)
    if not 0.0 < delta < train.rating_range:
        raise ValueError(f"delta must lie in (0, {train.rating_range:g}), got {delta}")
    D = np.array(uniform_distribution(train).values)
    learner_seeds = _child_seeds(seed, K)
    members, member_weights, build_log = [], [], []
    for t in range(K):
        member_spec = spec.with_seed(_member_seed(spec, t, learner_seeds))
        try:
            model = learner(member_spec, train, WeightVector(D, "distribution"))
        except Exception as exc:
            raise EnsembleBuildError(t, exc) from exc
        pred = clamped_predictions(model, train.users, train.items, train.scale)
        wrong = np.abs(pred - train.ratings) > delta
        eps = float(D[wrong].sum())
        beta_raw = eps**n
        beta = min(max(beta_raw, BETA_CLAMP[0]), BETA_CLAMP[1])
        clamped = beta != beta_raw
        if clamped:
            log.info("adaboost round %d: beta %.3g clamped to %.3g", t, beta_raw, beta)
        D = D * np.where(wrong, 1.0, beta)
        D /= D.sum()
        members.append(model)
        member_weights.append(math.log(1.0 / beta))
        build_log.append(
            {
                "member": t,
                "seed": member_spec.seed,
                "epsilon": eps,
                "beta": beta,
                "clamped": clamped,
                "delta": delta,
            }
        )
    if all(entry["clamped"] for entry in build_log):
        log.warning("every AdaBoost.RT round was clamped; member weights are nearly uniform")
    return EnsembleModel(members, np.array(member_weights), "adaboost_rt", build_log, train.scale)


def adaboost_trace(ens: EnsembleModel) -> list[tuple[float, float]]:
    """``(epsilon_t, beta_t)`` per round."""
    return [(e["epsilon"], e["beta"]) for e in ens.build_log]


# ---------------------------------------------------------------------------
# Fusion
# ---------------------------------------------------------------------------


def fuse(
    train: RatingsDataset,
    w: WeightVector | None,
    family: str,
    params_list: Sequence,
) -> EnsembleModel:
    """One member per parameter record, all trained on the same weighted data."""
    if not params_list:
        raise ValueError("params_list must not be empty")
    specs = []
    for idx, params in enumerate(params_list):
        try:
            specs.append(BaseLearnerSpec(family, params, params.seed))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"parameter record {idx}: {exc}") from exc
    members = [_fit_member(t, spec, train, w) for t, spec in enumerate(specs)]
    build_log = [{"member": t, "params": repr(spec.params)} for t, spec in enumerate(specs)]
    return EnsembleModel(members, np.ones(len(members)), "fusion", build_log, train.scale)


def knn_fusion_params(
    scheme: str,
    k: int = 20,
    metric: str = "pearson",
    perspective: str = "user_user",
) -> list[KnnConfig]:
    """Presets combining k-NN models by ``metric``, ``perspective`` or ``both``."""
    if scheme == "metric":
        return [KnnConfig(perspective, m, k) for m in ("pearson", "cosine")]
    if scheme == "perspective":
        return [KnnConfig(p, metric, k) for p in ("user_user", "item_item")]
    if scheme == "both":
        return [KnnConfig(p, m, k) for p in ("user_user", "item_item") for m in ("pearson", "cosine")]
    raise ValueError(f"unknown k-NN fusion scheme {scheme!r}")


def latent_size_fusion_params(base, K: int) -> list:
    """Copies of an MF or FNM parameter record over the preset latent sizes."""
    if K not in MF_FUSION_SIZES:
        raise ValueError(f"no latent-size preset for K={K}; available: {sorted(MF_FUSION_SIZES)}")
    return [replace(base, factors=f) for f in MF_FUSION_SIZES[K]]


# ---------------------------------------------------------------------------
# Randomness injection
# ---------------------------------------------------------------------------


def inject_randomness(
    train: RatingsDataset,
    w: WeightVector | None,
    spec: BaseLearnerSpec,
    K: int,
    seed: int = 0,
) -> EnsembleModel:
    """Average of ``K`` runs of a randomised learner.

    Factor models differ only in their seed.  k-NN members share one
    similarity table and each picks ``k`` neighbours at random from the top
    ``2k`` candidates.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    seeds = [_member_seed(spec, t, _child_seeds(seed, K)) for t in range(K)]
    if spec.family.startswith("knn"):
        params = replace(spec.params, neighbor_pool_factor=2)
        model = _fit_member(0, replace(spec, params=params), train, w)
        members = [model] * K
        member_seeds = seeds
    else:
        members = [_fit_member(t, spec.with_seed(s), train, w) for t, s in enumerate(seeds)]
        member_seeds = None
    build_log = [{"member": t, "seed": s} for t, s in enumerate(seeds)]
    return EnsembleModel(members, np.ones(K), "random_injection", build_log, train.scale, member_seeds)


def single(train: RatingsDataset, w: WeightVector | None, spec: BaseLearnerSpec) -> EnsembleModel:
    """A one-member wrapper, used where a base model must look like an ensemble."""
    return EnsembleModel([fit_base(spec, train, w)], np.ones(1), "single", [{"seed": spec.seed}], train.scale)
