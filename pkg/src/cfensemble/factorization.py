"""Weighted SGD matrix factorization: ISMF, RISMF and BRISMF.

Each rating ``r_ui`` with weight ``w_ui`` contributes
``w_ui * (e_ui**2 + lam*|p_u|**2 + lam*|q_i|**2) / 2`` to the objective,
with ``e_ui = r_ui - p_u . q_i``.  One SGD step on that term moves ``p_u``
and ``q_i`` by ``lr * w_ui`` times the negative gradient, using the
pre-update values of both vectors.

BRISMF pins user feature 0 and item feature 1 to the constant 1, so item
feature 0 acts as the item bias and user feature 1 as the user bias.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .dataset import RatingsDataset, WeightVector, check_weights, make_rng, weighted_means

log = logging.getLogger(__name__)

VARIANTS = ("ismf", "rismf", "brismf")


class DivergenceError(FloatingPointError):
    """Training produced non-finite parameters."""


@dataclass(frozen=True)
class MfHyperParams:
    variant: str = "brismf"
    factors: int = 20
    learning_rate: float = 0.01
    regularization: float = 0.01
    epochs: int = 40
    init_range: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.factors < 1 or (self.variant == "brismf" and self.factors < 2):
            raise ValueError("factors must be >= 1 (>= 2 for brismf)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.regularization < 0:
            raise ValueError("regularization must be non-negative")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.init_range <= 0:
            raise ValueError("init_range must be positive")

    @property
    def effective_regularization(self) -> float:
        return 0.0 if self.variant == "ismf" else self.regularization


def _pins(hyper: MfHyperParams):
    pin_user = np.zeros(hyper.factors, dtype=np.bool_)
    pin_item = np.zeros(hyper.factors, dtype=np.bool_)
    if hyper.variant == "brismf":
        pin_user[0] = True
        pin_item[1] = True
    return pin_user, pin_item


@dataclass(eq=False)
class MfModel:
    """``P`` is M x F; item factors are stored N x F (``Q`` is its transpose)."""

    P: np.ndarray
    item_factors: np.ndarray
    hyper: MfHyperParams
    global_mean: float = 3.0
    known_users: np.ndarray | None = None
    known_items: np.ndarray | None = None
    train_log: list = field(default_factory=list)
    scale: tuple = (1.0, 5.0)

    @property
    def Q(self) -> np.ndarray:
        return self.item_factors.T

    def raw_predict(self, users, items) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        return np.einsum("ij,ij->i", self.P[users], self.item_factors[items])

    def predict(self, users, items) -> np.ndarray:
        """Unclamped predictions; unseen users or items get the training mean."""
        users = np.atleast_1d(np.asarray(users, dtype=np.int64))
        items = np.atleast_1d(np.asarray(items, dtype=np.int64))
        out = self.raw_predict(users, items)
        if self.known_users is not None:
            cold = ~(self.known_users[users] & self.known_items[items])
            out[cold] = self.global_mean
        return out


def init_factors(num_users: int, num_items: int, hyper: MfHyperParams):
    """Uniform draws on ``[-init_range, init_range]``; returns ``(P, item_factors)``."""
    rng = make_rng(hyper.seed)
    a = hyper.init_range
    P = rng.uniform(-a, a, size=(num_users, hyper.factors))
    Qt = rng.uniform(-a, a, size=(num_items, hyper.factors))
    pin_user, pin_item = _pins(hyper)
    P[:, pin_user] = 1.0
    Qt[:, pin_item] = 1.0
    return P, Qt


@numba.njit(cache=True, nogil=True)
def _sgd_pass(P, Qt, users, items, ratings, weights, order, lr, lam, pin_user, pin_item):
    F = P.shape[1]
    for idx in order:
        w = weights[idx]
        if w == 0.0:
            continue
        u = users[idx]
        i = items[idx]
        pred = 0.0
        for f in range(F):
            pred += P[u, f] * Qt[i, f]
        e = ratings[idx] - pred
        step = lr * w
        for f in range(F):
            pu = P[u, f]
            qi = Qt[i, f]
            if not pin_user[f]:
                P[u, f] = pu + step * (e * qi - lam * pu)
            if not pin_item[f]:
                Qt[i, f] = qi + step * (e * pu - lam * qi)


def weighted_sse(model: MfModel, ds: RatingsDataset, w: WeightVector | None = None) -> float:
    """The weighted objective, including both regularization terms."""
    w = check_weights(ds, w)
    weights = w.training_weights()
    lam = model.hyper.effective_regularization
    pu = model.P[ds.users]
    qi = model.item_factors[ds.items]
    e = ds.ratings - np.einsum("ij,ij->i", pu, qi)
    terms = e * e + lam * np.einsum("ij,ij->i", pu, pu) + lam * np.einsum("ij,ij->i", qi, qi)
    return float(np.sum(weights * terms) / 2.0)


def sgd_epoch(
    model: MfModel,
    train: RatingsDataset,
    w: WeightVector | None,
    epoch_seed: int,
    weights: np.ndarray | None = None,
) -> MfModel:
    """One pass over ``train`` in a seeded random order, updating in place."""
    if weights is None:
        weights = check_weights(train, w).training_weights()
    order = make_rng(epoch_seed).permutation(len(train))
    pin_user, pin_item = _pins(model.hyper)
    _sgd_pass(
        model.P,
        model.item_factors,
        train.users,
        train.items,
        train.ratings,
        weights,
        order,
        model.hyper.learning_rate,
        model.hyper.effective_regularization,
        pin_user,
        pin_item,
    )
    if not (np.all(np.isfinite(model.P)) and np.all(np.isfinite(model.item_factors))):
        raise DivergenceError(
            f"{model.hyper.variant} diverged (lr={model.hyper.learning_rate}, "
            f"max weight={weights.max():g}); lower the learning rate"
        )
    return model


def _epoch_seeds(seed: int, epochs: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(epochs)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def fit_mf(
    train: RatingsDataset,
    w: WeightVector | None,
    hyper: MfHyperParams,
    record_loss: bool = False,
) -> MfModel:
    if len(train) == 0:
        raise ValueError("cannot fit MF on an empty training set")
    w = check_weights(train, w)
    weights = w.training_weights()
    global_mean, _, _ = weighted_means(train, w)
    P, Qt = init_factors(train.num_users, train.num_items, hyper)
    active = weights > 0
    model = MfModel(
        P,
        Qt,
        hyper,
        global_mean,
        np.bincount(train.users[active], minlength=train.num_users) > 0,
        np.bincount(train.items[active], minlength=train.num_items) > 0,
        [],
        train.scale,
    )
    for seed in _epoch_seeds(hyper.seed, hyper.epochs):
        sgd_epoch(model, train, w, seed, weights)
        if record_loss:
            model.train_log.append(weighted_sse(model, train, w))
    return model


def predict_mf(model: MfModel, u: int, i: int) -> float:
    return float(model.predict([u], [i])[0])


