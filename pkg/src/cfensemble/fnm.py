"""Weight-aware factorized neighbourhood model (asymmetric factor model).

Prediction::

    r_ui = mu + b_u + b_i + q_i . p_u
    p_u  = |R(u)|^-a * sum_j w_uj (r_uj - bhat_uj) x_j
         + |N(u)|^-a * sum_j w_uj y_j

``bhat_uj = mu + bhat_u + bhat_j`` uses the weighted baselines frozen at
initialisation; the ``b_u``/``b_i`` of the leading term start from the same
values and are trained.  Only explicit ratings exist, so ``N(u) = R(u)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .dataset import RatingsDataset, WeightVector, check_weights, make_rng
from .factorization import DivergenceError


@dataclass(frozen=True)
class FnmHyperParams:
    factors: int = 10
    learning_rate: float = 0.002
    regularization: float = 0.04
    epochs: int = 20
    alpha: float = 0.5
    init_range: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.factors < 1:
            raise ValueError("factors must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.regularization < 0:
            raise ValueError("regularization must be non-negative")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.init_range <= 0:
            raise ValueError("init_range must be positive")


def _weighted_group_mean(index, values, weights, size):
    wsum = np.bincount(index, weights=weights, minlength=size)
    num = np.bincount(index, weights=weights * values, minlength=size)
    count = np.bincount(index, minlength=size)
    plain = np.bincount(index, weights=values, minlength=size)
    out = np.zeros(size)
    pos = wsum > 0
    out[pos] = num[pos] / wsum[pos]
    zero = (~pos) & (count > 0)
    out[zero] = plain[zero] / count[zero]
    return out


def init_baselines(train: RatingsDataset, w: WeightVector | None = None):
    """Global mean, then item offsets, then user offsets, each a weighted mean.

    Groups without ratings get 0.  Groups whose weights are all zero fall
    back to unweighted means.
    """
    if len(train) == 0:
        raise ValueError("cannot initialise baselines on an empty dataset")
    weights = check_weights(train, w).training_weights()
    total = weights.sum()
    mu = float(np.dot(weights, train.ratings) / total) if total > 0 else float(train.ratings.mean())
    b_item = _weighted_group_mean(train.items, train.ratings - mu, weights, train.num_items)
    resid = train.ratings - mu - b_item[train.items]
    b_user = _weighted_group_mean(train.users, resid, weights, train.num_users)
    return mu, b_user, b_item


@dataclass(eq=False)
class FnmModel:
    mu: float
    b_user: np.ndarray
    b_item: np.ndarray
    base_user: np.ndarray
    base_item: np.ndarray
    q: np.ndarray  # N x F
    x: np.ndarray  # N x F
    y: np.ndarray  # N x F
    hyper: FnmHyperParams
    indptr: np.ndarray
    rated_items: np.ndarray
    rated_values: np.ndarray
    rated_weights: np.ndarray
    P: np.ndarray | None = None
    known_items: np.ndarray | None = None
    scale: tuple = (1.0, 5.0)

    @property
    def alpha(self) -> float:
        return self.hyper.alpha

    @property
    def known_users(self) -> np.ndarray:
        return np.diff(self.indptr) > 0

    def refresh_user_factors(self) -> None:
        self.P = _all_user_factors(
            self.indptr,
            self.rated_items,
            self.rated_values,
            self.rated_weights,
            self.mu,
            self.base_user,
            self.base_item,
            self.x,
            self.y,
            self.hyper.alpha,
        )

    def user_component(self, u: int) -> np.ndarray:
        return _user_factor(
            u,
            self.indptr,
            self.rated_items,
            self.rated_values,
            self.rated_weights,
            self.mu,
            self.base_user,
            self.base_item,
            self.x,
            self.y,
            self.hyper.alpha,
        )

    def predict(self, users, items) -> np.ndarray:
        """Unclamped predictions; cold users drop ``b_u`` and the factor term,
        cold items drop ``b_i`` and the factor term."""
        users = np.atleast_1d(np.asarray(users, dtype=np.int64))
        items = np.atleast_1d(np.asarray(items, dtype=np.int64))
        if self.P is None:
            self.refresh_user_factors()
        known_u = self.known_users[users]
        known_i = self.known_items[items]
        out = np.full(len(users), self.mu)
        out += np.where(known_u, self.b_user[users], 0.0)
        out += np.where(known_i, self.b_item[items], 0.0)
        both = known_u & known_i
        out[both] += np.einsum("ij,ij->i", self.q[items[both]], self.P[users[both]])
        return out


@numba.njit(cache=True, nogil=True)
def _user_factor(u, indptr, items, values, weights, mu, base_user, base_item, x, y, alpha):
    F = x.shape[1]
    p = np.zeros(F)
    lo, hi = indptr[u], indptr[u + 1]
    n = hi - lo
    if n == 0:
        return p
    norm = n ** (-alpha)
    for s in range(lo, hi):
        j = items[s]
        wj = weights[s]
        dev = wj * (values[s] - (mu + base_user[u] + base_item[j]))
        for f in range(F):
            p[f] += norm * (dev * x[j, f] + wj * y[j, f])
    return p


@numba.njit(cache=True, nogil=True)
def _all_user_factors(indptr, items, values, weights, mu, base_user, base_item, x, y, alpha):
    M = len(indptr) - 1
    P = np.zeros((M, x.shape[1]))
    for u in range(M):
        P[u] = _user_factor(u, indptr, items, values, weights, mu, base_user, base_item, x, y, alpha)
    return P


@numba.njit(cache=True, nogil=True)
def _fnm_epoch(
    user_order,
    indptr,
    items,
    values,
    weights,
    mu,
    base_user,
    base_item,
    b_user,
    b_item,
    q,
    x,
    y,
    lr,
    lam,
    alpha,
):
    F = q.shape[1]
    sum_error = np.zeros(F)
    for u in user_order:
        lo, hi = indptr[u], indptr[u + 1]
        n = hi - lo
        if n == 0:
            continue
        norm = n ** (-alpha)
        p = _user_factor(u, indptr, items, values, weights, mu, base_user, base_item, x, y, alpha)
        sum_error[:] = 0.0
        for s in range(lo, hi):
            i = items[s]
            w = weights[s]
            pred = mu + b_user[u] + b_item[i]
            for f in range(F):
                pred += q[i, f] * p[f]
            e = values[s] - pred
            step = lr * w
            for f in range(F):
                qi = q[i, f]
                sum_error[f] += w * e * qi
                q[i, f] = qi + step * (e * p[f] - lam * qi)
            b_user[u] += step * (e - lam * b_user[u])
            b_item[i] += step * (e - lam * b_item[i])
        for s in range(lo, hi):
            j = items[s]
            step = lr * weights[s]
            dev = norm * (values[s] - (mu + base_user[u] + base_item[j]))
            for f in range(F):
                x[j, f] += step * (dev * sum_error[f] - lam * x[j, f])
                y[j, f] += step * (norm * sum_error[f] - lam * y[j, f])


def _rated_lists(train: RatingsDataset, weights: np.ndarray):
    keep = weights > 0
    users, items = train.users[keep], train.items[keep]
    order = np.lexsort((items, users))
    indptr = np.zeros(train.num_users + 1, dtype=np.int64)
    np.cumsum(np.bincount(users, minlength=train.num_users), out=indptr[1:])
    return (
        indptr,
        np.ascontiguousarray(items[order]),
        np.ascontiguousarray(train.ratings[keep][order]),
        np.ascontiguousarray(weights[keep][order]),
    )


def _initial_model(train: RatingsDataset, w: WeightVector, hyper: FnmHyperParams) -> FnmModel:
    weights = w.training_weights()
    mu, b_user, b_item = init_baselines(train, w)
    rng = make_rng(hyper.seed)
    a = hyper.init_range
    shape = (train.num_items, hyper.factors)
    q = rng.uniform(-a, a, size=shape)
    x = rng.uniform(-a, a, size=shape)
    y = rng.uniform(-a, a, size=shape)
    indptr, items, values, rated_w = _rated_lists(train, weights)
    known_items = np.bincount(items, minlength=train.num_items) > 0
    return FnmModel(
        mu,
        b_user.copy(),
        b_item.copy(),
        b_user,
        b_item,
        q,
        x,
        y,
        hyper,
        indptr,
        items,
        values,
        rated_w,
        None,
        known_items,
        train.scale,
    )


def fnm_epoch(model: FnmModel, epoch_seed: int) -> FnmModel:
    """One user-major SGD sweep in a seeded user order, in place."""
    order = make_rng(epoch_seed).permutation(len(model.indptr) - 1)
    h = model.hyper
    _fnm_epoch(
        order,
        model.indptr,
        model.rated_items,
        model.rated_values,
        model.rated_weights,
        model.mu,
        model.base_user,
        model.base_item,
        model.b_user,
        model.b_item,
        model.q,
        model.x,
        model.y,
        h.learning_rate,
        h.regularization,
        h.alpha,
    )
    for name in ("b_user", "b_item", "q", "x", "y"):
        if not np.all(np.isfinite(getattr(model, name))):
            raise DivergenceError(f"FNM parameter {name} became non-finite; lower the learning rate")
    model.P = None
    return model


def fit_fnm(train: RatingsDataset, w: WeightVector | None, hyper: FnmHyperParams) -> FnmModel:
    if len(train) == 0:
        raise ValueError("cannot fit FNM on an empty training set")
    w = check_weights(train, w)
    model = _initial_model(train, w, hyper)
    children = np.random.SeedSequence(hyper.seed).spawn(hyper.epochs)
    for child in children:
        fnm_epoch(model, int(child.generate_state(1, dtype=np.uint64)[0]))
    model.refresh_user_factors()
    return model


def predict_fnm(model: FnmModel, u: int, i: int) -> float:
    return float(model.predict([u], [i])[0])


def compute_user_component(model: FnmModel, u: int) -> np.ndarray:
    return model.user_component(u)


def fnm_objective(model: FnmModel, ds: RatingsDataset, w: WeightVector | None = None) -> float:
    """Weighted squared error plus the per-rating regularization sum.

    ``R(u)`` and the weights inside ``p_u`` come from the model's training
    data; ``ds``/``w`` select which rating terms are summed.
    """
    weights = check_weights(ds, w).training_weights()
    lam = model.hyper.regularization
    counts = np.diff(model.indptr)
    x_sq = np.einsum("ij,ij->i", model.x, model.x)
    y_sq = np.einsum("ij,ij->i", model.y, model.y)
    # per-user sums of |x_j|^2 and |y_j|^2 over R(u)
    owner = np.repeat(np.arange(len(counts)), counts)
    reg_x = np.bincount(owner, weights=x_sq[model.rated_items], minlength=len(counts))
    reg_y = np.bincount(owner, weights=y_sq[model.rated_items], minlength=len(counts))
    P = _all_user_factors(
        model.indptr,
        model.rated_items,
        model.rated_values,
        model.rated_weights,
        model.mu,
        model.base_user,
        model.base_item,
        model.x,
        model.y,
        model.hyper.alpha,
    )
    u, i = ds.users, ds.items
    pred = model.mu + model.b_user[u] + model.b_item[i] + np.einsum("ij,ij->i", model.q[i], P[u])
    e = ds.ratings - pred
    reg = (
        model.b_user[u] ** 2
        + model.b_item[i] ** 2
        + np.einsum("ij,ij->i", model.q[i], model.q[i])
        + reg_x[u]
        + reg_y[u]
    )
    return float(np.sum(weights * (e * e + lam * reg)))
