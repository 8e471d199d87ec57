"""Weight-aware user-user and item-item k-nearest-neighbour prediction.

Both perspectives share one code path.  The *entity* is the object whose
neighbours are searched (users for ``user_user``, items for ``item_item``)
and the *target* is the other side of the rating.  Ratings with weight 0 are
treated as absent from the sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .dataset import RatingsDataset, WeightVector, check_weights, weighted_means

PERSPECTIVES = ("user_user", "item_item")
METRICS = ("pearson", "cosine")


@dataclass(frozen=True)
class KnnConfig:
    perspective: str = "user_user"
    metric: str = "pearson"
    k: int = 20
    neighbor_pool_factor: int = 1
    keep_negative: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.perspective not in PERSPECTIVES:
            raise ValueError(f"perspective must be one of {PERSPECTIVES}")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.neighbor_pool_factor not in (1, 2):
            raise ValueError("neighbor_pool_factor must be 1 or 2")


# ---------------------------------------------------------------------------
# Scalar similarity definitions
# ---------------------------------------------------------------------------


def _co_rated(profile_a: dict, profile_b: dict):
    common = sorted(set(profile_a) & set(profile_b))
    ra = np.array([profile_a[j][0] for j in common], dtype=np.float64)
    rb = np.array([profile_b[j][0] for j in common], dtype=np.float64)
    wab = np.array([max(profile_a[j][1], profile_b[j][1]) for j in common], dtype=np.float64)
    return ra, rb, wab


def weighted_pearson(profile_a: dict, profile_b: dict, mean_a: float, mean_b: float):
    """Pearson correlation over co-rated keys with pair weight ``max(w_a, w_b)``.

    Profiles map a key (item for users, user for items) to ``(rating,
    weight)``.  Returns ``None`` when fewer than two keys are shared or a
    centred norm vanishes.
    """
    ra, rb, wab = _co_rated(profile_a, profile_b)
    if len(ra) < 2:
        return None
    da, db = ra - mean_a, rb - mean_b
    na = np.sum(wab * da * da)
    nb = np.sum(wab * db * db)
    if na <= 0 or nb <= 0:
        return None
    s = np.sum(wab * da * db) / (np.sqrt(na) * np.sqrt(nb))
    return float(min(1.0, max(-1.0, s)))


def weighted_cosine(profile_a: dict, profile_b: dict):
    """Cosine similarity over co-rated keys with pair weight ``max(w_a, w_b)``."""
    ra, rb, wab = _co_rated(profile_a, profile_b)
    if len(ra) == 0:
        return None
    na = np.sum(wab * ra * ra)
    nb = np.sum(wab * rb * rb)
    if na <= 0 or nb <= 0:
        return None
    s = np.sum(wab * ra * rb) / (np.sqrt(na) * np.sqrt(nb))
    return float(min(1.0, max(-1.0, s)))


# ---------------------------------------------------------------------------
# Compiled kernels
# ---------------------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _similarity_matrix(indptr, cols, vals, wts, means, n_cols, pearson):
    n = len(indptr) - 1
    sim = np.full((n, n), np.nan)
    dense_v = np.zeros(n_cols)
    dense_w = np.zeros(n_cols)
    present = np.zeros(n_cols, dtype=np.bool_)
    min_overlap = 2 if pearson else 1
    for a in range(n):
        a0, a1 = indptr[a], indptr[a + 1]
        if a1 == a0:
            continue
        for p in range(a0, a1):
            c = cols[p]
            dense_v[c] = vals[p]
            dense_w[c] = wts[p]
            present[c] = True
        ma = means[a]
        for b in range(a + 1, n):
            b0, b1 = indptr[b], indptr[b + 1]
            if b1 == b0:
                continue
            mb = means[b]
            num = 0.0
            na = 0.0
            nb = 0.0
            overlap = 0
            for p in range(b0, b1):
                c = cols[p]
                if present[c]:
                    wab = max(dense_w[c], wts[p])
                    if pearson:
                        xa = dense_v[c] - ma
                        xb = vals[p] - mb
                    else:
                        xa = dense_v[c]
                        xb = vals[p]
                    num += wab * xa * xb
                    na += wab * xa * xa
                    nb += wab * xb * xb
                    overlap += 1
            if overlap >= min_overlap and na > 0.0 and nb > 0.0:
                s = num / (np.sqrt(na) * np.sqrt(nb))
                if s > 1.0:
                    s = 1.0
                elif s < -1.0:
                    s = -1.0
                sim[a, b] = s
                sim[b, a] = s
        for p in range(a0, a1):
            c = cols[p]
            dense_v[c] = 0.0
            dense_w[c] = 0.0
            present[c] = False
    return sim


@numba.njit(cache=True, inline="always")
def _splitmix64(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = x
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    return x, z ^ (z >> np.uint64(31))


@numba.njit(cache=True, nogil=True)
def _predict(
    entities,
    targets,
    rank,
    nb_indptr,
    nb_sim,
    t_indptr,
    t_entities,
    t_vals,
    has_profile,
    means,
    global_mean,
    k,
    pool,
    seed,
    lo,
    hi,
):
    n = len(entities)
    out = np.empty(n)
    width = 1
    for t in range(len(t_indptr) - 1):
        width = max(width, t_indptr[t + 1] - t_indptr[t])
    cand_rank = np.empty(width, dtype=np.int64)
    cand_b = np.empty(width, dtype=np.int64)
    cand_v = np.empty(width)
    chosen = np.empty(k * pool, dtype=np.int64)
    for q in range(n):
        a = entities[q]
        t = targets[q]
        if not has_profile[a]:
            out[q] = min(hi, max(lo, global_mean))
            continue
        # neighbours of a that rated t, identified by their rank in a's list
        m = 0
        for p in range(t_indptr[t], t_indptr[t + 1]):
            b = t_entities[p]
            r = rank[a, b]
            if r >= 0:
                cand_rank[m] = r
                cand_b[m] = b
                cand_v[m] = t_vals[p]
                m += 1
        order = np.argsort(cand_rank[:m])
        used = min(m, k * pool)
        for s in range(used):
            chosen[s] = order[s]
        if pool > 1 and used > k:
            # partial Fisher-Yates keyed on (seed, entity, target)
            state = np.uint64(seed) ^ (np.uint64(a) * np.uint64(0x100000001B3))
            state = state ^ (np.uint64(t) * np.uint64(0xC2B2AE3D27D4EB4F))
            for s in range(k):
                state, r = _splitmix64(state)
                j = s + np.int64(r % np.uint64(used - s))
                tmp = chosen[s]
                chosen[s] = chosen[j]
                chosen[j] = tmp
            used = k
        num = 0.0
        den = 0.0
        for s in range(used):
            c = chosen[s]
            b = cand_b[c]
            sv = nb_sim[nb_indptr[a] + cand_rank[c]]
            num += sv * (cand_v[c] - means[b])
            den += abs(sv)
        pred = means[a]
        if den > 0.0:
            pred += num / den
        out[q] = min(hi, max(lo, pred))
    return out


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


def _csr(rows, cols, values, weights, n_rows):
    order = np.lexsort((cols, rows))
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
    return (
        indptr,
        np.ascontiguousarray(cols[order]),
        np.ascontiguousarray(values[order]),
        np.ascontiguousarray(weights[order]),
    )


def _sides(ds: RatingsDataset, perspective: str):
    if perspective == "user_user":
        return ds.users, ds.items, ds.num_users, ds.num_items
    return ds.items, ds.users, ds.num_items, ds.num_users


def _neighbor_lists(sim: np.ndarray, keep_negative: bool):
    """Per-row neighbours sorted by descending similarity, ties to lower index.

    Similarities that agree to 12 decimals count as tied, so the order does
    not hinge on rounding noise (an overlap-1 cosine is 1 up to an ulp).

    Also returns ``rank[a, b]``: the position of ``b`` in ``a``'s list, or -1.
    """
    n = sim.shape[0]
    indptr = np.zeros(n + 1, dtype=np.int64)
    rank = np.full((n, n), -1, dtype=np.int32)
    index, values = [], []
    for a in range(n):
        row = sim[a]
        valid = ~np.isnan(row)
        if not keep_negative:
            valid &= row > 0
        idx = np.nonzero(valid)[0]
        order = np.lexsort((idx, -np.round(row[idx], 12)))
        idx = idx[order]
        rank[a, idx] = np.arange(len(idx), dtype=np.int32)
        index.append(idx)
        values.append(row[idx])
        indptr[a + 1] = indptr[a] + len(idx)
    if n:
        return indptr, np.concatenate(index).astype(np.int64), np.concatenate(values), rank
    return indptr, np.zeros(0, dtype=np.int64), np.zeros(0), rank


@dataclass(eq=False)
class KnnModel:
    """A fitted neighbourhood model.

    ``neighbor_*`` hold each entity's neighbours sorted by descending
    similarity; ``target_*`` list, for every target, the entities that rated
    it (with positive weight) and their ratings.
    """

    config: KnnConfig
    global_mean: float
    entity_means: np.ndarray
    has_profile: np.ndarray
    neighbor_indptr: np.ndarray
    neighbor_index: np.ndarray
    neighbor_sim: np.ndarray
    target_indptr: np.ndarray
    target_entities: np.ndarray
    target_values: np.ndarray
    scale: tuple = (1.0, 5.0)
    rank: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.rank is None:
            n = len(self.neighbor_indptr) - 1
            self.rank = np.full((n, n), -1, dtype=np.int32)
            for a in range(n):
                lo, hi = self.neighbor_indptr[a], self.neighbor_indptr[a + 1]
                self.rank[a, self.neighbor_index[lo:hi]] = np.arange(hi - lo, dtype=np.int32)

    def neighbors(self, entity: int) -> list[tuple[int, float]]:
        lo, hi = self.neighbor_indptr[entity], self.neighbor_indptr[entity + 1]
        return list(zip(self.neighbor_index[lo:hi].tolist(), self.neighbor_sim[lo:hi].tolist()))

    def with_selection(self, pool_factor: int, seed: int, k: int | None = None) -> "KnnModel":
        """Same similarity table with a different neighbour selection rule."""
        config = replace(
            self.config,
            neighbor_pool_factor=pool_factor,
            seed=seed,
            k=self.config.k if k is None else k,
        )
        return replace(self, config=config)

    def predict(self, users, items, seed: int | None = None) -> np.ndarray:
        """Clamped predictions for aligned arrays of user and item indices.

        ``seed`` overrides the configured selection seed of a random k-NN.
        """
        users = np.atleast_1d(np.asarray(users, dtype=np.int64))
        items = np.atleast_1d(np.asarray(items, dtype=np.int64))
        if self.config.perspective == "user_user":
            entities, targets = users, items
        else:
            entities, targets = items, users
        return _predict(
            entities,
            targets,
            self.rank,
            self.neighbor_indptr,
            self.neighbor_sim,
            self.target_indptr,
            self.target_entities,
            self.target_values,
            self.has_profile,
            self.entity_means,
            self.global_mean,
            self.config.k,
            self.config.neighbor_pool_factor,
            self.config.seed if seed is None else seed,
            self.scale[0],
            self.scale[1],
        )


def fit_knn(train: RatingsDataset, w: WeightVector | None, config: KnnConfig) -> KnnModel:
    if len(train) == 0:
        raise ValueError("cannot fit k-NN on an empty training set")
    w = check_weights(train, w)
    weights = w.training_weights()
    global_mean, user_means, item_means = weighted_means(train, w)
    ent, tgt, n_ent, n_tgt = _sides(train, config.perspective)
    keep = weights > 0
    ent, tgt, vals, wts = ent[keep], tgt[keep], train.ratings[keep], weights[keep]
    indptr, cols, pvals, pwts = _csr(ent, tgt, vals, wts, n_ent)
    t_indptr, t_entities, t_vals, _ = _csr(tgt, ent, vals, wts, n_tgt)
    means = user_means if config.perspective == "user_user" else item_means
    sim = _similarity_matrix(indptr, cols, pvals, pwts, means, n_tgt, config.metric == "pearson")
    nb_indptr, nb_index, nb_sim, rank = _neighbor_lists(sim, config.keep_negative)
    return KnnModel(
        config,
        global_mean,
        means,
        np.diff(indptr) > 0,
        nb_indptr,
        nb_index,
        nb_sim,
        t_indptr,
        t_entities,
        t_vals,
        train.scale,
        rank,
    )


def predict_knn(model: KnnModel, u: int, i: int, seed: int | None = None) -> float:
    return float(model.predict([u], [i], seed)[0])
