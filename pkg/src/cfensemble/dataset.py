"""Rating data: parsing, weights, splits and weighted means.

A :class:`RatingsDataset` holds the rating triplet as three aligned arrays
(``users``, ``items``, ``ratings``) over dense 0-based indices.  Per-rating
weights live in a separate :class:`WeightVector`, so a bootstrap sample or a
boosting distribution never duplicates the records themselves.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, TextIO, Union

import numpy as np

SCALE = (1.0, 5.0)

FORMATS = ("ml100k", "ml1m", "csv")
_SEPARATORS = {"ml100k": "\t", "ml1m": "::"}


class ParseError(ValueError):
    """Malformed rating file; ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


def make_rng(seed: int) -> np.random.Generator:
    """The one generator family used for every random choice in the package."""
    return np.random.Generator(np.random.PCG64(seed))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RatingsDataset:
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    num_users: int
    num_items: int
    scale: tuple[float, float] = SCALE
    user_ids: np.ndarray = field(default=None, repr=False)
    item_ids: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        users = np.ascontiguousarray(self.users, dtype=np.int64)
        items = np.ascontiguousarray(self.items, dtype=np.int64)
        ratings = np.ascontiguousarray(self.ratings, dtype=np.float64)
        if not (len(users) == len(items) == len(ratings)):
            raise ValueError("users, items and ratings must have equal length")
        if len(users):
            if users.min() < 0 or users.max() >= self.num_users:
                raise ValueError("user index out of range")
            if items.min() < 0 or items.max() >= self.num_items:
                raise ValueError("item index out of range")
            lo, hi = self.scale
            if ratings.min() < lo or ratings.max() > hi:
                raise ValueError(f"rating outside scale {self.scale}")
        user_ids = self.user_ids
        if user_ids is None:
            user_ids = np.arange(self.num_users)
        item_ids = self.item_ids
        if item_ids is None:
            item_ids = np.arange(self.num_items)
        for name, value in (
            ("users", users),
            ("items", items),
            ("ratings", ratings),
            ("user_ids", np.asarray(user_ids)),
            ("item_ids", np.asarray(item_ids)),
        ):
            object.__setattr__(self, name, _frozen(value))
        object.__setattr__(self, "scale", (float(self.scale[0]), float(self.scale[1])))

    def __len__(self) -> int:
        return len(self.ratings)

    @property
    def user_index_map(self) -> dict:
        return {ext: idx for idx, ext in enumerate(self.user_ids.tolist())}

    @property
    def item_index_map(self) -> dict:
        return {ext: idx for idx, ext in enumerate(self.item_ids.tolist())}

    @property
    def rating_range(self) -> float:
        return self.scale[1] - self.scale[0]

    def subset(self, index: np.ndarray) -> "RatingsDataset":
        """Records at ``index``, keeping the full user/item index space."""
        index = np.asarray(index, dtype=np.int64)
        return RatingsDataset(
            self.users[index],
            self.items[index],
            self.ratings[index],
            self.num_users,
            self.num_items,
            self.scale,
            self.user_ids,
            self.item_ids,
        )

    def pairs(self) -> np.ndarray:
        """(user, item) pairs encoded as one int64 key per record."""
        return self.users * max(self.num_items, 1) + self.items

    def clip(self, predictions: np.ndarray) -> np.ndarray:
        return np.clip(predictions, self.scale[0], self.scale[1])


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Per-rating weights aligned with ``RatingsDataset.ratings``.

    ``kind`` is ``"multiplicity"`` for bootstrap counts and ``"distribution"``
    for boosting distributions that sum to one.
    """

    values: np.ndarray
    kind: str = "multiplicity"

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.kind not in ("multiplicity", "distribution"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if values.ndim != 1:
            raise ValueError("weights must be one-dimensional")
        if len(values) and (not np.all(np.isfinite(values)) or values.min() < 0):
            raise ValueError("weights must be finite and non-negative")
        if self.kind == "multiplicity" and not np.all(values == np.round(values)):
            raise ValueError("multiplicity weights must be integers")
        if self.kind == "distribution" and len(values) and abs(values.sum() - 1.0) > 1e-9:
            raise ValueError("distribution weights must sum to 1")
        object.__setattr__(self, "values", _frozen(values))

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def ones(cls, n: int) -> "WeightVector":
        return cls(np.ones(n))

    def training_weights(self) -> np.ndarray:
        """Weights on a mean-one scale, as consumed by the SGD learners.

        A distribution is multiplied by its length; without this a step of
        ``lr * w`` would shrink by a factor of ``|R|``.
        """
        if self.kind == "multiplicity":
            return np.array(self.values)
        n = len(self.values)
        if n and np.all(self.values == self.values[0]):
            return np.ones(n)
        return self.values * n


def check_weights(ds: RatingsDataset, w: WeightVector | None) -> WeightVector:
    if w is None:
        return WeightVector.ones(len(ds))
    if len(w) != len(ds):
        raise ValueError(f"weight vector has length {len(w)}, dataset has {len(ds)} ratings")
    return w


# ---------------------------------------------------------------------------
# Parsing and export
# ---------------------------------------------------------------------------

Source = Union[bytes, str, os.PathLike, BinaryIO, TextIO]


def _read_text(source: Source) -> str:
    if isinstance(source, bytes):
        return source.decode("ascii")
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return fh.read().decode("ascii")
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("ascii")
    return data


def _sort_key(ext):
    try:
        return (0, int(ext), "")
    except ValueError:
        return (1, 0, ext)


def _build(raw_users: list, raw_items: list, values: list, line_numbers: list) -> RatingsDataset:
    user_ids = sorted(set(raw_users), key=_sort_key)
    item_ids = sorted(set(raw_items), key=_sort_key)
    umap = {ext: idx for idx, ext in enumerate(user_ids)}
    imap = {ext: idx for idx, ext in enumerate(item_ids)}
    users = np.fromiter((umap[u] for u in raw_users), dtype=np.int64, count=len(raw_users))
    items = np.fromiter((imap[i] for i in raw_items), dtype=np.int64, count=len(raw_items))
    if len(users):
        keys = users * len(item_ids) + items
        order = np.argsort(keys, kind="stable")
        dup = np.nonzero(keys[order][1:] == keys[order][:-1])[0]
        if len(dup):
            j = order[dup[0] + 1]
            raise ParseError(
                f"duplicate (user, item) pair ({raw_users[j]}, {raw_items[j]})",
                line_numbers[j],
            )

    def _ids(ids):
        if all(isinstance(x, int) for x in ids):
            return np.array(ids, dtype=np.int64)
        return np.array(ids, dtype=object)

    return RatingsDataset(
        users,
        items,
        np.array(values, dtype=np.float64),
        len(user_ids),
        len(item_ids),
        SCALE,
        _ids(user_ids),
        _ids(item_ids),
    )


def _ext_id(token: str):
    token = token.strip()
    try:
        return int(token)
    except ValueError:
        return token


def parse_ratings(source: Source, format: str = "ml100k") -> RatingsDataset:
    """Parse a MovieLens ratings file (``ml100k``, ``ml1m``) or canonical CSV.

    Timestamps are dropped.  External ids are remapped to dense indices in
    ascending id order.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    text = _read_text(source)
    if format == "csv":
        return _parse_canonical(text)[0]
    sep = _SEPARATORS[format]
    lo, hi = SCALE
    raw_users, raw_items, values, line_numbers = [], [], [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split(sep)
        if len(parts) != 4:
            raise ParseError(f"expected 4 fields separated by {sep!r}, got {len(parts)}", lineno)
        try:
            value = float(parts[2])
            int(parts[3])
        except ValueError:
            raise ParseError(f"non-numeric rating or timestamp in {line!r}", lineno) from None
        if not lo <= value <= hi:
            raise ParseError(f"rating {value:g} outside [{lo:g}, {hi:g}]", lineno)
        if not parts[0].strip() or not parts[1].strip():
            raise ParseError("empty user or item id", lineno)
        raw_users.append(_ext_id(parts[0]))
        raw_items.append(_ext_id(parts[1]))
        values.append(value)
        line_numbers.append(lineno)
    return _build(raw_users, raw_items, values, line_numbers)


def _parse_canonical(text: str) -> tuple[RatingsDataset, WeightVector]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return _build([], [], [], []), WeightVector(np.zeros(0))
    if [h.strip() for h in header] != ["user", "item", "rating", "weight"]:
        raise ParseError("expected header 'user,item,rating,weight'", 1)
    raw_users, raw_items, values, weights, line_numbers = [], [], [], [], []
    lo, hi = SCALE
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise ParseError(f"expected 4 fields, got {len(row)}", lineno)
        try:
            value, weight = float(row[2]), float(row[3])
        except ValueError:
            raise ParseError("non-numeric rating or weight", lineno) from None
        if not lo <= value <= hi:
            raise ParseError(f"rating {value:g} outside [{lo:g}, {hi:g}]", lineno)
        raw_users.append(_ext_id(row[0]))
        raw_items.append(_ext_id(row[1]))
        values.append(value)
        weights.append(weight)
        line_numbers.append(lineno)
    ds = _build(raw_users, raw_items, values, line_numbers)
    w = np.array(weights, dtype=np.float64)
    kind = "multiplicity" if np.all(w == np.round(w)) else "distribution"
    return ds, WeightVector(w, kind)


def read_canonical(source: Source) -> tuple[RatingsDataset, WeightVector]:
    """Read the ``user,item,rating,weight`` CSV written by :func:`write_canonical`."""
    return _parse_canonical(_read_text(source))


def write_canonical(ds: RatingsDataset, fh: TextIO, w: WeightVector | None = None) -> None:
    w = check_weights(ds, w)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["user", "item", "rating", "weight"])
    uid, iid = ds.user_ids, ds.item_ids
    for u, i, r, wt in zip(ds.users, ds.items, ds.ratings, w.values):
        writer.writerow([uid[u], iid[i], f"{r:g}", f"{wt:.17g}"])


# ---------------------------------------------------------------------------
# Splits and weights
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SplitPair:
    train: RatingsDataset
    test: RatingsDataset
    seed: int
    ratio: float


def random_split(ds: RatingsDataset, ratio: float = 0.8, seed: int = 0) -> SplitPair:
    """Partition records uniformly at random into train/test.

    The train side receives ``round(ratio * |R|)`` records, nudged so that
    both sides are non-empty.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    n = len(ds)
    if n < 2:
        raise ValueError("need at least 2 ratings to split")
    n_train = min(max(int(round(ratio * n)), 1), n - 1)
    perm = make_rng(seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return SplitPair(ds.subset(train_idx), ds.subset(test_idx), seed, ratio)


def bootstrap_weights(ds: RatingsDataset, seed: int) -> WeightVector:
    """Multiplicities of |R| uniform draws with replacement."""
    n = len(ds)
    if n == 0:
        raise ValueError("cannot bootstrap an empty dataset")
    draws = make_rng(seed).integers(0, n, size=n)
    return WeightVector(np.bincount(draws, minlength=n).astype(np.float64))


def uniform_distribution(ds: RatingsDataset) -> WeightVector:
    n = len(ds)
    if n == 0:
        raise ValueError("empty dataset has no uniform distribution")
    return WeightVector(np.full(n, 1.0 / n), kind="distribution")


def _group_means(index, values, weights, size, fallback):
    wsum = np.bincount(index, weights=weights, minlength=size)
    wtot = np.bincount(index, weights=weights * values, minlength=size)
    count = np.bincount(index, minlength=size)
    plain = np.bincount(index, weights=values, minlength=size)
    out = np.full(size, fallback, dtype=np.float64)
    has_weight = wsum > 0
    out[has_weight] = wtot[has_weight] / wsum[has_weight]
    zero_weight = (~has_weight) & (count > 0)
    out[zero_weight] = plain[zero_weight] / count[zero_weight]
    return out


def weighted_means(ds: RatingsDataset, w: WeightVector | None = None):
    """Global, per-user and per-item weighted means.

    A group whose ratings all carry weight 0 gets its unweighted mean; a
    group with no ratings gets the global mean.  An empty dataset yields the
    midpoint of the rating scale.
    """
    w = check_weights(ds, w)
    if len(ds) == 0:
        mid = 0.5 * (ds.scale[0] + ds.scale[1])
        return mid, np.full(ds.num_users, mid), np.full(ds.num_items, mid)
    weights = w.training_weights()
    total = weights.sum()
    if total > 0:
        global_mean = float(np.dot(weights, ds.ratings) / total)
    else:
        global_mean = float(ds.ratings.mean())
    user_means = _group_means(ds.users, ds.ratings, weights, ds.num_users, global_mean)
    item_means = _group_means(ds.items, ds.ratings, weights, ds.num_items, global_mean)
    return global_mean, user_means, item_means


def summary(ds: RatingsDataset) -> dict:
    cells = ds.num_users * ds.num_items
    return {
        "num_users": ds.num_users,
        "num_items": ds.num_items,
        "num_ratings": len(ds),
        "density": (len(ds) / cells) if cells else 0.0,
    }


def load_movielens(path: Union[str, os.PathLike], format: str | None = None) -> RatingsDataset:
    """Load a ratings file, guessing the format from its name when not given."""
    if format is None:
        name = os.path.basename(os.fspath(path))
        if name.endswith(".dat"):
            format = "ml1m"
        elif name.endswith(".csv"):
            format = "csv"
        else:
            format = "ml100k"
    return parse_ratings(path, format)


def data_dir() -> str:
    """Directory holding downloaded datasets (``CFENSEMBLE_DATA_DIR`` overrides)."""
    default = os.path.join(os.path.dirname(__file__), os.pardir, os.pardir, "data")
    return os.path.abspath(os.environ.get("CFENSEMBLE_DATA_DIR", default))


def iter_records(ds: RatingsDataset) -> Iterable[tuple[int, int, float]]:
    return zip(ds.users.tolist(), ds.items.tolist(), ds.ratings.tolist())
