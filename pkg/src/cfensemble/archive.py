"""Single-file binary model archives.

Layout (all integers little-endian)::

    magic    8 bytes  b"CFENSARC"
    version  u16      currently 1
    count    u32      number of sections
    section  * count

    section:
      name_len  u16, name  utf-8 bytes
      kind      u8   0 = float64 array, 1 = int64 array, 2 = bool array,
                     3 = utf-8 JSON, 4 = nested archive
      ndim      u8, then ndim * u64 shape (arrays only; 0 otherwise)
      length    u64  payload size in bytes
      payload   raw little-endian values, row-major

Every archive has a ``meta`` JSON section naming the model type.  Ensemble
members are nested archives in sections ``member/0``, ``member/1``, ...
"""

from __future__ import annotations

import dataclasses
import io
import json
import os
import struct
import tempfile
from typing import BinaryIO

import numpy as np

from .ensemble import EnsembleModel
from .factorization import MfHyperParams, MfModel
from .fnm import FnmHyperParams, FnmModel
from .knn import KnnConfig, KnnModel

MAGIC = b"CFENSARC"
VERSION = 1

_KINDS = {0: "<f8", 1: "<i8", 2: "|b1"}
_FLOAT, _INT, _BOOL, _JSON, _NESTED = range(5)


class ArchiveError(ValueError):
    pass


def _encode_sections(sections: list[tuple[str, object]]) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<HI", VERSION, len(sections)))
    for name, value in sections:
        raw_name = name.encode("utf-8")
        out.write(struct.pack("<H", len(raw_name)))
        out.write(raw_name)
        if isinstance(value, bytes):
            out.write(struct.pack("<BBQ", _NESTED, 0, len(value)))
            out.write(value)
        elif isinstance(value, np.ndarray):
            if value.dtype == np.bool_:
                kind = _BOOL
            elif np.issubdtype(value.dtype, np.integer):
                kind = _INT
            else:
                kind = _FLOAT
            arr = np.ascontiguousarray(value, dtype=_KINDS[kind])
            out.write(struct.pack("<BB", kind, arr.ndim))
            out.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            payload = arr.tobytes()
            out.write(struct.pack("<Q", len(payload)))
            out.write(payload)
        else:
            payload = json.dumps(value, sort_keys=True).encode("utf-8")
            out.write(struct.pack("<BBQ", _JSON, 0, len(payload)))
            out.write(payload)
    return out.getvalue()


def _read_exact(buf: BinaryIO, n: int) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise ArchiveError("truncated archive")
    return data


def _decode_sections(data: bytes) -> dict:
    buf = io.BytesIO(data)
    if _read_exact(buf, 8) != MAGIC:
        raise ArchiveError("not a model archive (bad magic)")
    version, count = struct.unpack("<HI", _read_exact(buf, 6))
    if version != VERSION:
        raise ArchiveError(f"unsupported archive version {version}")
    sections = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _read_exact(buf, 2))
        name = _read_exact(buf, name_len).decode("utf-8")
        kind, ndim = struct.unpack("<BB", _read_exact(buf, 2))
        shape = struct.unpack(f"<{ndim}Q", _read_exact(buf, 8 * ndim)) if ndim else ()
        (length,) = struct.unpack("<Q", _read_exact(buf, 8))
        payload = _read_exact(buf, length)
        if kind in _KINDS:
            sections[name] = np.frombuffer(payload, dtype=_KINDS[kind]).reshape(shape).copy()
        elif kind == _JSON:
            sections[name] = json.loads(payload.decode("utf-8"))
        elif kind == _NESTED:
            sections[name] = payload
        else:
            raise ArchiveError(f"unknown section kind {kind} in {name!r}")
    return sections


def _params(obj) -> dict:
    return dataclasses.asdict(obj)


def _model_sections(model) -> list[tuple[str, object]]:
    if isinstance(model, KnnModel):
        meta = {"type": "knn", "config": _params(model.config), "global_mean": model.global_mean,
                "scale": list(model.scale)}
        fields = ("entity_means", "has_profile", "neighbor_indptr", "neighbor_index", "neighbor_sim",
                  "target_indptr", "target_entities", "target_values")
    elif isinstance(model, MfModel):
        meta = {"type": "mf", "hyper": _params(model.hyper), "global_mean": model.global_mean,
                "scale": list(model.scale), "train_log": list(model.train_log)}
        fields = ("P", "item_factors", "known_users", "known_items")
    elif isinstance(model, FnmModel):
        meta = {"type": "fnm", "hyper": _params(model.hyper), "mu": model.mu, "scale": list(model.scale)}
        fields = ("b_user", "b_item", "base_user", "base_item", "q", "x", "y", "indptr",
                  "rated_items", "rated_values", "rated_weights", "known_items")
    elif isinstance(model, EnsembleModel):
        meta = {"type": "ensemble", "method": model.method, "K": len(model),
                "build_log": model.build_log, "scale": list(model.scale),
                "member_seeds": model.member_seeds}
        # members shared by several slots (random k-NN) are stored once
        unique, slots = [], []
        for member in model.members:
            for idx, seen in enumerate(unique):
                if seen is member:
                    slots.append(idx)
                    break
            else:
                slots.append(len(unique))
                unique.append(member)
        sections = [("meta", meta), ("member_weights", model.member_weights),
                    ("member_slots", np.array(slots, dtype=np.int64))]
        sections += [(f"member/{i}", dumps(m)) for i, m in enumerate(unique)]
        return sections
    else:
        raise TypeError(f"cannot archive {type(model).__name__}")
    return [("meta", meta)] + [(name, getattr(model, name)) for name in fields]


def dumps(model) -> bytes:
    return _encode_sections(_model_sections(model))


def loads(data: bytes):
    s = _decode_sections(data)
    meta = s["meta"]
    scale = tuple(meta["scale"])
    kind = meta["type"]
    if kind == "knn":
        return KnnModel(KnnConfig(**meta["config"]), meta["global_mean"], s["entity_means"],
                        s["has_profile"], s["neighbor_indptr"], s["neighbor_index"], s["neighbor_sim"],
                        s["target_indptr"], s["target_entities"], s["target_values"], scale)
    if kind == "mf":
        return MfModel(s["P"], s["item_factors"], MfHyperParams(**meta["hyper"]), meta["global_mean"],
                       s["known_users"], s["known_items"], meta["train_log"], scale)
    if kind == "fnm":
        model = FnmModel(meta["mu"], s["b_user"], s["b_item"], s["base_user"], s["base_item"],
                         s["q"], s["x"], s["y"], FnmHyperParams(**meta["hyper"]), s["indptr"],
                         s["rated_items"], s["rated_values"], s["rated_weights"], None,
                         s["known_items"], scale)
        model.refresh_user_factors()
        return model
    if kind == "ensemble":
        unique = []
        i = 0
        while f"member/{i}" in s:
            unique.append(loads(s[f"member/{i}"]))
            i += 1
        members = [unique[j] for j in s["member_slots"]]
        return EnsembleModel(members, s["member_weights"], meta["method"], meta["build_log"], scale,
                             meta["member_seeds"])
    raise ArchiveError(f"unknown model type {kind!r}")


def atomic_write(path: str | os.PathLike, data: bytes | str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(model, path) -> None:
    atomic_write(path, dumps(model))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())


def describe(data: bytes, indent: str = "") -> list[str]:
    """Human-readable listing of an archive's sections."""
    lines = []
    for name, value in _decode_sections(data).items():
        if isinstance(value, np.ndarray):
            lines.append(f"{indent}{name}: {value.dtype.name}{list(value.shape)}")
        elif isinstance(value, bytes):
            lines.append(f"{indent}{name}: archive ({len(value)} bytes)")
            lines.extend(describe(value, indent + "  "))
        else:
            text = json.dumps(value, sort_keys=True)
            lines.append(f"{indent}{name}: {text if len(text) < 200 else text[:197] + '...'}")
    return lines
