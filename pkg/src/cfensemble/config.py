"""Experiment configuration files.

An INI-style file with one ``[experiment]`` section and one ``[model NAME]``
section per model::

    [experiment]
    dataset = ml-100k/u.data      ; relative to the file, then to the data dir
    format = ml100k
    ratio = 0.8
    split_seeds = 1, 2, 3, 4, 5
    baseline = knn-user
    seed = 0
    workers = 4                   ; default: number of CPUs
    out = results/ml100k_grid
    extended = false              ; true switches to extended_dataset/format
    extended_dataset = ml-1m/ratings.dat
    extended_format = ml1m

    [model knn-user]
    family = knn_user
    metric = pearson
    k = 20

    [model bagged-ismf]
    family = ismf
    factors = 10
    method = bagging
    K = 50

Model keys are ``family``, ``method`` (single, bagging, adaboost_rt, fusion,
random_injection), ``K``, ``seed``, ``delta``, ``n``, ``extended`` and any
field of the family's parameter record (``KnnConfig``, ``MfHyperParams``,
``FnmHyperParams``).  Models marked ``extended = true`` only run in
extended mode.  Command-line flags override ``[experiment]`` keys.  Fusion takes ``preset = knn:metric|perspective|both``
or ``preset = latent:5|10``, or a ``factors`` list.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import replace

from .dataset import data_dir
from .ensemble import BaseLearnerSpec, default_params, knn_fusion_params, latent_size_fusion_params
from .evaluation import ExperimentConfig, ModelDescriptor



class ConfigError(ValueError):
    pass


def _convert(value: str, like):
    if isinstance(like, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def _params_from(family: str, options: dict):
    base = default_params(family)
    names = {f.name: f for f in dataclasses.fields(base)}
    changes = {}
    for key, value in options.items():
        if key not in names:
            raise ConfigError(f"unknown parameter {key!r} for family {family}")
        if key == "factors" and "," in value:
            continue
        changes[key] = _convert(value, getattr(base, key))
    return replace(base, **changes)


def _descriptor(name: str, section, default_seed: int) -> ModelDescriptor:
    opts = {k: v for k, v in section.items()}
    if "family" not in opts:
        raise ConfigError(f"model {name!r}: missing 'family'")
    family = opts.pop("family")
    method = opts.pop("method", "single")
    K = int(opts.pop("k_members", opts.pop("ensemble_size", "1")))
    seed = int(opts.pop("seed", default_seed))
    delta = opts.pop("delta", None)
    n = float(opts.pop("n", "1"))
    opts.pop("extended", None)
    preset = opts.pop("preset", None)
    factors_list = opts.get("factors") if "," in opts.get("factors", "") else None
    try:
        params = _params_from(family, opts)
        spec = BaseLearnerSpec(family, params, seed)
        params_list = ()
        if method == "fusion":
            if preset is not None:
                kind, _, arg = preset.partition(":")
                if kind == "knn":
                    params_list = tuple(knn_fusion_params(arg, params.k, params.metric, params.perspective))
                    if len({p.perspective for p in params_list}) > 1:
                        spec = BaseLearnerSpec("knn", params, seed)
                elif kind == "latent":
                    params_list = tuple(latent_size_fusion_params(params, int(arg)))
                else:
                    raise ConfigError(f"model {name!r}: unknown preset {preset!r}")
            elif factors_list is not None:
                params_list = tuple(replace(params, factors=int(f)) for f in factors_list.split(","))
            else:
                raise ConfigError(f"model {name!r}: fusion needs 'preset' or a 'factors' list")
            K = len(params_list)
        return ModelDescriptor(
            name,
            spec,
            method,
            K,
            seed,
            None if delta is None else float(delta),
            n,
            params_list,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"model {name!r}: {exc}") from exc


def resolve_dataset(path: str, base_dir: str) -> str:
    """A dataset path as given, relative to the config file, or under the data dir."""
    for candidate in (path, os.path.join(base_dir, path), os.path.join(data_dir(), path)):
        if os.path.exists(candidate):
            return os.path.abspath(candidate)
    return os.path.join(data_dir(), path)


def load_config(path: str, extended: bool = False, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a config file; ``overrides`` (from the command line) win over it."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keep "K" distinct from "k"
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(str(exc)) from exc
    if not parser.has_section("experiment"):
        raise ConfigError("missing [experiment] section")
    exp = dict(parser["experiment"])
    exp.update({k: str(v) for k, v in (overrides or {}).items() if v is not None})
    extended = extended or _convert(exp.get("extended", "false"), False)
    base_dir = os.path.dirname(os.path.abspath(path))
    default_seed = int(exp.get("seed", "0"))
    models = []
    for section in parser.sections():
        if not section.startswith("model "):
            if section != "experiment":
                raise ConfigError(f"unknown section [{section}]")
            continue
        name = section[len("model "):].strip()
        body = dict(parser[section])
        if _convert(body.get("extended", "false"), False) and not extended:
            continue
        if "K" in body:
            body["k_members"] = body.pop("K")
        models.append(_descriptor(name, body, default_seed))
    if not models:
        raise ConfigError("config defines no models")
    dataset = exp.get("dataset")
    if extended and "extended_dataset" in exp:
        dataset = exp["extended_dataset"]
    if not dataset:
        raise ConfigError("[experiment] needs 'dataset'")
    seeds = tuple(int(s) for s in exp.get("split_seeds", "1,2,3,4,5").split(","))
    fmt = exp.get("extended_format") if extended and "extended_format" in exp else exp.get("format")
    try:
        return ExperimentConfig(
            resolve_dataset(dataset, base_dir),
            models,
            fmt,
            float(exp.get("ratio", "0.8")),
            seeds,
            exp.get("out"),
            exp.get("baseline"),
            int(exp.get("workers", os.cpu_count() or 1)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
