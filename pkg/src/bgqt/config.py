"""Experiment configs: JSON loading, schema validation and semantic checks.

A config is validated in two passes.  The shipped JSON schema
(``bgqt/data/schema.json``) checks structure; :func:`build_experiment` then
constructs the model objects, parses and type-checks the weight and custom
observables against the model kind, and confirms every weight parameter is
bound.  Both passes raise :class:`ConfigError`.
"""
from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Mapping

import jsonschema

from .bohm import NODE_EPSILON, BohmConfig, InitialDistribution
from .cosmo import BaselineChain, ConstraintSpec
from .errors import BGQTError, ConfigError
from .grw import CollapseParams, GRWConfig
from .quantum import GridSpec, PotentialSpec
from .reweight import ObservableSpec, WeightSpec
from .weightlang import WeightParseError, builtin_kind, parameters

DEFAULT_OUTPUT_DIR = "bgqt_output"


@functools.lru_cache(maxsize=None)
def schema() -> dict:
    return json.loads(resources.files("bgqt").joinpath("data/schema.json").read_text())


def shipped_configs() -> dict[str, str]:
    """Name -> JSON text of the example configs bundled with the package."""
    root = resources.files("bgqt").joinpath("data/configs")
    return {p.name: p.read_text() for p in sorted(root.iterdir(), key=lambda p: p.name)
            if p.name.endswith(".json")}


@dataclass
class Experiment:
    raw: dict
    model: str
    model_config: Any  # BohmConfig | GRWConfig | (BaselineChain, n)
    weight: WeightSpec
    observables: list
    ensemble_size: int
    master_seed: int
    output_dir: str
    constraint: ConstraintSpec | None = None
    sequence_length: int | None = None
    extras: dict = field(default_factory=dict)


def validate_schema(raw: Any) -> None:
    v = jsonschema.Draft202012Validator(schema())
    errors = sorted(v.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"schema error at {where}: {e.message}")


def _check_bound(what: str, expr, bindings: Mapping) -> None:
    missing = [p for p in parameters(expr) if p not in bindings]
    if missing:
        raise ConfigError(f"unbound parameter(s) in {what}: {', '.join(repr(m) for m in missing)}")


def _weight_spec(raw: Mapping, kind: str) -> WeightSpec:
    w = raw.get("weight")
    if w is None:
        return WeightSpec.unit()
    try:
        if "builtin" in w:
            if builtin_kind(w["builtin"]) != kind:
                raise ConfigError(f"builtin weight {w['builtin']!r} is for "
                                  f"{builtin_kind(w['builtin'])} models, not {kind}")
            spec = WeightSpec.builtin(w["builtin"], w.get("bindings", {}))
        else:
            spec = WeightSpec(w["source"], w.get("bindings", {}))
        spec.check(kind)
    except ConfigError:
        raise
    except (WeightParseError, BGQTError, KeyError) as exc:
        raise ConfigError(f"weight: {exc}") from exc
    _check_bound("weight", spec.expr, spec.bindings)
    return spec


def _observables(raw: Mapping, kind: str) -> list[ObservableSpec]:
    out = []
    for d in raw.get("observables", []):
        try:
            obs = ObservableSpec.from_dict(d)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if obs.kind() not in (None, kind):
            raise ConfigError(f"observable {obs.name!r} ({obs.extractor}) does not apply to {kind} models")
        if obs.extractor == "custom":
            spec = WeightSpec(obs.args["source"], obs.args.get("bindings", {}))
            try:
                spec.check(kind)
            except (WeightParseError, BGQTError) as exc:
                raise ConfigError(f"observable {obs.name!r}: {exc}") from exc
            _check_bound(f"observable {obs.name!r}", spec.expr, spec.bindings)
        out.append(obs)
    names = [o.name for o in out]
    if len(set(names)) != len(names):
        raise ConfigError("observable names must be unique")
    return out


def build_experiment(raw: Mapping, seed: int | None = None, output_dir: str | None = None) -> Experiment:
    """Validate ``raw`` and build the model objects.

    ``seed`` and ``output_dir`` override the config's values.
    """
    validate_schema(raw)
    raw = json.loads(json.dumps(raw))
    model = raw["model"]
    m = raw["ensemble_size"]
    master_seed = raw["master_seed"] if seed is None else int(seed)
    out = output_dir or raw.get("output", {}).get("dir", DEFAULT_OUTPUT_DIR)
    try:
        if model == "cosmo":
            if "weight" in raw:
                raise ConfigError("cosmo models are reweighted through 'constraint', not 'weight'")
            chain = BaselineChain.from_dict(raw["chain"])
            n = raw["sequence_length"]
            chain.check_length(n)
            constraint = ConstraintSpec.from_dict(raw["constraint"])
            if constraint.length is not None and constraint.length != n:
                raise ConfigError(f"constraint covers {constraint.length} steps, "
                                  f"sequence_length is {n}")
            if constraint.tables is not None and constraint.tables.shape[1] != chain.n_levels:
                raise ConfigError("constraint tables do not match the level count")
            if constraint.weight is not None:
                try:
                    constraint.weight.check("cosmo")
                except (WeightParseError, BGQTError) as exc:
                    raise ConfigError(f"constraint: {exc}") from exc
                _check_bound("constraint", constraint.weight.expr, constraint.weight.bindings)
            weight = constraint.weight or WeightSpec.unit()
            return Experiment(raw, model, chain, weight, _observables(raw, model), m, master_seed,
                              out, constraint=constraint, sequence_length=n)
        grid = GridSpec.from_dict(raw["grid"])
        potential = PotentialSpec.from_dict(raw["potential"])
        potential.values(grid)
        horizon = float(raw["horizon"])
        if model == "bohm":
            cfg = BohmConfig(grid, potential, raw["initial_state"], horizon,
                             raw.get("record_stride", 1),
                             InitialDistribution.from_dict(raw.get("initial_distribution")),
                             raw.get("node_epsilon", NODE_EPSILON))
            cfg.initial_distribution.check_support(grid)
        else:
            if "record_stride" in raw:
                raise ConfigError("record_stride applies to bohm models only")
            cfg = GRWConfig(grid, potential, raw["initial_state"],
                            CollapseParams.from_dict(raw["collapse"]), horizon)
            cfg.collapse.check(grid, horizon)
            cfg.n_total
        cfg.psi0()
    except ConfigError:
        raise
    except (BGQTError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from exc
    return Experiment(raw, model, cfg, _weight_spec(raw, model), _observables(raw, model), m,
                      master_seed, out)


def load_config(path, seed: int | None = None, output_dir: str | None = None) -> tuple[Experiment, bytes]:
    """Read, validate and build; returns the experiment and the exact config bytes."""
    try:
        data = path.read_bytes() if hasattr(path, "read_bytes") else open(path, "rb").read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        raw = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return build_experiment(raw, seed, output_dir), data
