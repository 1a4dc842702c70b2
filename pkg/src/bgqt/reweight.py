"""Self-normalized importance sampling under a beable weight.

An ensemble drawn from the quantum measure is reweighted by ``w(B)``; the
guided expectation of an observable ``f`` is estimated as
``sum_k w_k f(B_k) / sum_k w_k``.  Weights are handled as log-weights with
the maximum subtracted before exponentiation, so an overall constant factor
in ``w`` cancels and wide dynamic ranges do not overflow.  Reductions run
over records sorted by configuration index.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .beables import BeableConfiguration
from .errors import DegenerateMeasureError
from .weightlang import (CheckedExpr, builtin_kind, builtin_source, evaluate, parse,
                         typecheck)

LOW_ESS_FRACTION = 0.01


@dataclass
class WeightSpec:
    """A weight expression together with its parameter bindings."""

    source: str
    bindings: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bindings = {k: float(v) for k, v in dict(self.bindings).items()}
        self.expr = parse(self.source)

    @classmethod
    def builtin(cls, name: str, bindings: Mapping | None = None) -> "WeightSpec":
        builtin_kind(name)
        return cls(builtin_source(name), dict(bindings or {}))

    @classmethod
    def unit(cls) -> "WeightSpec":
        return cls("1")

    def check(self, kind: str) -> CheckedExpr:
        return typecheck(self.expr, kind)


_EXTRACTORS = {
    "position_at": ("bohm", ("particle", "t")),
    "sep_at": ("bohm", ("t",)),
    "final_position": ("bohm", ("particle",)),
    "flash_count": ("grw", ()),
    "first_flash_time": ("grw", ()),
    "delta_at": ("cosmo", ("step",)),
    "level_at": ("cosmo", ("step",)),
    "level_indicator": ("cosmo", ("step", "level")),
    "custom": (None, ("source",)),
}


@dataclass
class ObservableSpec:
    """A real functional of a configuration.

    ``first_flash_time`` is undefined for configurations without flashes of
    the requested particle; such records are dropped, with their weights,
    from that observable's sums and counted as ``excluded``.  ``custom``
    evaluates a weight-language expression (``args["source"]``, parameters
    from ``args["bindings"]``) and may be negative.
    """

    name: str
    extractor: str
    args: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.extractor not in _EXTRACTORS:
            raise ValueError(f"unknown extractor {self.extractor!r}")
        missing = [a for a in _EXTRACTORS[self.extractor][1] if a not in self.args]
        if missing:
            raise ValueError(f"observable {self.name!r} missing {missing}")
        self._checked = None

    @classmethod
    def from_dict(cls, d: Mapping) -> "ObservableSpec":
        d = dict(d)
        return cls(d.pop("name"), d.pop("extractor"), d)

    def kind(self) -> str | None:
        return _EXTRACTORS[self.extractor][0]

    def extract(self, c: BeableConfiguration) -> float | None:
        a = self.args
        need = self.kind()
        if need is not None and c.kind != need:
            raise ValueError(f"observable {self.name!r} needs {need} configurations, got {c.kind}")
        ex = self.extractor
        if ex in ("position_at", "sep_at", "final_position"):
            tr = c.trajectory
            k = len(tr.times) - 1 if ex == "final_position" else int(np.argmin(np.abs(tr.times - a["t"])))
            if ex == "sep_at":
                return float(abs(tr.positions[k, 0] - tr.positions[k, 1]))
            return float(tr.positions[k, int(a["particle"]) - 1])
        if ex == "flash_count":
            p = a.get("particle")
            return float(len(c.flashes if p is None else c.flashes_of(int(p))))
        if ex == "first_flash_time":
            p = a.get("particle")
            fl = c.flashes if p is None else c.flashes_of(int(p))
            return float(fl[0].t) if fl else None
        if ex in ("delta_at", "level_at", "level_indicator"):
            i = int(a["step"]) - 1
            if ex == "delta_at":
                return float(c.sequence.deltas[i])
            if ex == "level_at":
                return float(c.sequence.levels[i])
            return 1.0 if c.sequence.levels[i] == int(a["level"]) else 0.0
        if self._checked is None or self._checked.kind != c.kind:
            self._checked = typecheck(parse(a["source"]), c.kind)
        return evaluate(self._checked, a.get("bindings", {}), c, allow_negative=True).value


@dataclass(frozen=True)
class Record:
    config_id: int
    seed: int
    weight: float  # max-normalized
    log_weight: float
    values: dict


@dataclass
class WeightedEnsemble:
    """Weighted records, stored column-wise and sorted by configuration id."""

    config_ids: np.ndarray
    seeds: np.ndarray
    weights: np.ndarray  # max-normalized
    log_weights: np.ndarray
    values: dict  # observable name -> array, NaN where undefined
    sum_w: float
    sum_w2: float
    ess: float
    log_scale: float  # max log-weight
    surviving_fraction: float

    @property
    def m(self) -> int:
        return len(self.config_ids)

    @property
    def records(self) -> list[Record]:
        out = []
        for j in range(self.m):
            vals = {k: (None if np.isnan(v[j]) else float(v[j])) for k, v in self.values.items()}
            out.append(Record(int(self.config_ids[j]), int(self.seeds[j]), float(self.weights[j]),
                              float(self.log_weights[j]), vals))
        return out


@dataclass(frozen=True)
class Estimate:
    observable: str
    estimate: float
    std_error: float
    ess: float
    m: int
    used: int
    excluded: int
    low_ess: bool = False

    def to_dict(self) -> dict:
        return {"observable": self.observable, "estimate": self.estimate,
                "std_error": self.std_error, "ess": self.ess, "m": self.m,
                "used": self.used, "excluded": self.excluded, "low_ess": self.low_ess}


@dataclass
class EstimateReport:
    ensemble: WeightedEnsemble
    estimates: list
    weight_source: str = "1"
    bindings: dict = field(default_factory=dict)
    master_seed: int | None = None
    weight_diagnostics: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> Estimate:
        for e in self.estimates:
            if e.observable == name:
                return e
        raise KeyError(name)

    def to_records(self) -> list[dict]:
        out = []
        for e in self.estimates:
            d = e.to_dict()
            d.update(weight_source_text=self.weight_source, parameter_bindings=dict(self.bindings),
                     master_seed=self.master_seed,
                     surviving_fraction=self.ensemble.surviving_fraction)
            out.append(d)
        return out


def normalized_weights(log_w: np.ndarray, linear: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """``exp(log_w - max)`` and the max; raises if every weight is zero.

    If the linear weights ``linear`` are supplied they are divided by their
    maximum instead, which makes the result exactly invariant under scaling
    by a power of two.
    """
    log_w = np.asarray(log_w, dtype=float)
    if np.any(np.isnan(log_w)) or np.any(log_w == np.inf):
        raise ValueError("log-weights must be finite or -inf")
    top = float(np.max(log_w)) if log_w.size else -np.inf
    if top == -np.inf:
        raise DegenerateMeasureError("all weights are zero: the guided measure is undefined on "
                                     "the sampled support")
    if linear is not None:
        linear = np.asarray(linear, dtype=float)
        peak = float(np.max(linear))
        if peak > 0 and np.isfinite(peak) and peak >= np.finfo(float).tiny:
            return linear / peak, top
    return np.exp(log_w - top), top


def snis(w: np.ndarray, f: np.ndarray) -> tuple[float, float, float]:
    """Self-normalized estimate, delta-method standard error and ESS.

    ``w`` are non-negative (already max-normalized) weights.
    """
    sw = np.sum(w)
    if not sw > 0:
        raise DegenerateMeasureError("observable has zero total weight on its defined records")
    est = np.sum(w * f) / sw
    resid = f - est
    se = math.sqrt(np.sum(w * w * resid * resid)) / sw
    ess = sw * sw / np.sum(w * w)
    return float(est), float(se), float(ess)


def estimate_arrays(log_w, values: Mapping[str, np.ndarray], ids=None, seeds=None,
                    weight_source: str = "1", bindings=None, master_seed=None,
                    linear=None) -> EstimateReport:
    """Array form of :func:`estimate`.

    ``values[name]`` holds one entry per record; NaN marks an undefined value.
    ``linear`` optionally gives the weights themselves (``exp(log_w)``), see
    :func:`normalized_weights`.
    """
    log_w = np.asarray(log_w, dtype=float)
    m = log_w.size
    ids = np.arange(m) if ids is None else np.asarray(ids)
    order = np.argsort(ids, kind="stable")
    log_w = log_w[order]
    if linear is not None:
        linear = np.asarray(linear, dtype=float)[order]
    ids = ids[order]
    seeds = np.zeros(m, dtype=np.int64) if seeds is None else np.asarray(seeds)[order]
    vals = {k: np.asarray(v, dtype=float)[order] for k, v in values.items()}
    w, top = normalized_weights(log_w, linear)
    sum_w, sum_w2 = float(np.sum(w)), float(np.sum(w * w))
    ens_ess = sum_w * sum_w / sum_w2
    surviving = float(np.count_nonzero(w > 0) / m)
    estimates = []
    for name, f in vals.items():
        ok = ~np.isnan(f)
        est, se, ess = snis(w[ok], f[ok])
        low = ess < LOW_ESS_FRACTION * m
        estimates.append(Estimate(name, est, se, ess, m, int(ok.sum()), int((~ok).sum()), low))
    low = [e for e in estimates if e.low_ess]
    if low:
        names = ", ".join(e.observable for e in low[:3]) + (", ..." if len(low) > 3 else "")
        warnings.warn(f"effective sample size {min(e.ess for e in low):.3g} is below "
                      f"{LOW_ESS_FRACTION:.0%} of {m} ({len(low)} observable(s): {names})",
                      RuntimeWarning, stacklevel=2)
    ensemble = WeightedEnsemble(ids, seeds, w, log_w, vals, sum_w, sum_w2, ens_ess, top, surviving)
    return EstimateReport(ensemble, estimates, weight_source, dict(bindings or {}), master_seed)


def weight_values(ensemble: Sequence[BeableConfiguration], weight: WeightSpec,
                  diagnostics: dict | None = None) -> np.ndarray:
    """``w(B_k)`` per configuration.

    If ``diagnostics`` is given, it receives the number of configurations on
    which each window-truncation flag was raised.
    """
    if not ensemble:
        raise ValueError("ensemble is empty")
    checked = weight.check(ensemble[0].kind)
    out = np.empty(len(ensemble))
    for j, c in enumerate(ensemble):
        wv = evaluate(checked, weight.bindings, c)
        out[j] = wv.value
        if diagnostics is not None:
            for key in wv.diagnostics:
                if key.startswith("window:"):
                    diagnostics[key] = diagnostics.get(key, 0) + 1
    return out


def log_weights(ensemble: Sequence[BeableConfiguration], weight: WeightSpec,
                diagnostics: dict | None = None) -> np.ndarray:
    """Log of ``w(B_k)`` per configuration (``-inf`` for zero weight)."""
    with np.errstate(divide="ignore"):
        return np.log(weight_values(ensemble, weight, diagnostics))


def estimate(ensemble: Sequence[BeableConfiguration], weight: WeightSpec | None,
             observables: Sequence[ObservableSpec], master_seed=None) -> EstimateReport:
    """Estimate each observable under the guided measure ``mu_T * w``.

    ``weight=None`` gives the unweighted (quantum-measure) baseline.
    """
    weight = weight or WeightSpec.unit()
    ensemble = sorted(ensemble, key=lambda c: c.index)
    flags: dict = {}
    w = weight_values(ensemble, weight, flags)
    with np.errstate(divide="ignore"):
        lw = np.log(w)
    values = {}
    for obs in observables:
        col = [obs.extract(c) for c in ensemble]
        values[obs.name] = np.array([np.nan if v is None else v for v in col], dtype=float)
    report = estimate_arrays(lw, values, [c.index for c in ensemble], [c.seed for c in ensemble],
                             weight.source, weight.bindings, master_seed, linear=w)
    report.weight_diagnostics = flags
    return report


@dataclass(frozen=True)
class Comparison:
    observable: str
    baseline: float
    guided: float
    shift: float
    significance: float
    ess_ratio: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def compare(baseline: EstimateReport, guided: EstimateReport) -> list[Comparison]:
    """Per-observable shift of the guided estimate from the baseline."""
    names_b = [e.observable for e in baseline.estimates]
    names_g = [e.observable for e in guided.estimates]
    if names_b != names_g:
        raise ValueError(f"mismatched observables: {names_b} vs {names_g}")
    out = []
    for b, g in zip(baseline.estimates, guided.estimates):
        shift = g.estimate - b.estimate
        sigma = math.hypot(b.std_error, g.std_error)
        sig = shift / sigma if sigma > 0 else (0.0 if shift == 0 else math.copysign(math.inf, shift))
        out.append(Comparison(b.observable, b.estimate, g.estimate, shift, sig, g.ess / b.ess))
    return out
