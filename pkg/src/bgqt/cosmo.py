"""Phenomenological cosmological sequence models.

A baseline Markov chain over discretized inhomogeneity scales ``delta``
stands in for the quantum measure over quasiclassical histories: step ``i``
corresponds to volume ``V_i`` with ``V_1 < V_2 < ...``.  The guided measure
either conditions on intervals ``delta_i in (lo_i, hi_i)`` or multiplies in a
sequence weight ``p({delta_i})``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .beables import BeableConfiguration, CosmoSequence
from .errors import DegenerateMeasureError, DescriptorError
from .reweight import EstimateReport, ObservableSpec, WeightSpec, estimate_arrays, log_weights
from .seeding import block_uniforms

ROW_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class BaselineChain:
    """``deltas[l]`` is the scale of level ``l``; ``transition`` is ``(L, L)``
    (time-homogeneous) or ``(n-1, L, L)`` (one matrix per volume step)."""

    deltas: np.ndarray
    initial: np.ndarray
    transition: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=float)
        p0 = np.asarray(self.initial, dtype=float)
        T = np.asarray(self.transition, dtype=float)
        L = d.size
        if np.any(d <= 0) or np.any(np.diff(d) <= 0):
            raise DescriptorError("level scales must be positive and increasing")
        if p0.shape != (L,) or T.shape[-2:] != (L, L) or T.ndim not in (2, 3):
            raise DescriptorError("initial/transition shapes do not match the level count")
        if np.any(p0 < 0) or abs(p0.sum() - 1) > ROW_TOL:
            raise DescriptorError("initial distribution must be a probability vector")
        if np.any(T < 0) or np.any(np.abs(T.sum(axis=-1) - 1) > ROW_TOL):
            raise DescriptorError("transition rows must be non-negative and sum to 1")
        for name, v in (("deltas", d), ("initial", p0), ("transition", T)):
            object.__setattr__(self, name, v)

    @property
    def n_levels(self) -> int:
        return self.deltas.size

    def step_matrix(self, i: int) -> np.ndarray:
        """Transition from step ``i`` to ``i + 1`` (0-based)."""
        return self.transition if self.transition.ndim == 2 else self.transition[i]

    def check_length(self, n: int) -> None:
        if n < 1:
            raise ValueError("sequence length must be >= 1")
        if self.transition.ndim == 3 and self.transition.shape[0] < n - 1:
            raise ValueError(f"chain has {self.transition.shape[0]} step matrices, need {n - 1}")

    @staticmethod
    def geometric_levels(n_levels: int = 16, delta_min: float = 1e-5,
                         delta_max: float = 1e-3) -> np.ndarray:
        return np.geomspace(delta_min, delta_max, n_levels)

    @classmethod
    def from_dict(cls, d: Mapping) -> "BaselineChain":
        L = int(d.get("levels", 16))
        deltas = cls.geometric_levels(L, float(d.get("delta_min", 1e-5)), float(d.get("delta_max", 1e-3)))
        init = d.get("initial", "uniform")
        p0 = np.full(L, 1.0 / L) if init == "uniform" else np.asarray(init, dtype=float)
        trans = d.get("transition", {"type": "lazy_walk", "stay": 0.5})
        if isinstance(trans, Mapping):
            T = transition_matrix(L, **trans)
        elif trans == "identity":
            T = np.eye(L)
        elif trans == "uniform":
            T = np.full((L, L), 1.0 / L)
        else:
            T = np.asarray(trans, dtype=float)
        return cls(deltas, p0, T)

    def to_dict(self) -> dict:
        return {"deltas": self.deltas.tolist(), "initial": self.initial.tolist(),
                "transition": self.transition.tolist()}


def transition_matrix(n_levels: int, type: str = "lazy_walk", stay: float = 0.5) -> np.ndarray:
    """Reflecting nearest-neighbour walk that stays put with probability ``stay``."""
    if type != "lazy_walk":
        raise DescriptorError(f"unknown transition type {type!r}")
    L = n_levels
    T = np.zeros((L, L))
    move = 1.0 - stay
    for i in range(L):
        T[i, i] = stay
        if i > 0:
            T[i, i - 1] += move / 2
        else:
            T[i, i] += move / 2
        if i < L - 1:
            T[i, i + 1] += move / 2
        else:
            T[i, i] += move / 2
    return T


def random_chain(n_levels: int, rng: np.random.Generator, concentration: float = 1.0,
                 delta_min: float = 1e-5, delta_max: float = 1e-3) -> BaselineChain:
    """Chain with Dirichlet-distributed initial vector and transition rows."""
    p0 = rng.dirichlet(np.full(n_levels, concentration))
    T = rng.dirichlet(np.full(n_levels, concentration), size=n_levels)
    # exact row normalization after the float draw
    T = T / T.sum(axis=1, keepdims=True)
    return BaselineChain(BaselineChain.geometric_levels(n_levels, delta_min, delta_max),
                         p0 / p0.sum(), T)


def sample_levels(chain: BaselineChain, n: int, m: int, master_seed: int,
                  start: int = 0) -> np.ndarray:
    """Level paths ``(m, n)`` for members ``start .. start+m-1``.

    Member ``k`` consumes uniforms ``[k*n, (k+1)*n)`` of the stream seeded by
    ``master_seed`` and nothing else.
    """
    chain.check_length(n)
    if m < 1:
        raise ValueError("ensemble size must be >= 1")
    u = block_uniforms(master_seed, m, n, start)
    L = chain.n_levels
    out = np.empty((m, n), dtype=np.int64)
    out[:, 0] = np.minimum(np.searchsorted(np.cumsum(chain.initial), u[:, 0], side="right"), L - 1)
    for i in range(1, n):
        cum = np.cumsum(chain.step_matrix(i - 1), axis=1)[out[:, i - 1]]
        out[:, i] = np.minimum((cum <= u[:, i, None]).sum(axis=1), L - 1)
    return out


def default_volumes(n: int) -> np.ndarray:
    return np.arange(1, n + 1, dtype=float)


def sample_sequences(chain: BaselineChain, n: int, m: int, master_seed: int,
                     volumes=None) -> list[CosmoSequence]:
    levels = sample_levels(chain, n, m, master_seed)
    vols = default_volumes(n) if volumes is None else np.asarray(volumes, dtype=float)
    return [CosmoSequence(vols, chain.deltas[row], row) for row in levels]


def as_configurations(sequences: Sequence[CosmoSequence], master_seed: int = 0) -> list[BeableConfiguration]:
    return [BeableConfiguration("cosmo", seed=int(master_seed), horizon=float(s.volumes[-1]),
                                index=k, sequence=s, diagnostics={"member": k})
            for k, s in enumerate(sequences)]


@dataclass
class ConstraintSpec:
    """Hard intervals, per-step weight tables, or a weight expression over ``dseq()``.

    ``intervals[i]`` is ``(lo, hi)`` for step ``i + 1`` or ``None`` for no
    constraint; membership is the open interval ``lo < delta < hi``.
    ``tables`` has shape ``(n, L)``: the guided weight is
    ``prod_i tables[i, level_i]``.
    """

    variant: str
    intervals: list | None = None
    tables: np.ndarray | None = None
    weight: WeightSpec | None = None

    def __post_init__(self):
        if self.variant == "hard":
            if self.intervals is None:
                raise DescriptorError("hard constraint needs intervals")
            for iv in self.intervals:
                if iv is not None and not iv[0] < iv[1]:
                    raise DescriptorError(f"interval {iv} is empty")
        elif self.variant == "soft":
            if (self.tables is None) == (self.weight is None):
                raise DescriptorError("soft constraint needs exactly one of tables / weight")
            if self.tables is not None:
                self.tables = np.asarray(self.tables, dtype=float)
                if np.any(self.tables < 0) or not np.all(np.isfinite(self.tables)):
                    raise DescriptorError("soft weight tables must be finite and non-negative")
        else:
            raise DescriptorError(f"unknown constraint variant {self.variant!r}")

    @classmethod
    def hard(cls, intervals) -> "ConstraintSpec":
        return cls("hard", intervals=[None if iv is None else tuple(iv) for iv in intervals])

    @classmethod
    def soft(cls, tables=None, weight: WeightSpec | None = None) -> "ConstraintSpec":
        return cls("soft", tables=tables, weight=weight)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ConstraintSpec":
        if d["type"] == "hard":
            return cls.hard(d["intervals"])
        if "tables" in d:
            return cls.soft(tables=d["tables"])
        return cls.soft(weight=WeightSpec(d["source"], d.get("bindings", {})))

    @property
    def length(self) -> int | None:
        if self.variant == "hard":
            return len(self.intervals)
        return None if self.tables is None else self.tables.shape[0]

    def step_factors(self, deltas: np.ndarray) -> np.ndarray:
        """Per-step, per-level factors ``(n, L)``; only for factorized variants."""
        if self.variant == "hard":
            out = np.ones((len(self.intervals), deltas.size))
            for i, iv in enumerate(self.intervals):
                if iv is not None:
                    out[i] = (deltas > iv[0]) & (deltas < iv[1])
            return out
        if self.tables is None:
            raise ValueError("a weight-expression constraint does not factorize over steps")
        if self.tables.shape[1] != deltas.size:
            raise ValueError("weight table width does not match the level count")
        return self.tables

    def enlarged(self, factor: float) -> "ConstraintSpec":
        """Hard constraint with every interval widened (geometrically) by ``factor``."""
        if self.variant != "hard":
            raise ValueError("only hard constraints can be enlarged")
        return ConstraintSpec.hard([None if iv is None else (iv[0] / factor, iv[1] * factor)
                                    for iv in self.intervals])


def marginal_observables(n: int, n_levels: int) -> list[ObservableSpec]:
    return [ObservableSpec(f"p[{i + 1},{l}]", "level_indicator", {"step": i + 1, "level": l})
            for i in range(n) for l in range(n_levels)]


def _stack(sequences) -> tuple[np.ndarray, np.ndarray]:
    seqs = [s.sequence if isinstance(s, BeableConfiguration) else s for s in sequences]
    return np.array([s.levels for s in seqs]), np.array([s.deltas for s in seqs])


def constrain(sequences: Sequence, spec: ConstraintSpec, n_levels: int | None = None,
              master_seed=None) -> EstimateReport:
    """Reweight baseline sequences by ``spec`` and estimate per-step level marginals.

    Observables are named ``p[i,l]`` (step ``i`` 1-based, level ``l``).
    """
    if len(sequences) == 0:
        raise ValueError("no sequences to reweight")
    levels, dvals = _stack(sequences)
    return constrain_levels(levels, dvals, spec, n_levels, master_seed,
                            sequences=sequences)


def constrain_levels(levels: np.ndarray, dvals: np.ndarray, spec: ConstraintSpec,
                     n_levels: int | None = None, master_seed=None,
                     sequences=None, extra_values: Mapping | None = None) -> EstimateReport:
    """Array form of :func:`constrain`: ``levels`` and ``dvals`` are ``(M, n)``.

    ``extra_values`` adds further observables (one value per sequence, NaN
    for undefined) to the report after the marginals.
    """
    levels = np.asarray(levels)
    dvals = np.asarray(dvals, dtype=float)
    m, n = levels.shape
    if spec.length is not None and spec.length != n:
        raise ValueError(f"constraint covers {spec.length} steps, sequences have {n}")
    L = n_levels if n_levels is not None else int(levels.max()) + 1
    if spec.variant == "hard":
        ok = np.ones(m, dtype=bool)
        for i, iv in enumerate(spec.intervals):
            if iv is not None:
                ok &= (dvals[:, i] > iv[0]) & (dvals[:, i] < iv[1])
        with np.errstate(divide="ignore"):
            log_w = np.log(ok.astype(float))
        source = _interval_source(spec.intervals)
        bindings = {}
    elif spec.tables is not None:
        if spec.tables.shape[1] < L:
            raise ValueError("weight table width does not match the level count")
        with np.errstate(divide="ignore"):
            log_t = np.log(spec.tables)
        log_w = log_t[np.arange(n)[None, :], levels].sum(axis=1)
        source = "prod_i tables[i, level_i]"
        bindings = {}
    else:
        if sequences is None:
            sequences = [CosmoSequence(default_volumes(n), d, lv) for lv, d in zip(levels, dvals)]
        configs = as_configurations([s.sequence if isinstance(s, BeableConfiguration) else s
                                     for s in sequences])
        log_w = log_weights(configs, spec.weight)
        source, bindings = spec.weight.source, spec.weight.bindings
    values = {f"p[{i + 1},{l}]": (levels[:, i] == l).astype(float)
              for i in range(n) for l in range(L)}
    values.update(extra_values or {})
    return estimate_arrays(log_w, values, weight_source=source, bindings=bindings,
                           master_seed=master_seed)


def _interval_source(intervals) -> str:
    parts = [f"1[{lo!r} < delta_{i + 1} < {hi!r}]" for i, iv in enumerate(intervals)
             if iv is not None for lo, hi in [iv]]
    return " * ".join(parts) if parts else "1"


def report_marginals(report: EstimateReport, n: int, n_levels: int) -> tuple[np.ndarray, np.ndarray]:
    """``(estimates, std_errors)`` arrays of shape ``(n, L)`` from :func:`constrain`."""
    est = np.empty((n, n_levels))
    se = np.empty((n, n_levels))
    for i in range(n):
        for l in range(n_levels):
            e = report[f"p[{i + 1},{l}]"]
            est[i, l], se[i, l] = e.estimate, e.std_error
    return est, se


@dataclass(frozen=True, eq=False)
class Posterior:
    marginals: np.ndarray  # (n, L)
    evidence: float  # baseline probability mass of the constraint (expected weight)


def exact_posterior(chain: BaselineChain, spec: ConstraintSpec, n: int | None = None) -> Posterior:
    """Exact per-step marginals of the guided measure by scaled forward-backward."""
    n = spec.length if n is None else n
    if n is None:
        raise ValueError("sequence length is required")
    chain.check_length(n)
    e = spec.step_factors(chain.deltas)
    if e.shape[0] != n:
        raise ValueError(f"constraint covers {e.shape[0]} steps, expected {n}")
    L = chain.n_levels
    alpha = np.empty((n, L))
    scale = np.empty(n)
    a = chain.initial * e[0]
    for i in range(n):
        if i:
            a = (alpha[i - 1] @ chain.step_matrix(i - 1)) * e[i]
        scale[i] = a.sum()
        if not scale[i] > 0:
            raise DegenerateMeasureError(f"constraint set has zero probability (step {i + 1})")
        alpha[i] = a / scale[i]
    beta = np.ones((n, L))
    for i in range(n - 2, -1, -1):
        beta[i] = chain.step_matrix(i) @ (e[i + 1] * beta[i + 1]) / scale[i + 1]
    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    return Posterior(gamma, float(np.prod(scale)))


def unconstrained_marginals(chain: BaselineChain, n: int) -> np.ndarray:
    chain.check_length(n)
    out = np.empty((n, chain.n_levels))
    out[0] = chain.initial
    for i in range(1, n):
        out[i] = out[i - 1] @ chain.step_matrix(i - 1)
    return out


def write_marginals_csv(marginals: np.ndarray, path) -> None:
    """Columns ``step, level, probability`` (step 1-based)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "level", "probability"])
        for i in range(marginals.shape[0]):
            for l in range(marginals.shape[1]):
                w.writerow([i + 1, l, repr(float(marginals[i, l]))])
