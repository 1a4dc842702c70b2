"""Evaluation of checked weight expressions on beable configurations.

Series are sampled on the configuration's record grid: trajectory record
times for ``bohm``, step labels ``1..n`` for ``cosmo``.  Reducers act on the
recorded samples; ``supt``/``inft`` stand in for the infinite-time lim sup /
lim inf with the finite horizon.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import BGQTError
from .ast import REDUCERS, BinOp, Call, Neg, Node, Num, Param, to_source
from .typecheck import CheckedExpr, typecheck


class WeightEvalError(BGQTError, ArithmeticError):
    pass


class UnboundParameterError(WeightEvalError):
    def __init__(self, names):
        self.names = tuple(names)
        super().__init__(f"unbound weight parameter(s): {', '.join(self.names)}")


class NonNegativityError(WeightEvalError):
    def __init__(self, value: float, expression: str):
        self.value = value
        self.expression = expression
        super().__init__(f"weight {value!r} is negative; offending sub-expression: {expression}")


@dataclass(frozen=True)
class WeightValue:
    value: float
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class Series:
    """Samples ``values`` at grid indices ``start .. start+len-1`` of ``times``."""

    times: np.ndarray
    start: int
    values: np.ndarray

    @property
    def stop(self) -> int:
        return self.start + len(self.values)

    @property
    def window_times(self) -> np.ndarray:
        return self.times[self.start:self.stop]

    def restrict(self, start: int, stop: int) -> np.ndarray:
        return self.values[start - self.start:stop - self.start]


class _Evaluator:
    def __init__(self, bindings: Mapping, config):
        self.bindings = {k: float(v) for k, v in bindings.items()}
        self.config = config
        self.diagnostics: dict = {}
        self.minima: dict = {}  # id(node) -> smallest value the node produced
        if config.kind == "bohm":
            self.times = config.trajectory.times
        elif config.kind == "cosmo":
            self.times = np.arange(1, config.sequence.n + 1, dtype=float)
        else:
            self.times = np.zeros(0)
        self.spacing = float(self.times[1] - self.times[0]) if len(self.times) > 1 else 1.0

    def run(self, node: Node):
        value = self._run(node)
        v = value.values if isinstance(value, Series) else value
        self.minima[id(node)] = float(np.min(v))
        return value

    def _run(self, node: Node):
        if isinstance(node, Num):
            return node.value
        if isinstance(node, Param):
            return self.bindings[node.name]
        if isinstance(node, Neg):
            return self._unary(np.negative, self.run(node.operand))
        if isinstance(node, BinOp):
            return self._binary(node, self.run(node.left), self.run(node.right))
        return getattr(self, "f_" + node.name)(node)

    def culprit(self, node: Node) -> Node:
        """Follow negative values down through sign-transparent nodes (``+``,
        ``*``, ``/``, reducers) to the node that introduced the sign."""
        transparent = isinstance(node, BinOp) and node.op != "-" or (
            isinstance(node, Call) and node.name in REDUCERS)
        if transparent:
            for c in node.children():
                if self.minima.get(id(c), 0.0) < 0:
                    return self.culprit(c)
        return node

    # -- arithmetic -------------------------------------------------------
    @staticmethod
    def _unary(fn, v):
        if isinstance(v, Series):
            return Series(v.times, v.start, fn(v.values))
        return float(fn(v))

    def _binary(self, node: BinOp, a, b):
        if isinstance(a, Series) or isinstance(b, Series):
            lo = max(s.start for s in (a, b) if isinstance(s, Series))
            hi = min(s.stop for s in (a, b) if isinstance(s, Series))
            if hi <= lo:
                raise WeightEvalError(f"series in {to_source(node)!r} share no time window")
            av = a.restrict(lo, hi) if isinstance(a, Series) else a
            bv = b.restrict(lo, hi) if isinstance(b, Series) else b
            return Series(self.times, lo, self._apply(node, av, bv))
        return float(self._apply(node, a, b))

    @staticmethod
    def _apply(node, a, b):
        if node.op == "+":
            return np.add(a, b)
        if node.op == "-":
            return np.subtract(a, b)
        if node.op == "*":
            return np.multiply(a, b)
        if np.any(np.asarray(b) == 0):
            raise WeightEvalError(f"division by zero in {to_source(node)!r}")
        return np.divide(a, b)

    # -- pointwise functions ----------------------------------------------
    def f_exp(self, node):
        return self._unary(np.exp, self.run(node.args[0]))

    def f_cos2(self, node):
        return self._unary(lambda v: np.cos(v) ** 2, self.run(node.args[0]))

    def f_step(self, node):
        return self._unary(lambda v: np.where(np.asarray(v) > 0, 1.0, 0.0), self.run(node.args[0]))

    def f_abs(self, node):
        return self._unary(np.abs, self.run(node.args[0]))

    def f_sqrt(self, node):
        v = self.run(node.args[0])
        if np.any(np.asarray(v.values if isinstance(v, Series) else v) < 0):
            raise WeightEvalError(f"sqrt of a negative value in {to_source(node)!r}")
        return self._unary(np.sqrt, v)

    # -- series primitives ------------------------------------------------
    def _particle(self, node, j) -> int:
        i = int(node.args[j].value)
        if i > self.config.trajectory.particle_count:
            raise WeightEvalError(f"{to_source(node)!r} refers to particle {i} of "
                                  f"{self.config.trajectory.particle_count}")
        return i - 1

    def f_pos(self, node):
        i = self._particle(node, 0)
        return Series(self.times, 0, self.config.trajectory.positions[:, i])

    def f_sep2(self, node):
        x = self.config.trajectory.positions
        i, j = self._particle(node, 0), self._particle(node, 1)
        return Series(self.times, 0, (x[:, i] - x[:, j]) ** 2)

    def f_dseq(self, node):
        return Series(self.times, 0, self.config.sequence.deltas)

    def f_lag(self, node):
        s = self.run(node.args[0])
        shift = int(round(self.run(node.args[1]) / self.spacing))
        # lagged(t_k) = s(t_{k + shift}) on the overlap window
        start = s.start - shift
        values = s.values
        if start < 0:
            values = values[-start:]
            start = 0
        over = start + len(values) - len(self.times)
        if over > 0:
            values = values[:len(values) - over]
        if len(values) == 0:
            raise WeightEvalError(f"empty overlap window for {to_source(node)!r}")
        if shift:
            self.diagnostics[f"window:{to_source(node)}"] = (
                float(self.times[start]), float(self.times[start + len(values) - 1]))
        return Series(self.times, start, values)

    # -- reducers ---------------------------------------------------------
    def _record(self, node, value):
        self.diagnostics[to_source(node)] = float(value)
        return float(value)

    def _window(self, node, s: Series):
        t0, t1 = self.run(node.args[1]), self.run(node.args[2])
        if t1 < t0:
            raise WeightEvalError(f"reversed time window in {to_source(node)!r}")
        tol = 1e-9 * self.spacing
        t = s.window_times
        keep = (t >= t0 - tol) & (t <= t1 + tol)
        if not keep.any():
            raise WeightEvalError(f"no recorded samples inside [{t0}, {t1}] for {to_source(node)!r}")
        tk = t[keep]
        if tk[0] > t0 + tol or tk[-1] < t1 - tol:
            self.diagnostics[f"window:{to_source(node)}"] = (float(tk[0]), float(tk[-1]))
        return tk, s.values[keep]

    def f_supt(self, node):
        return self._record(node, np.max(self.run(node.args[0]).values))

    def f_inft(self, node):
        return self._record(node, np.min(self.run(node.args[0]).values))

    def f_maxt(self, node):
        _, v = self._window(node, self.run(node.args[0]))
        return self._record(node, np.max(v))

    def f_avgt(self, node):
        t, v = self._window(node, self.run(node.args[0]))
        if len(v) == 1:
            return self._record(node, v[0])
        return self._record(node, np.trapezoid(v, t) / (t[-1] - t[0]))

    def f_flashminpair(self, node):
        i, j = int(node.args[0].value), int(node.args[1].value)
        T, X = self.run(node.args[2]), self.run(node.args[3])
        if T == 0 or X == 0:
            raise WeightEvalError(f"zero scale in {to_source(node)!r}")
        a = [(f.t, f.x) for f in self.config.flashes if f.particle == i]
        b = [(f.t, f.x) for f in self.config.flashes if f.particle == j]
        if not a or not b:
            return self._record(node, 0.0)
        a, b = np.array(a), np.array(b)
        dt = a[:, None, 0] - b[None, :, 0]
        dx = a[:, None, 1] - b[None, :, 1]
        w = np.exp(-dt * dt / (T * T)) * np.exp(-dx * dx / (X * X))
        return self._record(node, np.min(w))


def evaluate(expr, bindings: Mapping, config, allow_negative: bool = False) -> WeightValue:
    """Evaluate ``expr`` (AST or checked) on one configuration.

    With ``allow_negative`` the result is treated as a real-valued observable
    rather than a weight and may be negative.
    """
    checked = expr if isinstance(expr, CheckedExpr) else typecheck(expr, config.kind)
    if checked.kind is not None and checked.kind != config.kind:
        raise WeightEvalError(f"expression checked for {checked.kind} used on {config.kind}")
    if checked.kind is None:
        typecheck(checked.expr, config.kind)
    missing = [p for p in checked.parameters if p not in bindings]
    if missing:
        raise UnboundParameterError(missing)
    ev = _Evaluator(bindings, config)
    with np.errstate(all="ignore"):
        value = ev.run(checked.expr)
    value = float(value)
    if not np.isfinite(value):
        raise WeightEvalError(f"non-finite value {value} from {to_source(checked.expr)!r}")
    if value < 0 and not allow_negative:
        raise NonNegativityError(value, to_source(ev.culprit(checked.expr)))
    return WeightValue(value, ev.diagnostics)
