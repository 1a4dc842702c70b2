"""Static typing of weight expressions: every node is a Scalar or a Series."""
from __future__ import annotations

from dataclasses import dataclass

from ..errors import BGQTError
from .ast import POINTWISE, BinOp, Call, Neg, Node, Num, Param, parameters, to_source

SCALAR = "Scalar"
SERIES = "Series"

_KIND_OF = {"pos": "bohm", "sep2": "bohm", "flashminpair": "grw", "dseq": "cosmo"}
_INDEX_ARGS = {"pos": (0,), "sep2": (0, 1), "flashminpair": (0, 1)}


class WeightTypeError(BGQTError, TypeError):
    def __init__(self, message: str, node: Node | None = None):
        self.node = node
        where = f" in {to_source(node)!r}" if node is not None else ""
        super().__init__(message + where)


class KindMismatchError(WeightTypeError):
    pass


class SeriesAtRootError(WeightTypeError):
    pass


@dataclass(frozen=True)
class CheckedExpr:
    expr: Node
    kind: str | None
    parameters: tuple
    particles: tuple  # particle labels referenced by index arguments

    def __str__(self):
        return to_source(self.expr)


def _index(node: Node, call: Call) -> int:
    if not isinstance(node, Num) or node.value != int(node.value) or node.value < 1:
        raise WeightTypeError(f"{call.name} needs positive integer particle labels", call)
    return int(node.value)


def _type(node: Node, kind: str | None, particles: set) -> str:
    if isinstance(node, (Num, Param)):
        return SCALAR
    if isinstance(node, Neg):
        return _type(node.operand, kind, particles)
    if isinstance(node, BinOp):
        lt = _type(node.left, kind, particles)
        rt = _type(node.right, kind, particles)
        return SERIES if SERIES in (lt, rt) else SCALAR
    if not isinstance(node, Call):
        raise WeightTypeError(f"unknown node {node!r}")
    name = node.name
    need = _KIND_OF.get(name)
    if need is not None and kind is not None and need != kind:
        raise KindMismatchError(f"{name} applies to {need} configurations, not {kind}", node)
    for j in _INDEX_ARGS.get(name, ()):
        particles.add(_index(node.args[j], node))
    if name in POINTWISE:
        return _type(node.args[0], kind, particles)
    if name in ("pos", "sep2", "dseq"):
        return SERIES
    if name == "flashminpair":
        for a in node.args[2:]:
            if _type(a, kind, particles) != SCALAR:
                raise WeightTypeError("flashminpair scales must be scalars", node)
        return SCALAR
    # lag and the reducers take a series first, scalars after
    if _type(node.args[0], kind, particles) != SERIES:
        raise WeightTypeError(f"{name} expects a Series as its first argument", node)
    for a in node.args[1:]:
        if _type(a, kind, particles) != SCALAR:
            raise WeightTypeError(f"{name} expects scalar window arguments", node)
    return SERIES if name == "lag" else SCALAR


def type_of(expr: Node, kind: str | None = None) -> str:
    return _type(expr, kind, set())


def typecheck(expr: Node, kind: str | None = None) -> CheckedExpr:
    """Check ``expr`` for beable kind ``kind`` (``bohm``, ``grw``, ``cosmo`` or None)."""
    particles: set = set()
    root = _type(expr, kind, particles)
    if root != SCALAR:
        raise SeriesAtRootError("weight expression must reduce to a Scalar; wrap the "
                                "series in supt/inft/avgt/maxt", expr)
    return CheckedExpr(expr, kind, tuple(parameters(expr)), tuple(sorted(particles)))
