"""Weight-expression syntax tree and its canonical printer."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

# name -> arity
FUNCTIONS = {
    "exp": 1, "cos2": 1, "step": 1, "sqrt": 1, "abs": 1,
    "pos": 1, "sep2": 2, "lag": 2, "dseq": 0,
    "supt": 1, "inft": 1, "avgt": 3, "maxt": 3,
    "flashminpair": 4,
}
POINTWISE = ("exp", "cos2", "step", "sqrt", "abs")
REDUCERS = ("supt", "inft", "avgt", "maxt")


class Node:
    """Base class; ``span`` is ``(start, end)`` offsets into the source and is
    ignored by equality."""

    def children(self) -> tuple:
        return ()

    def walk(self):
        yield self
        for c in self.children():
            yield from c.walk()

    def __str__(self):
        return to_source(self)


@dataclass(frozen=True)
class Num(Node):
    value: float
    span: tuple | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        v = float(self.value)
        if not math.isfinite(v) or v < 0:
            raise ValueError(f"numeric literal must be finite and non-negative, got {v}")
        object.__setattr__(self, "value", v)


@dataclass(frozen=True)
class Param(Node):
    name: str
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Neg(Node):
    operand: Node
    span: tuple | None = field(default=None, compare=False, repr=False)

    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node
    span: tuple | None = field(default=None, compare=False, repr=False)

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: tuple
    span: tuple | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))

    def children(self):
        return self.args


def to_source(node: Node) -> str:
    """Print ``node`` fully parenthesized; ``parse(to_source(n)) == n``."""
    if isinstance(node, Num):
        v = node.value
        return str(int(v)) if v.is_integer() and v < 1e15 else repr(v)
    if isinstance(node, Param):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    raise TypeError(f"not a weight-expression node: {node!r}")


def parameters(node: Node) -> list[str]:
    """Free parameter names, sorted."""
    return sorted({n.name for n in node.walk() if isinstance(n, Param)})


def substitute(node: Node, values: dict) -> Node:
    """Replace bound parameters by numeric literals."""
    if isinstance(node, Param) and node.name in values:
        v = float(values[node.name])
        return Num(v) if v >= 0 else Neg(Num(-v))
    if isinstance(node, Neg):
        return Neg(substitute(node.operand, values))
    if isinstance(node, BinOp):
        return BinOp(node.op, substitute(node.left, values), substitute(node.right, values))
    if isinstance(node, Call):
        return Call(node.name, tuple(substitute(a, values) for a in node.args))
    return node


def dump(node: Node, types: dict | None = None, indent: str = "  ") -> str:
    """Indented one-node-per-line rendering; ``types`` maps ``id(node)`` to a label."""
    lines = []

    def label(n: Node) -> str:
        if isinstance(n, Num):
            return f"Num {to_source(n)}"
        if isinstance(n, Param):
            return f"Param {n.name}"
        if isinstance(n, Neg):
            return "Neg"
        if isinstance(n, BinOp):
            return f"BinOp {n.op}"
        return f"Call {n.name}/{len(n.args)}"

    def visit(n: Node, depth: int) -> None:
        text = indent * depth + label(n)
        if types is not None and id(n) in types:
            text += f" : {types[id(n)]}"
        if n.span is not None:
            text += f"  @{n.span[0]}..{n.span[1]}"
        lines.append(text)
        for c in n.children():
            visit(c, depth + 1)

    visit(node, 0)
    return "\n".join(lines)
