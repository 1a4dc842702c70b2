"""Recursive-descent parser for weight expressions.

Grammar (whitespace-insensitive)::

    expr  := term { ("+" | "-") term }
    term  := unary { ("*" | "/") unary }
    unary := ["-"] atom
    atom  := NUMBER | IDENT | IDENT "(" [expr {"," expr}] ")" | "(" expr ")"
"""
from __future__ import annotations

import re
from typing import NamedTuple

from ..errors import BGQTError
from .ast import FUNCTIONS, BinOp, Call, Neg, Node, Num, Param


class WeightParseError(BGQTError, ValueError):
    """Base class for parse failures; carries the offending offset."""

    def __init__(self, message: str, source: str = "", offset: int = 0):
        self.offset = offset
        self.line, self.column = _line_col(source, offset)
        super().__init__(f"{message} (line {self.line}, column {self.column}, offset {offset})")


class WeightSyntaxError(WeightParseError):
    pass


class UnknownIdentifierError(WeightParseError):
    pass


class ArityError(WeightParseError):
    pass


def _line_col(source: str, offset: int) -> tuple[int, int]:
    line = source.count("\n", 0, offset) + 1
    col = offset - (source.rfind("\n", 0, offset) + 1) + 1
    return line, col


class Token(NamedTuple):
    kind: str  # NUM, IDENT, OP, EOF
    text: str
    start: int


_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<NUM>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<IDENT>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<OP>[-+*/(),])
""", re.VERBOSE)


def tokenize(source: str) -> list[Token]:
    pos = 0
    out = []
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise WeightSyntaxError(f"unexpected character {source[pos]!r}", source, pos)
        if m.lastgroup != "ws":
            out.append(Token(m.lastgroup, m.group(), pos))
        pos = m.end()
    out.append(Token("EOF", "", len(source)))
    return out


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def error(self, message, tok=None, cls=WeightSyntaxError):
        tok = tok or self.tok
        return cls(message, self.source, tok.start)

    def expect(self, text: str) -> Token:
        tok = self.tok
        if tok.kind != "OP" or tok.text != text:
            found = "end of input" if tok.kind == "EOF" else repr(tok.text)
            raise self.error(f"expected {text!r}, found {found}")
        self.i += 1
        return tok

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "EOF":
            raise self.error(f"unexpected {self.tok.text!r} after expression")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "OP" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            right = self.term()
            node = BinOp(op, node, right, span=(node.span[0], right.span[1]))
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok.kind == "OP" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            right = self.unary()
            node = BinOp(op, node, right, span=(node.span[0], right.span[1]))
        return node

    def unary(self) -> Node:
        if self.tok.kind == "OP" and self.tok.text == "-":
            start = self.tok.start
            self.i += 1
            operand = self.atom()
            return Neg(operand, span=(start, operand.span[1]))
        return self.atom()

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "NUM":
            self.i += 1
            return Num(float(tok.text), span=(tok.start, tok.start + len(tok.text)))
        if tok.kind == "IDENT":
            self.i += 1
            if self.tok.kind == "OP" and self.tok.text == "(":
                return self.call(tok)
            if tok.text in FUNCTIONS:
                raise self.error(f"function {tok.text!r} used without an argument list", tok)
            return Param(tok.text, span=(tok.start, tok.start + len(tok.text)))
        if tok.kind == "OP" and tok.text == "(":
            self.i += 1
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if tok.kind == "EOF" else repr(tok.text)
        raise self.error(f"expected a number, identifier or '(', found {found}")

    def call(self, name: Token) -> Node:
        if name.text not in FUNCTIONS:
            raise self.error(f"unknown function {name.text!r}", name, UnknownIdentifierError)
        self.expect("(")
        args = []
        if not (self.tok.kind == "OP" and self.tok.text == ")"):
            args.append(self.expr())
            while self.tok.kind == "OP" and self.tok.text == ",":
                self.i += 1
                args.append(self.expr())
        close = self.expect(")")
        arity = FUNCTIONS[name.text]
        if len(args) != arity:
            raise self.error(f"{name.text} takes {arity} argument(s), got {len(args)}",
                             name, ArityError)
        return Call(name.text, tuple(args), span=(name.start, close.start + 1))


def parse(source: str) -> Node:
    """Parse weight-expression source text into an AST."""
    return _Parser(source).parse()
