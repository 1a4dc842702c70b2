"""Named weight presets.

``bohm_baroque`` reads the time integral over ``[0, 1]`` as ``avgt`` on a unit
window, ``max_t (x_1(t))^2`` as the running maximum of ``x_1^2``, and the
shifted comparison ``x_2^2(t + T)`` as ``lag(pos(2)*pos(2), T)`` on the
truncated overlap window.
"""
from __future__ import annotations

from typing import Mapping

from ..errors import BGQTError
from .ast import Node, substitute
from .parser import parse

PRESETS = {
    "bohm_limsup": ("bohm", "exp(-supt(sep2(1,2))/(a*a))"),
    "bohm_timeavg": ("bohm", "avgt(exp(-sep2(1,2)/(a*a)), 0, T)"),
    "bohm_baroque": (
        "bohm",
        "alpha*exp(-avgt(sep2(1,2), 0, 1)/(a*a))"
        " + beta*exp(-maxt(sep2(1,2), 2, 6)/(b*b))"
        " + gamma*step(supt(pos(1)*pos(1)) - c*c)"
        " + delta*cos2(supt(pos(1)*pos(1) - lag(pos(2)*pos(2), T)))",
    ),
    "grw_pairmin": ("grw", "flashminpair(1, 2, T, X)"),
}


class UnknownBuiltinError(BGQTError, KeyError):
    pass


def builtin_source(name: str) -> str:
    try:
        return PRESETS[name][1]
    except KeyError:
        raise UnknownBuiltinError(f"unknown builtin weight {name!r}; known: {sorted(PRESETS)}") from None


def builtin_kind(name: str) -> str:
    builtin_source(name)
    return PRESETS[name][0]


def builtin_weight(name: str, params: Mapping | None = None, **kw) -> Node:
    """AST of preset ``name`` with the given parameters inlined as literals.

    Parameters left unspecified stay free and must be bound at evaluation.
    """
    values = dict(params or {})
    values.update(kw)
    return substitute(parse(builtin_source(name)), values)
