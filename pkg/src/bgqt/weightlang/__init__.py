"""A small typed expression language for beable weight functions."""
from .ast import (FUNCTIONS, BinOp, Call, Neg, Node, Num, Param, dump, parameters, substitute,
                  to_source)
from .evaluate import (NonNegativityError, Series, UnboundParameterError, WeightEvalError,
                       WeightValue, evaluate)
from .parser import (ArityError, UnknownIdentifierError, WeightParseError, WeightSyntaxError,
                     parse, tokenize)
from .presets import PRESETS, UnknownBuiltinError, builtin_kind, builtin_source, builtin_weight
from .typecheck import (SCALAR, SERIES, CheckedExpr, KindMismatchError, SeriesAtRootError,
                        WeightTypeError, type_of, typecheck)

__all__ = [
    "FUNCTIONS", "BinOp", "Call", "Neg", "Node", "Num", "Param", "dump", "parameters", "substitute",
    "to_source", "NonNegativityError", "Series", "UnboundParameterError", "WeightEvalError",
    "WeightValue", "evaluate", "ArityError", "UnknownIdentifierError", "WeightParseError",
    "WeightSyntaxError", "parse", "tokenize", "PRESETS", "UnknownBuiltinError", "builtin_kind",
    "builtin_source", "builtin_weight", "SCALAR", "SERIES", "CheckedExpr", "KindMismatchError",
    "SeriesAtRootError", "WeightTypeError", "type_of", "typecheck",
]
