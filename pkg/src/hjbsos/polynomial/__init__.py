from .core import (
    DROP_TOL,
    MultiIndex,
    PolyMatrix,
    Polynomial,
    add,
    basis_size,
    differentiate,
    evaluate,
    grlex_key,
    monomial_basis,
    mul,
    restrict,
    scale,
)
from .parse import ParseError, parse, to_expression

__all__ = [
    "DROP_TOL",
    "MultiIndex",
    "ParseError",
    "PolyMatrix",
    "Polynomial",
    "add",
    "basis_size",
    "differentiate",
    "evaluate",
    "grlex_key",
    "monomial_basis",
    "mul",
    "parse",
    "restrict",
    "scale",
    "to_expression",
]
