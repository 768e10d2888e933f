"""Recursive-descent parser for polynomial expressions.

Grammar (whitespace insensitive)::

    expr   := term (('+' | '-') term)*
    term   := unary ('*' unary)*
    unary  := ('+' | '-') unary | power
    power  := base ('^' uint)?
    base   := real | ident | '(' expr ')'

Unary signs are accepted in addition to the bare grammar so that inputs
such as ``0.1*(-2*x - x^3)`` parse. The parser first builds an expression
tree and then expands it into a canonical :class:`Polynomial`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence, Union

from .core import Polynomial

MAX_EXPONENT = 64

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*^()])
    """,
    re.VERBOSE,
)


class ParseError(ValueError):
    """Malformed expression; ``position`` is the 0-based character offset."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    pos: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


# -- expression tree --------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class Sum:
    terms: tuple  # of (sign, Node)


@dataclass(frozen=True)
class Product:
    factors: tuple


@dataclass(frozen=True)
class Power:
    base: "Node"
    exponent: int


Node = Union[Num, Var, Neg, Sum, Product, Power]


class _Parser:
    def __init__(self, text: str, variables: Sequence[str]):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0
        self.names = {name: k for k, name in enumerate(variables)}

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def error(self, message: str, tok: Token | None = None):
        tok = tok or self.tok
        raise ParseError(message, tok.pos, self.text)

    def parse(self) -> Node:
        if self.tok.kind == "end":
            self.error("empty expression")
        node = self.expr()
        if self.tok.kind != "end":
            self.error(f"unexpected {self.tok.value!r}")
        return node

    def expr(self) -> Node:
        terms = [(1, self.term())]
        while self.tok.kind == "op" and self.tok.value in "+-":
            sign = 1 if self.advance().value == "+" else -1
            terms.append((sign, self.term()))
        return terms[0][1] if len(terms) == 1 else Sum(tuple(terms))

    def term(self) -> Node:
        factors = [self.unary()]
        while self.tok.kind == "op" and self.tok.value == "*":
            self.advance()
            factors.append(self.unary())
        return factors[0] if len(factors) == 1 else Product(tuple(factors))

    def unary(self) -> Node:
        if self.tok.kind == "op" and self.tok.value in "+-":
            neg = self.advance().value == "-"
            inner = self.unary()
            return Neg(inner) if neg else inner
        return self.power()

    def power(self) -> Node:
        base = self.base()
        if self.tok.kind == "op" and self.tok.value == "^":
            self.advance()
            tok = self.tok
            if tok.kind == "op" and tok.value == "-":
                self.error("negative exponent", tok)
            if tok.kind != "number":
                self.error("expected integer exponent", tok)
            if not tok.value.isdigit():
                self.error(f"non-integer exponent {tok.value!r}", tok)
            k = int(tok.value)
            if k > MAX_EXPONENT:
                self.error(f"exponent {k} exceeds limit {MAX_EXPONENT}", tok)
            self.advance()
            return Power(base, k)
        return base

    def base(self) -> Node:
        tok = self.tok
        if tok.kind == "number":
            self.advance()
            return Num(float(tok.value))
        if tok.kind == "ident":
            if tok.value not in self.names:
                self.error(f"unknown identifier {tok.value!r}", tok)
            self.advance()
            return Var(self.names[tok.value])
        if tok.kind == "op" and tok.value == "(":
            self.advance()
            node = self.expr()
            if not (self.tok.kind == "op" and self.tok.value == ")"):
                self.error("expected ')'")
            self.advance()
            return node
        if tok.kind == "end":
            self.error("unexpected end of expression", tok)
        self.error(f"unexpected {tok.value!r}", tok)


def parse_tree(expr: str, variables: Sequence[str]) -> Node:
    return _Parser(expr, variables).parse()


def expand(node: Node, nvars: int) -> Polynomial:
    if isinstance(node, Num):
        return Polynomial.constant(nvars, node.value)
    if isinstance(node, Var):
        return Polynomial.variable(nvars, node.index)
    if isinstance(node, Neg):
        return -expand(node.operand, nvars)
    if isinstance(node, Sum):
        acc = Polynomial.zero(nvars)
        for sign, t in node.terms:
            p = expand(t, nvars)
            acc = acc + p if sign > 0 else acc - p
        return acc
    if isinstance(node, Product):
        acc = Polynomial.constant(nvars, 1.0)
        for f in node.factors:
            acc = acc * expand(f, nvars)
        return acc
    if isinstance(node, Power):
        return expand(node.base, nvars) ** node.exponent
    raise TypeError(f"unknown node {node!r}")


def parse(expr: str, variables: Sequence[str]) -> Polynomial:
    """Parse ``expr`` over the ordered variable names into a polynomial."""
    variables = list(variables)
    if len(set(variables)) != len(variables):
        raise ValueError("duplicate variable names")
    return expand(parse_tree(expr, variables), len(variables))


def to_expression(p: Polynomial, variables: Sequence[str]) -> str:
    """Inverse of :func:`parse` at the coefficient level (17 digits)."""
    return p.to_string(list(variables), precision=17)
