"""Sparse multivariate polynomials over real coefficients.

A polynomial is an immutable map from exponent tuples (one entry per
variable) to float coefficients. Monomials are ordered graded
lexicographically everywhere: lower total degree first, and within a degree
the larger exponent on the earlier variable first, so the basis for two
variables at degree 2 reads ``1, x, y, x^2, xy, y^2``.
"""

from __future__ import annotations

from functools import cached_property
from math import comb
from typing import Iterable, Mapping, Sequence

import numpy as np

MultiIndex = tuple[int, ...]

# Coefficients at or below this magnitude are dropped after arithmetic.
DROP_TOL = 1e-12


def grlex_key(m: MultiIndex) -> tuple:
    return (sum(m), tuple(-e for e in m))


def _exponents_of_degree(nvars: int, deg: int) -> list[MultiIndex]:
    if nvars == 1:
        return [(deg,)]
    out = []
    for first in range(deg, -1, -1):
        for rest in _exponents_of_degree(nvars - 1, deg - first):
            out.append((first,) + rest)
    return out


def monomial_basis(nvars: int, max_deg: int) -> list[MultiIndex]:
    """All exponent tuples of total degree <= max_deg in graded lex order."""
    if nvars < 0:
        raise ValueError("nvars must be >= 0")
    if max_deg < 0:
        raise ValueError("max_deg must be >= 0")
    if nvars == 0:
        return [()]  # point facets of 1-D domains
    basis: list[MultiIndex] = []
    for d in range(max_deg + 1):
        basis.extend(_exponents_of_degree(nvars, d))
    return basis


def basis_size(nvars: int, max_deg: int) -> int:
    if nvars == 0:
        return 1
    return comb(nvars + max_deg, max_deg)


def _add_monomials(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    return tuple(x + y for x, y in zip(a, b))


class Polynomial:
    """Immutable sparse polynomial in ``nvars`` variables."""

    def __init__(self, nvars: int, terms: Mapping[MultiIndex, float] | None = None, *, drop_tol: float = 0.0):
        if nvars < 0:
            raise ValueError("nvars must be non-negative")
        self.nvars = int(nvars)
        clean: dict[MultiIndex, float] = {}
        for m, c in (terms or {}).items():
            m = tuple(int(e) for e in m)
            if len(m) != nvars:
                raise ValueError(f"monomial {m} has length {len(m)}, expected {nvars}")
            if any(e < 0 for e in m):
                raise ValueError(f"negative exponent in {m}")
            c = float(c)
            if abs(c) > drop_tol:
                clean[m] = clean.get(m, 0.0) + c
        self._terms = {m: c for m, c in sorted(clean.items(), key=lambda t: grlex_key(t[0])) if c != 0.0}

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> Polynomial:
        return cls(nvars)

    @classmethod
    def constant(cls, nvars: int, value: float) -> Polynomial:
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def variable(cls, nvars: int, index: int) -> Polynomial:
        if not 0 <= index < nvars:
            raise IndexError(f"variable index {index} out of range for {nvars} variables")
        m = [0] * nvars
        m[index] = 1
        return cls(nvars, {tuple(m): 1.0})

    @classmethod
    def from_coefficients(cls, basis: Sequence[MultiIndex], coeffs: Iterable[float]) -> Polynomial:
        coeffs = list(coeffs)
        if len(basis) != len(coeffs):
            raise ValueError("basis and coefficient vector differ in length")
        nvars = len(basis[0]) if basis else 0
        return cls(nvars, dict(zip(basis, coeffs)))

    # -- inspection -------------------------------------------------------

    @property
    def terms(self) -> Mapping[MultiIndex, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def coefficient(self, m: MultiIndex) -> float:
        return self._terms.get(tuple(m), 0.0)

    def is_zero(self) -> bool:
        return not self._terms

    @property
    def degree(self) -> int:
        return max((sum(m) for m in self._terms), default=0)

    def is_constant(self) -> bool:
        return all(sum(m) == 0 for m in self._terms)

    def constant_term(self) -> float:
        return self._terms.get((0,) * self.nvars, 0.0)

    def coefficient_vector(self, basis: Sequence[MultiIndex]) -> np.ndarray:
        index = {m: i for i, m in enumerate(basis)}
        vec = np.zeros(len(basis))
        for m, c in self._terms.items():
            if m not in index:
                raise ValueError(f"monomial {m} not in basis")
            vec[index[m]] = c
        return vec

    def max_abs_coefficient(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    # -- arithmetic -------------------------------------------------------

    def _check(self, other: Polynomial) -> None:
        if self.nvars != other.nvars:
            raise ValueError(f"nvars mismatch: {self.nvars} vs {other.nvars}")

    def _coerce(self, other) -> Polynomial:
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.nvars, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0.0) + c
        return Polynomial(self.nvars, out, drop_tol=DROP_TOL)

    __radd__ = __add__

    def __neg__(self) -> Polynomial:
        return Polynomial(self.nvars, {m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other - self

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.scale(float(other))
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict[MultiIndex, float] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = _add_monomials(m1, m2)
                out[m] = out.get(m, 0.0) + c1 * c2
        return Polynomial(self.nvars, out, drop_tol=DROP_TOL)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> Polynomial:
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ValueError("polynomial powers must be non-negative integers")
        result = Polynomial.constant(self.nvars, 1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def scale(self, c: float) -> Polynomial:
        return Polynomial(self.nvars, {m: c * v for m, v in self._terms.items()}, drop_tol=DROP_TOL)

    # -- calculus and substitution -----------------------------------------

    def differentiate(self, index: int) -> Polynomial:
        if not 0 <= index < self.nvars:
            raise IndexError(f"variable index {index} out of range for {self.nvars} variables")
        out = {}
        for m, c in self._terms.items():
            e = m[index]
            if e:
                mm = list(m)
                mm[index] = e - 1
                out[tuple(mm)] = c * e
        return Polynomial(self.nvars, out)

    def gradient(self) -> list[Polynomial]:
        return [self.differentiate(i) for i in range(self.nvars)]

    def restrict(self, index: int, value: float) -> Polynomial:
        """Substitute x_index = value, dropping that variable."""
        if not 0 <= index < self.nvars:
            raise IndexError(f"variable index {index} out of range for {self.nvars} variables")
        out: dict[MultiIndex, float] = {}
        for m, c in self._terms.items():
            mm = m[:index] + m[index + 1:]
            out[mm] = out.get(mm, 0.0) + c * value ** m[index]
        return Polynomial(self.nvars - 1, out, drop_tol=DROP_TOL)

    def insert_variable(self, index: int) -> Polynomial:
        """Embed into nvars+1 variables with a new variable at ``index``."""
        if not 0 <= index <= self.nvars:
            raise IndexError("insert position out of range")
        return Polynomial(self.nvars + 1, {m[:index] + (0,) + m[index:]: c for m, c in self._terms.items()})

    def affine_substitute(self, offset: Sequence[float], scale: Sequence[float]) -> Polynomial:
        """Return p(offset + scale * x) with the map applied per variable."""
        if len(offset) != self.nvars or len(scale) != self.nvars:
            raise ValueError("offset/scale length must equal nvars")
        if not self._terms:
            return self
        maxdeg = [max(m[i] for m in self._terms) for i in range(self.nvars)]
        # binomial expansions of (a + b x)^k per variable
        powers = []
        for i in range(self.nvars):
            a, b = float(offset[i]), float(scale[i])
            table = []
            for k in range(maxdeg[i] + 1):
                table.append([comb(k, j) * a ** (k - j) * b ** j for j in range(k + 1)])
            powers.append(table)
        out: dict[MultiIndex, float] = {}
        for m, c in self._terms.items():
            partial = {(): c}
            for i, k in enumerate(m):
                row = powers[i][k]
                nxt = {}
                for mm, v in partial.items():
                    for j, w in enumerate(row):
                        if w != 0.0:
                            key = mm + (j,)
                            nxt[key] = nxt.get(key, 0.0) + v * w
                partial = nxt
            for mm, v in partial.items():
                out[mm] = out.get(mm, 0.0) + v
        return Polynomial(self.nvars, out, drop_tol=DROP_TOL)

    # -- evaluation ---------------------------------------------------------

    @cached_property
    def _packed(self) -> tuple[np.ndarray, np.ndarray]:
        exps = np.array(list(self._terms.keys()), dtype=np.int64).reshape(len(self._terms), self.nvars)
        coeffs = np.array(list(self._terms.values()), dtype=float)
        return exps, coeffs

    def evaluate(self, point: Sequence[float]) -> float:
        point = np.asarray(point, dtype=float).reshape(-1)
        if point.shape[0] != self.nvars:
            raise ValueError(f"point has length {point.shape[0]}, expected {self.nvars}")
        return float(self.evaluate_many(point[None, :])[0])

    __call__ = evaluate

    def evaluate_many(self, points) -> np.ndarray:
        """Evaluate at each row of ``points`` (shape (k, nvars))."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None] if self.nvars == 1 else pts[None, :]
        if pts.shape[1] != self.nvars:
            raise ValueError(f"points have {pts.shape[1]} columns, expected {self.nvars}")
        exps, coeffs = self._packed
        if coeffs.size == 0:
            return np.zeros(pts.shape[0])
        mon = np.ones((pts.shape[0], coeffs.size))
        for i in range(self.nvars):
            mon *= pts[:, i:i + 1] ** exps[None, :, i]
        return mon @ coeffs

    # -- comparison and display ----------------------------------------------

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.nvars, other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self._terms == other._terms

    def __hash__(self):
        return hash((self.nvars, tuple(self._terms.items())))

    def allclose(self, other: Polynomial, tol: float = 1e-12) -> bool:
        self._check(other)
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coefficient(m) - other.coefficient(m)) <= tol for m in keys)

    def to_string(self, names: Sequence[str] | None = None, precision: int = 17) -> str:
        if names is None:
            names = [f"x{i}" for i in range(self.nvars)] if self.nvars > 1 else ["x"][: self.nvars]
        if not self._terms:
            return "0"
        parts = []
        for m, c in self._terms.items():
            factors = []
            for name, e in zip(names, m):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            mag = format(abs(c), f".{precision}g")
            body = "*".join(([mag] if (mag != "1" or not factors) else []) + factors)
            parts.append(("-" if c < 0 else "+", body))
        text = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        for sign, body in parts[1:]:
            text += f" {sign} {body}"
        return text

    def __repr__(self) -> str:
        return f"Polynomial({self.to_string(precision=6)!r}, nvars={self.nvars})"


# Functional forms of the core operations.

def add(p: Polynomial, q: Polynomial) -> Polynomial:
    p._check(q)
    return p + q


def mul(p: Polynomial, q: Polynomial) -> Polynomial:
    p._check(q)
    return p * q


def scale(p: Polynomial, c: float) -> Polynomial:
    return p.scale(c)


def differentiate(p: Polynomial, var_index: int) -> Polynomial:
    return p.differentiate(var_index)


def evaluate(p: Polynomial, point: Sequence[float]) -> float:
    return p.evaluate(point)


def restrict(p: Polynomial, var_index: int, value: float) -> Polynomial:
    return p.restrict(var_index, value)


class PolyMatrix:
    """Rectangular array of polynomials sharing one variable count."""

    def __init__(self, rows: Sequence[Sequence[Polynomial]]):
        rows = [list(r) for r in rows]
        if not rows or not rows[0]:
            raise ValueError("PolyMatrix needs at least one entry")
        ncols = len(rows[0])
        if any(len(r) != ncols for r in rows):
            raise ValueError("ragged PolyMatrix rows")
        nv = rows[0][0].nvars
        if any(p.nvars != nv for r in rows for p in r):
            raise ValueError("PolyMatrix entries disagree on nvars")
        self.rows = tuple(tuple(r) for r in rows)
        self.nvars = nv

    @classmethod
    def from_array(cls, nvars: int, array) -> PolyMatrix:
        arr = np.atleast_2d(np.asarray(array, dtype=float))
        return cls([[Polynomial.constant(nvars, v) for v in row] for row in arr])

    @classmethod
    def column(cls, entries: Sequence[Polynomial]) -> PolyMatrix:
        return cls([[p] for p in entries])

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows), len(self.rows[0])

    def __getitem__(self, ij):
        i, j = ij
        return self.rows[i][j]

    def entries(self):
        for r in self.rows:
            yield from r

    def transpose(self) -> PolyMatrix:
        return PolyMatrix([list(col) for col in zip(*self.rows)])

    @property
    def T(self) -> PolyMatrix:
        return self.transpose()

    def matmul(self, other) -> PolyMatrix:
        if not isinstance(other, PolyMatrix):
            other = PolyMatrix.from_array(self.nvars, other)
        n, k = self.shape
        k2, m = other.shape
        if k != k2:
            raise ValueError(f"shape mismatch {self.shape} @ {other.shape}")
        out = []
        for i in range(n):
            row = []
            for j in range(m):
                acc = Polynomial.zero(self.nvars)
                for t in range(k):
                    acc = acc + self.rows[i][t] * other.rows[t][j]
                row.append(acc)
            out.append(row)
        return PolyMatrix(out)

    __matmul__ = matmul

    def __rmatmul__(self, other):
        return PolyMatrix.from_array(self.nvars, other).matmul(self)

    def scale(self, c: float) -> PolyMatrix:
        return PolyMatrix([[p.scale(c) for p in r] for r in self.rows])

    def is_constant(self) -> bool:
        return all(p.is_constant() for p in self.entries())

    def to_array(self) -> np.ndarray:
        if not self.is_constant():
            raise ValueError("matrix has state-dependent entries")
        return np.array([[p.constant_term() for p in r] for r in self.rows])

    def max_abs_difference(self, other: PolyMatrix) -> float:
        if self.shape != other.shape:
            raise ValueError("shape mismatch")
        worst = 0.0
        for p, q in zip(self.entries(), other.entries()):
            worst = max(worst, (p - q).max_abs_coefficient())
        return worst

    def map(self, fn) -> PolyMatrix:
        return PolyMatrix([[fn(p) for p in r] for r in self.rows])
