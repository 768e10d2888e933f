"""Sum-of-squares certificates compiled to conic constraints.

A polynomial ``p`` is certified nonnegative on
``S = {g_i >= 0, h_j = 0}`` by a Putinar-type identity
``p = s_0 + sum_i s_i g_i + sum_j t_j h_j`` with SOS ``s_i`` and free
``t_j``. Each SOS multiplier is a PSD Gram matrix over a monomial basis;
matching coefficients of both sides gives affine equalities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import conic
from .conic import ConeSolution, ProgramBuilder, SolverError, Status, smat, svec_indices
from .hjb import EPS_FLOOR, BoundaryFit, Box, ControlProblem, Facet, NoiseStructure, box_facets, fit_boundary_data, localize
from .polynomial import MultiIndex, Polynomial, basis_size, grlex_key, monomial_basis

SQRT2 = np.sqrt(2.0)


class Direction(str, Enum):
    UPPER = "upper"
    LOWER = "lower"


class CertificateDegreeError(ValueError):
    def __init__(self, given: int, minimal: int):
        super().__init__(f"certificate degree {given} is below the target degree; need at least {minimal}")
        self.given = given
        self.minimal = minimal


def even_ceil(k: int) -> int:
    return k + (k % 2)


def even_floor(k: int) -> int:
    return k - (k % 2)


# -- sets and templates --------------------------------------------------------

@dataclass(frozen=True)
class SemialgebraicSet:
    nvars: int
    inequalities: tuple[Polynomial, ...] = ()
    equalities: tuple[Polynomial, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        object.__setattr__(self, "equalities", tuple(self.equalities))
        if any(p.nvars != self.nvars for p in self.inequalities + self.equalities):
            raise ValueError("set polynomials must share nvars")

    def contains(self, x, tol: float = 1e-12) -> bool:
        return all(g.evaluate(x) >= -tol for g in self.inequalities) and all(
            abs(h.evaluate(x)) <= tol for h in self.equalities)


def box_set(box: Box) -> SemialgebraicSet:
    """``u_i - x_i >= 0`` and ``x_i - l_i >= 0`` for each axis."""
    n = box.nvars
    gs = []
    for i in range(n):
        xi = Polynomial.variable(n, i)
        gs.append(Polynomial.constant(n, box.upper[i]) - xi)
        gs.append(xi - Polynomial.constant(n, box.lower[i]))
    return SemialgebraicSet(n, gs)


def unit_box_set(nvars: int) -> SemialgebraicSet:
    if nvars == 0:
        return SemialgebraicSet(0)
    return box_set(Box((-1.0,) * nvars, (1.0,) * nvars))


@dataclass(frozen=True)
class CertificateTemplate:
    """Degrees of the multipliers in ``s_0 + sum s_i g_i + sum t_j h_j``."""

    degree: int                                   # degree of s_0, even
    sos_multiplier_degrees: tuple[int, ...] = ()
    free_multiplier_degrees: tuple[int, ...] = ()

    def __post_init__(self):
        if self.degree < 0 or self.degree % 2:
            raise ValueError("certificate degree must be even and nonnegative")
        if any(k % 2 for k in self.sos_multiplier_degrees if k >= 0):
            raise ValueError("SOS multiplier degrees must be even")

    @classmethod
    def default(cls, target_degree: int, S: SemialgebraicSet, extra_degree: int = 0) -> CertificateTemplate:
        """``deg s_i = D - deg g_i`` rounded down to even, ``deg t_j = D - deg h_j``.

        D is the smallest even degree at which every product ``s_i g_i``
        reaches the target degree. With linear box faces this is one step
        above the target for even targets; otherwise a target whose leading
        form is negative somewhere could never be matched.
        """
        t = max(target_degree, 0)
        D = even_ceil(t)
        while any(even_floor(D - g.degree) + g.degree < t for g in S.inequalities if g.degree <= D):
            D += 2
        D += 2 * extra_degree
        sos = tuple(even_floor(D - g.degree) for g in S.inequalities)
        free = tuple(D - h.degree for h in S.equalities)
        return cls(D, sos, free)


# -- affine polynomial templates ------------------------------------------------

class LinearPolynomial:
    """Polynomial whose coefficients are affine in the decision variables.

    Represents ``const + sum_col z[col] * lin[col]``.
    """

    def __init__(self, nvars: int, const: Polynomial | None = None, lin: Mapping[int, Polynomial] | None = None):
        self.nvars = nvars
        self.const = const if const is not None else Polynomial.zero(nvars)
        self.lin = {c: p for c, p in (lin or {}).items() if not p.is_zero()}

    @classmethod
    def constant(cls, p: Polynomial) -> LinearPolynomial:
        return cls(p.nvars, p)

    @classmethod
    def column(cls, col: int, p: Polynomial) -> LinearPolynomial:
        return cls(p.nvars, None, {col: p})

    @classmethod
    def combination(cls, nvars: int, cols: Sequence[int], polys: Sequence[Polynomial]) -> LinearPolynomial:
        return cls(nvars, None, dict(zip(cols, polys)))

    def _coerce(self, other) -> LinearPolynomial:
        if isinstance(other, LinearPolynomial):
            return other
        if isinstance(other, Polynomial):
            return LinearPolynomial.constant(other)
        return LinearPolynomial.constant(Polynomial.constant(self.nvars, float(other)))

    def __add__(self, other):
        other = self._coerce(other)
        lin = dict(self.lin)
        for c, p in other.lin.items():
            lin[c] = lin[c] + p if c in lin else p
        return LinearPolynomial(self.nvars, self.const + other.const, lin)

    __radd__ = __add__

    def scale(self, a: float) -> LinearPolynomial:
        return LinearPolynomial(self.nvars, self.const.scale(a), {c: p.scale(a) for c, p in self.lin.items()})

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + self._coerce(other).scale(-1.0)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def times(self, p: Polynomial) -> LinearPolynomial:
        return LinearPolynomial(self.nvars, self.const * p, {c: q * p for c, q in self.lin.items()})

    def map(self, fn) -> LinearPolynomial:
        """Apply a linear map on polynomials to every component."""
        const = fn(self.const)
        return LinearPolynomial(const.nvars, const, {c: fn(p) for c, p in self.lin.items()})

    def restrict(self, index: int, value: float) -> LinearPolynomial:
        return self.map(lambda p: p.restrict(index, value))

    @property
    def degree(self) -> int:
        return max([self.const.degree] + [p.degree for p in self.lin.values()])

    def evaluate(self, z) -> Polynomial:
        out = self.const
        for c, p in self.lin.items():
            out = out + p.scale(float(z[c]))
        return out

    def coefficient_rows(self) -> dict[MultiIndex, tuple[dict[int, float], float]]:
        """Per monomial: ({col: coefficient}, constant coefficient)."""
        rows: dict[MultiIndex, tuple[dict[int, float], float]] = {}
        for m, v in self.const.items():
            rows[m] = ({}, v)
        for c, p in self.lin.items():
            for m, v in p.items():
                cols, k = rows.setdefault(m, ({}, 0.0))
                cols[c] = cols.get(c, 0.0) + v
        return rows


# -- Gram parameterization -------------------------------------------------------

def gram_parameterize(target_degree: int, nvars: int) -> tuple[list[MultiIndex], sp.csr_matrix]:
    """Basis ``m`` and the map ``svec(Q) -> coefficients of m^T Q m``.

    Rows of the map follow ``monomial_basis(nvars, target_degree)``.
    """
    if target_degree < 0 or target_degree % 2:
        raise ValueError(f"Gram parameterization needs an even degree, got {target_degree}")
    basis = monomial_basis(nvars, target_degree // 2)
    out_basis = monomial_basis(nvars, target_degree)
    pos = {m: i for i, m in enumerate(out_basis)}
    r, c, s = svec_indices(len(basis))
    rows = [pos[tuple(a + b for a, b in zip(basis[i], basis[j]))] for i, j in zip(r, c)]
    M = sp.csr_matrix((s, (rows, np.arange(len(r)))), shape=(len(out_basis), len(r)))
    return basis, M


def _gram_entry_scale(i: int, j: int) -> float:
    # svec stores sqrt(2) Q_ij off the diagonal and m^T Q m counts Q_ij twice
    return 1.0 if i == j else SQRT2


@dataclass
class CompiledBlock:
    label: str
    certificate: CertificateTemplate
    gram_blocks: list[tuple[int, int, tuple[MultiIndex, ...]]] = field(default_factory=list)  # (offset, side, basis)
    free_blocks: list[tuple[int, tuple[MultiIndex, ...]]] = field(default_factory=list)
    rows: tuple[int, int] = (0, 0)

    def gram_matrices(self, x: np.ndarray) -> list[np.ndarray]:
        return [smat(x[o:o + k * (k + 1) // 2], k) for o, k, _ in self.gram_blocks]


def compile_nonneg_on_set(builder: ProgramBuilder, template: LinearPolynomial, S: SemialgebraicSet,
                          cert: CertificateTemplate | None = None, label: str = "") -> CompiledBlock:
    """Emit Gram blocks and coefficient-matching rows certifying ``template >= 0`` on S."""
    if template.nvars != S.nvars:
        raise ValueError("template and set disagree on nvars")
    tdeg = template.degree
    if cert is None:
        cert = CertificateTemplate.default(tdeg, S)
    if cert.degree < tdeg:
        raise CertificateDegreeError(cert.degree, even_ceil(tdeg))
    n = S.nvars
    rows: dict[MultiIndex, tuple[dict[int, float], float]] = template.coefficient_rows()
    block = CompiledBlock(label, cert)

    def add_gram(deg: int, mult: Polynomial | None, name: str):
        basis = tuple(monomial_basis(n, deg // 2))
        side = len(basis)
        off = builder.add_psd(side, f"{label} Gram {name}")
        block.gram_blocks.append((off, side, basis))
        r, c, _ = svec_indices(side)
        mult_items = list(mult.items()) if mult is not None else [((0,) * n, 1.0)]
        for idx, (i, j) in enumerate(zip(r, c)):
            base = tuple(a + b for a, b in zip(basis[i], basis[j]))
            s = _gram_entry_scale(i, j)
            for gm, gc in mult_items:
                m = tuple(a + b for a, b in zip(base, gm))
                cols, k = rows.setdefault(m, ({}, 0.0))
                cols[off + idx] = cols.get(off + idx, 0.0) - s * gc

    add_gram(cert.degree, None, "s0")
    for i, (g, deg) in enumerate(zip(S.inequalities, cert.sos_multiplier_degrees)):
        if deg >= 0:
            add_gram(deg, g, f"s{i + 1}")
    for j, (h, deg) in enumerate(zip(S.equalities, cert.free_multiplier_degrees)):
        if deg < 0:
            continue
        basis = tuple(monomial_basis(n, deg))
        off = builder.add_free(len(basis), f"{label} multiplier t{j + 1}")
        block.free_blocks.append((off, basis))
        for idx, bm in enumerate(basis):
            for hm, hc in h.items():
                m = tuple(a + b for a, b in zip(bm, hm))
                cols, k = rows.setdefault(m, ({}, 0.0))
                cols[off + idx] = cols.get(off + idx, 0.0) - hc

    first = builder.m
    for m in sorted(rows, key=grlex_key):
        cols, k = rows[m]
        cols = {c: v for c, v in cols.items() if v != 0.0}
        if not cols and k == 0.0:
            continue
        builder.add_row(cols, -k)
    block.rows = (first, builder.m)
    return block


# -- standalone SOS checks ----------------------------------------------------------

@dataclass
class SosResult:
    is_sos: bool
    gram: np.ndarray | None
    basis: list[MultiIndex]
    solution: ConeSolution
    residual: float = np.inf

    @property
    def certificate(self) -> np.ndarray | None:
        """Dual ray proving infeasibility (when not SOS)."""
        return None if self.is_sos else self.solution.dual_eq


def check_sos(p: Polynomial, tol: float = 1e-7) -> SosResult:
    """Search for a PSD Gram matrix with ``m^T Q m = p``."""
    deg = p.degree
    if deg % 2:
        raise ValueError("an SOS polynomial must have even degree")
    builder = ProgramBuilder()
    block = compile_nonneg_on_set(builder, LinearPolynomial.constant(p), SemialgebraicSet(p.nvars),
                                  CertificateTemplate(deg), "sos")
    prog = builder.build()
    sol = conic.solve(prog, tol=1e-9)
    off, side, basis = block.gram_blocks[0]
    if sol.status == Status.OPTIMAL:
        Q = smat(sol.primal[off:off + side * (side + 1) // 2], side)
        recovered = Polynomial(p.nvars)
        for i in range(side):
            for j in range(side):
                if Q[i, j] != 0.0:
                    m = tuple(a + b for a, b in zip(basis[i], basis[j]))
                    recovered = recovered + Polynomial(p.nvars, {m: Q[i, j]})
        resid = (recovered - p).max_abs_coefficient()
        ok = resid <= tol and np.linalg.eigvalsh(Q)[0] >= -tol
        return SosResult(ok, Q, list(basis), sol, resid)
    if sol.status == Status.INFEASIBLE:
        return SosResult(False, None, list(basis), sol)
    raise SolverError(f"SOS check ended with status {sol.status.value}: {sol.message}")


def certify_nonneg(p: Polynomial, S: SemialgebraicSet, cert: CertificateTemplate | None = None) -> ConeSolution:
    """Feasibility of a Putinar certificate for ``p >= 0`` on S."""
    builder = ProgramBuilder()
    compile_nonneg_on_set(builder, LinearPolynomial.constant(p), S, cert, "nonneg")
    return conic.solve(builder.build(), tol=1e-9)


# -- region subproblems -----------------------------------------------------------

@dataclass
class RegionSubproblem:
    region_id: int
    box: Box
    program: conic.ConicProgram
    basis: list[MultiIndex]
    psi_coeff_index: dict[MultiIndex, int]   # columns of local-coordinate coefficients
    gamma_index: int
    direction: Direction
    degree: int
    boundary_fits: dict[Facet, BoundaryFit]
    blocks: list[CompiledBlock]

    @property
    def boundary_slack(self) -> float:
        return max((f.max_error for f in self.boundary_fits.values()), default=0.0)

    @property
    def coupling_columns(self) -> np.ndarray:
        """Columns of z_i: Psi coefficients in basis order, then gamma."""
        return np.array([self.psi_coeff_index[m] for m in self.basis] + [self.gamma_index])

    def psi_local(self, x: np.ndarray) -> Polynomial:
        return Polynomial.from_coefficients(self.basis, [x[self.psi_coeff_index[m]] for m in self.basis])

    def psi(self, x: np.ndarray) -> Polynomial:
        return self.box.from_local(self.psi_local(x))

    def gamma(self, x: np.ndarray) -> float:
        return float(x[self.gamma_index])


@dataclass(frozen=True)
class CertificateOptions:
    extra_degree: int = 0       # raise every certificate degree by 2*extra_degree
    fit_degree: int | None = None
    fit_samples: int = 64
    eps_floor: float = EPS_FLOOR


def assemble_region_subproblem(problem: ControlProblem, region: Box, sigma: NoiseStructure, degree: int,
                               options: CertificateOptions | None = None,
                               direction: Direction | str = Direction.UPPER, region_id: int = 0) -> RegionSubproblem:
    """Compile the slack-minimizing SOS program of one region in its local chart.

    Blocks: residual sign, residual below gamma, boundary domination and
    its gap below gamma on every face lying on the domain boundary, and
    positivity of Psi.
    """
    options = options or CertificateOptions()
    direction = Direction(direction)
    if degree < 0 or degree % 2:
        raise ValueError("Psi degree must be even")
    if not all(lo >= l0 - 1e-12 and hi <= u0 + 1e-12 for lo, hi, l0, u0 in zip(
            region.lower, region.upper, problem.domain.lower, problem.domain.upper)):
        raise ValueError("region must lie inside the domain")
    n = problem.nvars
    op = localize(problem, sigma, region)
    basis = monomial_basis(n, degree)
    sign = 1.0 if direction is Direction.UPPER else -1.0

    builder = ProgramBuilder()
    off = builder.add_free(len(basis) + 1, "Psi coefficients, gamma")
    cols = list(range(off, off + len(basis)))
    gamma_col = off + len(basis)
    psi = LinearPolynomial.combination(n, cols, [Polynomial(n, {m: 1.0}) for m in basis])
    gamma = LinearPolynomial.column(gamma_col, Polynomial.constant(n, 1.0))
    residual = LinearPolynomial.combination(n, cols, [op.residual(Polynomial(n, {m: 1.0})) for m in basis])

    S = unit_box_set(n)
    blocks = []

    def emit(t: LinearPolynomial, SS: SemialgebraicSet, label: str):
        cert = CertificateTemplate.default(t.degree, SS, options.extra_degree)
        blocks.append(compile_nonneg_on_set(builder, t, SS, cert, label))

    emit(residual.scale(sign), S, "residual")
    emit(gamma - residual.scale(sign), S, "residual slack")

    fits: dict[Facet, BoundaryFit] = {}
    facet_set = unit_box_set(n - 1)
    fit_degree = degree if options.fit_degree is None else options.fit_degree
    for facet in box_facets(n):
        if not region.on_facet(facet, problem.domain):
            continue
        fit = fit_boundary_data(problem.boundary_costs[facet], problem.lam, facet, region, fit_degree,
                                options.fit_samples, local=True)
        fits[facet] = fit
        on_face = psi.restrict(facet.axis, 1.0 if facet.upper else -1.0)
        g_face = LinearPolynomial.column(gamma_col, Polynomial.constant(n - 1, 1.0))
        # The hard inequality absorbs the fit error so the bound holds for the exact data.
        gap = (on_face - fit.poly).scale(sign)
        name = facet.name(problem.variables)
        emit(gap - Polynomial.constant(n - 1, fit.max_error), facet_set, f"boundary {name}")
        emit(g_face - gap, facet_set, f"boundary slack {name}")

    emit(psi - Polynomial.constant(n, options.eps_floor), S, "positivity")
    builder.set_objective(gamma_col, 1.0)
    prog = builder.build()
    return RegionSubproblem(region_id, region, prog, list(basis), {m: c for m, c in zip(basis, cols)},
                            gamma_col, direction, degree, fits, blocks)


def solve_region(sub: RegionSubproblem, tol: float = 1e-8, method: str = "auto") -> ConeSolution:
    return conic.solve(sub.program, tol=tol, method=method)
