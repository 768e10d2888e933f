"""Linearly-solvable stochastic control in the first-exit setting.

Dynamics ``dx = (f(x) + G(x) u) dt + B(x) dw`` with ``Cov(dw) = Sigma_eps dt``,
running cost ``q(x) + u^T R u / 2`` and terminal cost ``phi`` on the facet
where the state leaves the box. When ``lambda G R^-1 G^T = B Sigma_eps B^T``
the substitution ``V = -lambda log Psi`` turns the HJB equation into the
linear PDE ``(1/lambda) q Psi = L(Psi)`` with generator
``L(Psi) = f . grad Psi + 1/2 tr(Hess Psi Sigma_t)``.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .polynomial import PolyMatrix, Polynomial, monomial_basis

EPS_FLOOR = 1e-6
NOISE_TOL = 1e-9
FIT_SAMPLES = 64


class NoiseAssumptionViolated(ValueError):
    def __init__(self, discrepancy: float):
        super().__init__(
            f"lambda G R^-1 G^T differs from B Sigma_eps B^T by {discrepancy:.3e} (max coefficient)"
        )
        self.discrepancy = discrepancy


class NonPositiveDesirability(ValueError):
    def __init__(self, value: float, floor: float = EPS_FLOOR):
        super().__init__(f"desirability {value:.6g} is not above the floor {floor:g}")
        self.value = value


# -- geometry -----------------------------------------------------------------

@dataclass(frozen=True)
class Facet:
    """One face ``x_axis = lower/upper`` of an axis-aligned box."""

    axis: int
    upper: bool

    def value(self, lower, upper) -> float:
        return float(upper[self.axis] if self.upper else lower[self.axis])

    def name(self, variables: Sequence[str]) -> str:
        return f"{variables[self.axis]}{'+' if self.upper else '-'}"

    @classmethod
    def parse(cls, text: str, variables: Sequence[str]) -> Facet:
        text = text.strip()
        if len(text) < 2 or text[-1] not in "+-" or text[:-1] not in variables:
            raise ValueError(f"facet {text!r} must look like '<variable>+' or '<variable>-'")
        return cls(list(variables).index(text[:-1]), text[-1] == "+")


def box_facets(nvars: int) -> list[Facet]:
    return [Facet(a, up) for a in range(nvars) for up in (False, True)]


@dataclass(frozen=True)
class Box:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise ValueError("box bounds must be nonempty and of equal length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"empty box {lo} x {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def nvars(self) -> int:
        return len(self.lower)

    @property
    def center(self) -> np.ndarray:
        return (np.array(self.lower) + np.array(self.upper)) / 2.0

    @property
    def halfwidth(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / 2.0

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= np.array(self.lower) - tol) and np.all(x <= np.array(self.upper) + tol))

    def on_facet(self, facet: Facet, domain: Box) -> bool:
        """Whether this box's face ``facet`` lies on the same face of ``domain``."""
        return np.isclose(facet.value(self.lower, self.upper), facet.value(domain.lower, domain.upper))

    # Affine chart to the unit box [-1, 1]^n.

    def to_local(self, p: Polynomial) -> Polynomial:
        """p(x) -> p(center + halfwidth * xi)."""
        return p.affine_substitute(self.center, self.halfwidth)

    def from_local(self, p: Polynomial) -> Polynomial:
        """p(xi) -> p((x - center) / halfwidth)."""
        h = self.halfwidth
        return p.affine_substitute(-self.center / h, 1.0 / h)

    def local_point(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.center) / self.halfwidth


# -- problem ----------------------------------------------------------------

@dataclass(frozen=True)
class ControlProblem:
    variables: tuple[str, ...]
    drift: PolyMatrix           # n x 1
    input_matrix: PolyMatrix    # n x m
    noise_matrix: PolyMatrix    # n x k
    control_penalty: np.ndarray
    noise_covariance: np.ndarray
    lam: float
    state_cost: Polynomial
    domain: Box
    boundary_costs: Mapping[Facet, Polynomial] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.variables)
        object.__setattr__(self, "variables", tuple(self.variables))
        R = np.atleast_2d(np.asarray(self.control_penalty, dtype=float))
        S = np.atleast_2d(np.asarray(self.noise_covariance, dtype=float))
        object.__setattr__(self, "control_penalty", R)
        object.__setattr__(self, "noise_covariance", S)
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.drift.shape != (n, 1):
            raise ValueError(f"drift must be {n}x1, got {self.drift.shape}")
        if self.input_matrix.shape[0] != n or self.noise_matrix.shape[0] != n:
            raise ValueError("G and B need one row per state variable")
        m, k = self.input_matrix.shape[1], self.noise_matrix.shape[1]
        if R.shape != (m, m) or S.shape != (k, k):
            raise ValueError(f"R must be {m}x{m} and Sigma_eps {k}x{k}")
        if not np.allclose(R, R.T) or np.linalg.eigvalsh(R)[0] <= 0:
            raise ValueError("R must be symmetric positive definite")
        if not np.allclose(S, S.T) or np.linalg.eigvalsh(S)[0] < -1e-12:
            raise ValueError("Sigma_eps must be symmetric positive semidefinite")
        if self.domain.nvars != n:
            raise ValueError("domain dimension does not match the state")
        polys = [self.state_cost, *self.drift.entries(), *self.input_matrix.entries(), *self.noise_matrix.entries()]
        if any(p.nvars != n for p in polys):
            raise ValueError("all problem polynomials must be over the state variables")
        costs = dict(self.boundary_costs)
        for facet in box_facets(n):
            if facet not in costs:
                raise ValueError(f"missing boundary cost for facet {facet.name(self.variables)}")
            if costs[facet].nvars != n:
                raise ValueError("boundary costs must be over the state variables")
        object.__setattr__(self, "boundary_costs", costs)

    @property
    def nvars(self) -> int:
        return len(self.variables)

    @property
    def drift_vector(self) -> list[Polynomial]:
        return [self.drift[i, 0] for i in range(self.nvars)]


@dataclass(frozen=True)
class NoiseStructure:
    matrix: PolyMatrix

    @property
    def is_constant(self) -> bool:
        return self.matrix.is_constant()

    def array(self) -> np.ndarray:
        if not self.is_constant:
            raise ValueError("state-dependent noise covariance is not supported by the compiler")
        return self.matrix.to_array()

    @classmethod
    def constant(cls, nvars: int, sigma) -> NoiseStructure:
        return cls(PolyMatrix.from_array(nvars, sigma))


def check_noise_assumption(problem: ControlProblem, tol: float = NOISE_TOL) -> NoiseStructure:
    """Validate ``lambda G R^-1 G^T == B Sigma_eps B^T`` and return Sigma_t."""
    G, B = problem.input_matrix, problem.noise_matrix
    lhs = (G @ np.linalg.inv(problem.control_penalty)) @ G.T
    lhs = lhs.scale(problem.lam)
    rhs = (B @ problem.noise_covariance) @ B.T
    gap = lhs.max_abs_difference(rhs)
    if gap > tol:
        raise NoiseAssumptionViolated(gap)
    return NoiseStructure(rhs)


# -- operator ---------------------------------------------------------------

def _sigma_entries(sigma, n: int):
    if isinstance(sigma, NoiseStructure):
        sigma = sigma.matrix
    if isinstance(sigma, PolyMatrix):
        if sigma.shape != (n, n):
            raise ValueError(f"Sigma_t must be {n}x{n}")
        return lambda i, j: sigma[i, j]
    arr = np.atleast_2d(np.asarray(sigma, dtype=float))
    if arr.shape != (n, n):
        raise ValueError(f"Sigma_t must be {n}x{n}")
    return lambda i, j: arr[i, j]


def generator(psi: Polynomial, f, sigma) -> Polynomial:
    """``f . grad psi + 1/2 tr(Hess psi Sigma_t)``."""
    n = psi.nvars
    fs = [f[i, 0] for i in range(f.shape[0])] if isinstance(f, PolyMatrix) else list(f)
    if len(fs) != n:
        raise ValueError(f"drift has {len(fs)} components, expected {n}")
    sig = _sigma_entries(sigma, n)
    out = Polynomial.zero(n)
    grad = psi.gradient()
    for i in range(n):
        out = out + fs[i] * grad[i]
    for i in range(n):
        for j in range(n):
            s = sig(i, j)
            if isinstance(s, Polynomial):
                if not s.is_zero():
                    out = out + (s * grad[i].differentiate(j)).scale(0.5)
            elif s != 0.0:
                out = out + grad[i].differentiate(j).scale(0.5 * s)
    return out


def hjb_residual(psi: Polynomial, problem: ControlProblem, sigma) -> Polynomial:
    """``(1/lambda) q psi - L(psi)``; nonnegative for a super-solution."""
    return (problem.state_cost * psi).scale(1.0 / problem.lam) - generator(psi, problem.drift, sigma)


@dataclass(frozen=True)
class LocalOperator:
    """The PDE data pulled back to the unit box of one region."""

    drift: tuple[Polynomial, ...]
    sigma: np.ndarray
    state_cost: Polynomial
    lam: float

    def residual(self, psi: Polynomial) -> Polynomial:
        return (self.state_cost * psi).scale(1.0 / self.lam) - generator(psi, self.drift, self.sigma)


def localize(problem: ControlProblem, sigma: NoiseStructure, box: Box) -> LocalOperator:
    """Chain rule for ``x = c + h xi``: d/dxi = h d/dx."""
    S = sigma.array()
    h = box.halfwidth
    drift = tuple(box.to_local(fi).scale(1.0 / h[i]) for i, fi in enumerate(problem.drift_vector))
    D = np.diag(1.0 / h)
    return LocalOperator(drift, D @ S @ D, box.to_local(problem.state_cost), problem.lam)


# -- boundary data ----------------------------------------------------------

@dataclass(frozen=True)
class BoundaryFit:
    poly: Polynomial      # over the facet's n-1 free variables
    max_error: float
    degree: int
    local: bool


def _facet_samples(box: Box, facet: Facet, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform samples of a facet: full-dimensional points and local free coordinates."""
    n = box.nvars
    free = [a for a in range(n) if a != facet.axis]
    axes = [np.linspace(-1.0, 1.0, count) for _ in free]
    if free:
        local = np.array(list(itertools.product(*axes)), dtype=float)
    else:
        local = np.zeros((1, 0))
    pts = np.empty((local.shape[0], n))
    pts[:, facet.axis] = facet.value(box.lower, box.upper)
    for col, a in enumerate(free):
        pts[:, a] = box.center[a] + box.halfwidth[a] * local[:, col]
    return pts, local


def fit_boundary_data(phi: Polynomial, lam: float, facet: Facet, box: Box, fit_degree: int,
                      samples: int = FIT_SAMPLES, local: bool = False) -> BoundaryFit:
    """Least-squares polynomial fit of ``exp(-phi/lam)`` on one face of ``box``.

    The fit is computed in the face's local coordinates on [-1, 1]^(n-1);
    with ``local=False`` it is mapped back to original coordinates. The
    error is the largest deviation over the sample grid plus a denser check
    grid (32x on one-dimensional faces, 4x per axis otherwise).
    """
    if fit_degree < 0:
        raise ValueError("fit degree must be nonnegative")
    n = box.nvars
    m = n - 1
    pts, loc = _facet_samples(box, facet, samples)
    target = np.exp(-phi.evaluate_many(pts) / lam)
    deg = fit_degree if m else 0
    while True:
        basis = monomial_basis(m, deg) if m else [()]
        V = np.array([[np.prod(row ** np.array(e)) for e in basis] for row in loc]) if m else np.ones((1, 1))
        coef, _, rank, _ = np.linalg.lstsq(V, target, rcond=None)
        if rank == len(basis) or deg == 0:
            break
        warnings.warn(f"boundary fit rank deficient at degree {deg}; retrying at degree {deg - 1}")
        deg -= 1
    fit = Polynomial.from_coefficients(basis, coef) if m else Polynomial(0, {(): float(coef[0])})
    fit = Polynomial(m, fit.terms, drop_tol=1e-14)
    err = float(np.max(np.abs(fit.evaluate_many(loc) - target))) if m else float(abs(fit.constant_term() - target[0]))
    if m:
        dpts, dloc = _facet_samples(box, facet, (32 if m == 1 else 4) * samples + 1)
        dtarget = np.exp(-phi.evaluate_many(dpts) / lam)
        err = max(err, float(np.max(np.abs(fit.evaluate_many(dloc) - dtarget))))
    if not local and m:
        free = [a for a in range(n) if a != facet.axis]
        h = box.halfwidth[free]
        c = box.center[free]
        fit = fit.affine_substitute(-c / h, 1.0 / h)
    return BoundaryFit(fit, err, deg, local)


# -- value and policy ---------------------------------------------------------

def desirability_to_value(psi: Polynomial, lam: float, x, eps_floor: float = EPS_FLOOR) -> float:
    v = psi.evaluate(x)
    if v <= eps_floor:
        raise NonPositiveDesirability(v, eps_floor)
    return float(-lam * np.log(v))


def extract_policy(psi: Polynomial, problem: ControlProblem, x, eps_floor: float = EPS_FLOOR) -> np.ndarray:
    """``u* = lambda R^-1 G(x)^T grad psi(x) / psi(x)``."""
    v = psi.evaluate(x)
    if v <= eps_floor:
        raise NonPositiveDesirability(v, eps_floor)
    grad = np.array([g.evaluate(x) for g in psi.gradient()])
    G = np.array([[p.evaluate(x) for p in row] for row in problem.input_matrix.rows])
    return problem.lam * np.linalg.solve(problem.control_penalty, G.T @ grad) / v
