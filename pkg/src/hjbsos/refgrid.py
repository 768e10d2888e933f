"""Finite-difference reference solutions of the first-exit desirability PDE.

Solves ``(q/lambda) Psi - f . grad Psi - 1/2 tr(Hess Psi Sigma_t) = 0`` on a
uniform tensor grid over the problem's box (one or two state dimensions),
with Dirichlet data ``exp(-phi/lambda)`` sampled directly from the facet
costs. Second-order central differences are used throughout except where
the cell Peclet number ``|f_a| h_a / Sigma_aa`` exceeds 2, where the first
derivative along that axis switches to first-order upwinding.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hjb import ControlProblem, Facet, NoiseStructure, check_noise_assumption

RESIDUAL_TOL = 1e-10
PECLET_LIMIT = 2.0


class SingularSystem(RuntimeError):
    pass


@dataclass
class GridSolution:
    axes: list[np.ndarray]
    values: np.ndarray                # shape = tuple(len(a) for a in axes), indexing="ij"
    boundary: np.ndarray              # bool mask of Dirichlet nodes
    residual: float
    upwinded: int = 0                 # number of (node, axis) pairs using upwinding

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def spacing(self) -> list[float]:
        return [float(a[1] - a[0]) for a in self.axes]

    @property
    def boundary_values(self) -> np.ndarray:
        return self.values[self.boundary]

    def nodes(self) -> np.ndarray:
        """All grid nodes as rows, first axis slowest (C order of ``values``)."""
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([g.ravel() for g in grids])

    def write_csv(self, stream, variables=None) -> None:
        n = len(self.axes)
        names = list(variables) if variables is not None else [f"x{k + 1}" for k in range(n)]
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(names + ["psi_fd"])
        for x, v in zip(self.nodes(), self.values.ravel()):
            w.writerow([f"{c:.17g}" for c in x] + [f"{v:.17g}"])


def _boundary_value(problem: ControlProblem, x: np.ndarray, idx, shape, warned: list) -> float:
    """exp(-phi/lambda) at a boundary node; corners average the adjacent facets."""
    vals = []
    for a, i in enumerate(idx):
        if i == 0 or i == shape[a] - 1:
            phi = problem.boundary_costs[Facet(a, i == shape[a] - 1)]
            vals.append(float(np.exp(-phi.evaluate(x) / problem.lam)))
    if len(vals) > 1 and max(vals) - min(vals) > 1e-12 * max(1.0, max(vals)):
        warned.append(tuple(x))
    return float(np.mean(vals))


def solve_fd(problem: ControlProblem, sigma: NoiseStructure | np.ndarray | None = None,
             nodes_per_axis: int = 201) -> GridSolution:
    n = problem.nvars
    if n not in (1, 2):
        raise ValueError(f"the finite-difference oracle supports 1 or 2 state dimensions, not {n}")
    if nodes_per_axis < 11:
        raise ValueError("nodes_per_axis must be at least 11")
    if sigma is None:
        sigma = check_noise_assumption(problem)
    S = sigma.array() if isinstance(sigma, NoiseStructure) else np.atleast_2d(np.asarray(sigma, dtype=float))
    lo, hi = problem.domain.lower, problem.domain.upper
    axes = [np.linspace(lo[a], hi[a], nodes_per_axis) for a in range(n)]
    for a in range(n):
        axes[a][0], axes[a][-1] = lo[a], hi[a]
    h = [float(ax[1] - ax[0]) for ax in axes]
    shape = (nodes_per_axis,) * n
    N = nodes_per_axis ** n
    pts = np.column_stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")])
    multi = np.array(np.unravel_index(np.arange(N), shape)).T
    on_bnd = np.any((multi == 0) | (multi == nodes_per_axis - 1), axis=1)

    q = problem.state_cost.evaluate_many(pts) / problem.lam
    f = np.column_stack([fa.evaluate_many(pts) for fa in problem.drift_vector])
    strides = [int(np.prod(shape[a + 1:])) for a in range(n)]

    rows, cols, vals = [], [], []
    rhs = np.zeros(N)
    corners: list = []
    upwinded = 0

    def put(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    for k in range(N):
        if on_bnd[k]:
            put(k, k, 1.0)
            rhs[k] = _boundary_value(problem, pts[k], multi[k], shape, corners)
            continue
        diag = q[k]
        for a in range(n):
            s, ha = strides[a], h[a]
            d = 0.5 * S[a, a]
            # diffusion -1/2 S_aa Psi_aa
            put(k, k + s, -d / ha ** 2)
            put(k, k - s, -d / ha ** 2)
            diag += 2 * d / ha ** 2
            # drift -f_a Psi_a
            fa = f[k, a]
            if S[a, a] <= 0 or abs(fa) * ha / S[a, a] > PECLET_LIMIT:
                upwinded += 1
                if fa > 0:
                    put(k, k + s, -fa / ha)
                    diag += fa / ha
                else:
                    put(k, k - s, fa / ha)
                    diag -= fa / ha
            else:
                put(k, k + s, -fa / (2 * ha))
                put(k, k - s, fa / (2 * ha))
        if n == 2 and S[0, 1] != 0:
            # -S_01 Psi_xy with the four-point cross stencil
            c = -S[0, 1] / (4 * h[0] * h[1])
            s0, s1 = strides
            put(k, k + s0 + s1, c)
            put(k, k - s0 - s1, c)
            put(k, k + s0 - s1, -c)
            put(k, k - s0 + s1, -c)
        put(k, k, diag)

    if corners:
        warnings.warn(f"facet costs disagree at {len(corners)} corner node(s); using the average", stacklevel=2)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
    # Row-normalise so the residual tolerance is scale free.
    scale = 1.0 / np.abs(A).max(axis=1).toarray().ravel()
    A = sp.diags(scale) @ A
    b = scale * rhs
    lu = spla.splu(A.tocsc())
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularSystem("finite-difference system is singular")
    res = float(np.max(np.abs(A @ x - b)))
    for _ in range(3):
        if res <= RESIDUAL_TOL:
            break
        x += lu.solve(b - A @ x)
        res = float(np.max(np.abs(A @ x - b)))
    if res > RESIDUAL_TOL:
        raise SingularSystem(f"discrete residual {res:.2e} exceeds {RESIDUAL_TOL:.0e}")
    # Dirichlet rows are identities after scaling; pin them exactly.
    x[on_bnd] = rhs[on_bnd]
    return GridSolution(axes, x.reshape(shape), on_bnd.reshape(shape), res, upwinded)
