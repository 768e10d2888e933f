"""Coefficient-matching constraints between neighbouring regions.

On a face ``x_a = v`` the condition ``Psi_i - Psi_j + c(x) (x_a - v) = 0``
for some polynomial ``c`` holds exactly when the two restrictions to the
face agree, so the multiplier is eliminated and the restricted
coefficients are matched directly. Normal derivatives up to the requested
order are matched the same way; tangential derivatives then agree
automatically. Each region's unknowns ``z_i`` are its local-chart Psi
coefficients (graded-lex basis) followed by its slack gamma.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
import scipy.sparse as sp

from ..polynomial import MultiIndex, monomial_basis
from .partition import Partition, SharedFacet


@dataclass
class CouplingConstraint:
    """Rows ``left @ z_lower + right @ z_upper = 0`` for one shared face."""

    facet: SharedFacet
    order: int
    left: np.ndarray
    right: np.ndarray
    labels: list[str]

    @property
    def nrows(self) -> int:
        return self.left.shape[0]


def normal_trace_matrix(nvars: int, degree: int, axis: int, side: float, k: int, halfwidth: float) -> np.ndarray:
    """Map local coefficients to the face coefficients of ``d^k Psi / dx_axis^k``.

    The face is ``xi_axis = side`` of the unit box; rows follow the
    tangential basis of degree ``degree - k``. The chain-rule factor
    ``halfwidth^-k`` converts local derivatives to original ones.
    """
    basis = monomial_basis(nvars, degree)
    tang = monomial_basis(nvars - 1, degree - k)
    pos = {m: i for i, m in enumerate(tang)}
    T = np.zeros((len(tang), len(basis) + 1))
    for col, m in enumerate(basis):
        e = m[axis]
        if e < k:
            continue
        coef = factorial(e) / factorial(e - k) * side ** (e - k) / halfwidth ** k
        T[pos[m[:axis] + m[axis + 1:]], col] = coef
    return T


def build_coupling(partition: Partition, degree: int, order: int) -> list[CouplingConstraint]:
    if order not in (0, 1, 2):
        raise ValueError("continuity order must be 0, 1 or 2")
    if degree < order:
        raise ValueError("degree must be at least the continuity order")
    n = partition.domain.nvars
    zdim = len(monomial_basis(n, degree)) + 1
    out = []
    for f in partition.facets:
        lo, hi = partition.regions[f.lower], partition.regions[f.upper]
        others = [a for a in range(n) if a != f.axis]
        if not (np.allclose(lo.center[others], hi.center[others]) and np.allclose(lo.halfwidth[others], hi.halfwidth[others])):
            raise ValueError("neighbouring regions must share the face exactly")
        left, right, labels = [], [], []
        for k in range(order + 1):
            Ti = normal_trace_matrix(n, degree, f.axis, 1.0, k, lo.halfwidth[f.axis])
            Tj = normal_trace_matrix(n, degree, f.axis, -1.0, k, hi.halfwidth[f.axis])
            tang = monomial_basis(n - 1, degree - k)
            left.append(Ti)
            right.append(-Tj)
            labels += [f"C{k} {m}" for m in tang]
        g = np.zeros((1, zdim))
        g[0, -1] = 1.0
        left.append(g)
        right.append(-g)
        labels.append("gamma")
        out.append(CouplingConstraint(f, order, np.vstack(left), np.vstack(right), labels))
    return out


@dataclass
class CouplingSystem:
    """All coupling rows stacked; ``blocks[i]`` is region i's column block A^(i)."""

    nrows: int
    zdim: int
    blocks: list[sp.csr_matrix]
    labels: list[str]

    def residual(self, zs: list[np.ndarray]) -> np.ndarray:
        r = np.zeros(self.nrows)
        for A, z in zip(self.blocks, zs):
            r += A @ z
        return r

    def rows_of(self, region: int) -> np.ndarray:
        return np.unique(self.blocks[region].nonzero()[0])

    def matrix(self) -> sp.csr_matrix:
        return sp.hstack(self.blocks).tocsr() if self.blocks else sp.csr_matrix((0, 0))


def assemble_coupling(partition: Partition, constraints: list[CouplingConstraint], zdim: int) -> CouplingSystem:
    nrows = sum(c.nrows for c in constraints)
    trip = [([], [], []) for _ in range(partition.size)]
    labels = []
    r0 = 0
    for c in constraints:
        for mat, region in ((c.left, c.facet.lower), (c.right, c.facet.upper)):
            rr, cc = np.nonzero(mat)
            trip[region][0].extend(rr + r0)
            trip[region][1].extend(cc)
            trip[region][2].extend(mat[rr, cc])
        labels += [f"{c.facet.lower}|{c.facet.upper} {lab}" for lab in c.labels]
        r0 += c.nrows
    blocks = [sp.csr_matrix((v, (r, cc)), shape=(nrows, zdim)) for r, cc, v in trip]
    return CouplingSystem(nrows, zdim, blocks, labels)
