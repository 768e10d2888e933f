"""Conic program container, svec layout and a plain-text dump format.

Programs have the standard primal form::

    minimize    c^T x
    subject to  A x = b,  x in K = K_1 x ... x K_p

where each block ``K_i`` is the free space, the nonnegative orthant, a
second-order cone ``{(t, u): t >= ||u||}``, or a PSD cone. A PSD block of
side ``n`` occupies ``n(n+1)/2`` consecutive variables holding the lower
triangle column by column, off-diagonal entries multiplied by sqrt(2) so
that ``svec(X) . svec(Y) == trace(X Y)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp

SQRT2 = np.sqrt(2.0)

KINDS = ("free", "nonneg", "soc", "psd")


@dataclass(frozen=True)
class Cone:
    kind: str
    size: int  # vector length, or matrix side for "psd"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.size < 1:
            raise ValueError("cone size must be positive")
        if self.kind == "soc" and self.size < 2:
            raise ValueError("second-order cones need dimension >= 2")

    @property
    def dim(self) -> int:
        return self.size * (self.size + 1) // 2 if self.kind == "psd" else self.size

    @property
    def degree(self) -> int:
        return {"free": 0, "nonneg": self.size, "soc": 1, "psd": self.size}[self.kind]


# -- svec layout --------------------------------------------------------------

@lru_cache(maxsize=None)
def svec_indices(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row index, column index and scale of each svec slot for side n."""
    rows, cols = [], []
    for j in range(n):
        for i in range(j, n):
            rows.append(i)
            cols.append(j)
    rows = np.array(rows)
    cols = np.array(cols)
    scale = np.where(rows == cols, 1.0, SQRT2)
    return rows, cols, scale


def svec_index(i: int, j: int, n: int) -> int:
    if i < j:
        i, j = j, i
    return j * n - j * (j - 1) // 2 + (i - j)


def svec(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    r, c, s = svec_indices(M.shape[-1])
    return M[..., r, c] * s


def smat(v: np.ndarray, n: int | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if n is None:
        n = int(round((np.sqrt(8 * v.shape[-1] + 1) - 1) / 2))
    r, c, s = svec_indices(n)
    out = np.zeros(v.shape[:-1] + (n, n))
    vals = v / s
    out[..., r, c] = vals
    out[..., c, r] = vals
    return out


def side_from_dim(dim: int) -> int:
    n = int(round((np.sqrt(8 * dim + 1) - 1) / 2))
    if n * (n + 1) // 2 != dim:
        raise ValueError(f"{dim} is not a triangular number")
    return n


# -- program ----------------------------------------------------------------

@dataclass
class ConicProgram:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    cones: list[Cone]
    labels: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.cones = list(self.cones)
        n = sum(k.dim for k in self.cones)
        if self.c.shape[0] != n:
            raise ValueError(f"objective has length {self.c.shape[0]}, cones total {n}")
        if self.A.shape != (self.b.shape[0], n):
            raise ValueError(f"A has shape {self.A.shape}, expected ({self.b.shape[0]}, {n})")

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[0]

    @property
    def offsets(self) -> list[int]:
        out, off = [], 0
        for k in self.cones:
            out.append(off)
            off += k.dim
        return out

    def block_slices(self) -> list[slice]:
        return [slice(o, o + k.dim) for o, k in zip(self.offsets, self.cones)]

    def free_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        for sl, k in zip(self.block_slices(), self.cones):
            if k.kind == "free":
                mask[sl] = True
        return mask

    @property
    def cone_degree(self) -> int:
        return sum(k.degree for k in self.cones)

    def in_cone(self, x: np.ndarray, tol: float = 0.0) -> bool:
        return cone_violation(self.cones, x) <= tol

    # -- plain-text triplet dump ------------------------------------------

    def dump(self, path) -> None:
        """Write (c, A, b, cones) as sparse triplets for external cross-checks."""
        coo = self.A.tocoo()
        lines = ["# hjbsos conic program v1", f"dims {self.n} {self.m}"]
        for k in self.cones:
            lines.append(f"cone {k.kind} {k.size}")
        for i in np.flatnonzero(self.c):
            lines.append(f"c {i} {self.c[i]:.17g}")
        for i in np.flatnonzero(self.b):
            lines.append(f"b {i} {self.b[i]:.17g}")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            lines.append(f"A {i} {j} {v:.17g}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> ConicProgram:
        n = m = None
        cones, cvals, bvals, trip = [], {}, {}, []
        for raw in Path(path).read_text().splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tag, *rest = line.split()
            if tag == "dims":
                n, m = int(rest[0]), int(rest[1])
            elif tag == "cone":
                cones.append(Cone(rest[0], int(rest[1])))
            elif tag == "c":
                cvals[int(rest[0])] = float(rest[1])
            elif tag == "b":
                bvals[int(rest[0])] = float(rest[1])
            elif tag == "A":
                trip.append((int(rest[0]), int(rest[1]), float(rest[2])))
            else:
                raise ValueError(f"unknown record {tag!r}")
        if n is None:
            raise ValueError("missing dims record")
        c = np.zeros(n)
        for i, v in cvals.items():
            c[i] = v
        b = np.zeros(m)
        for i, v in bvals.items():
            b[i] = v
        if trip:
            r, cc, v = zip(*trip)
            A = sp.csr_matrix((v, (r, cc)), shape=(m, n))
        else:
            A = sp.csr_matrix((m, n))
        return cls(c, A, b, cones)


def cone_violation(cones: Iterable[Cone], x: np.ndarray) -> float:
    """Largest distance-to-boundary style violation of ``x`` over all blocks."""
    worst, off = 0.0, 0
    for k in cones:
        v = x[off:off + k.dim]
        off += k.dim
        if k.kind == "nonneg":
            worst = max(worst, float(np.max(-v, initial=0.0)))
        elif k.kind == "soc":
            worst = max(worst, float(np.linalg.norm(v[1:]) - v[0]))
        elif k.kind == "psd":
            worst = max(worst, float(-np.linalg.eigvalsh(smat(v, k.size))[0]))
    return worst


class ProgramBuilder:
    """Incrementally assemble a :class:`ConicProgram`.

    Variables are allocated block by block; equality rows are collected as
    sparse ``{column: coefficient}`` maps.
    """

    def __init__(self):
        self.cones: list[Cone] = []
        self.offsets: list[int] = []
        self.n = 0
        self.labels: dict[int, str] = {}
        self.objective: dict[int, float] = {}
        self._rows: list[int] = []
        self._cols: list[int] = []
        self._vals: list[float] = []
        self.b: list[float] = []

    def add_block(self, kind: str, size: int, label: str | None = None) -> int:
        cone = Cone(kind, size)
        start = self.n
        self.cones.append(cone)
        self.offsets.append(start)
        self.n += cone.dim
        if label is not None:
            self.labels[start] = label
        return start

    def add_free(self, count: int, label: str | None = None) -> int:
        return self.add_block("free", count, label)

    def add_psd(self, side: int, label: str | None = None) -> int:
        return self.add_block("psd", side, label)

    def add_row(self, coeffs: dict[int, float], rhs: float) -> int:
        r = len(self.b)
        for j, v in coeffs.items():
            if v != 0.0:
                self._rows.append(r)
                self._cols.append(j)
                self._vals.append(float(v))
        self.b.append(float(rhs))
        return r

    @property
    def m(self) -> int:
        return len(self.b)

    def set_objective(self, col: int, value: float) -> None:
        self.objective[col] = float(value)

    def build(self) -> ConicProgram:
        A = sp.csr_matrix((self._vals, (self._rows, self._cols)), shape=(len(self.b), self.n))
        c = np.zeros(self.n)
        for j, v in self.objective.items():
            c[j] = v
        return ConicProgram(c, A, np.array(self.b), list(self.cones), dict(self.labels))
