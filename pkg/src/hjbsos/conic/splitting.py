"""First-order operator splitting for programs too large to factor densely.

Alternates a projection onto ``{A x = b}`` (with the linear objective folded
in) and a projection onto the cone product, with a scaled dual update. Far
less accurate than the interior-point path but memory-light.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as la

from .ipm import ConeSolution, Status
from .program import ConicProgram, smat, svec


def psd_project(M) -> np.ndarray:
    """Frobenius-nearest PSD matrix (negative eigenvalues clipped)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("psd_project needs a square matrix")
    scale = max(1.0, float(np.max(np.abs(M), initial=0.0)))
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-12 * scale:
        raise ValueError("psd_project needs a symmetric matrix")
    M = (M + M.T) / 2.0
    w, V = np.linalg.eigh(M)
    if w[0] >= 0:
        return M
    w = np.clip(w, 0.0, None)
    return (V * w) @ V.T


def project_cones(prog: ConicProgram, v: np.ndarray) -> np.ndarray:
    out = v.copy()
    for sl, k in zip(prog.block_slices(), prog.cones):
        blk = v[sl]
        if k.kind == "nonneg":
            out[sl] = np.maximum(blk, 0.0)
        elif k.kind == "soc":
            t, u = blk[0], blk[1:]
            nu = np.linalg.norm(u)
            if nu <= t:
                continue
            if nu <= -t:
                out[sl] = 0.0
            else:
                a = (t + nu) / 2.0
                out[sl] = np.concatenate([[a], a * u / nu])
        elif k.kind == "psd":
            out[sl] = svec(psd_project(smat(blk, k.size)))
    return out


def solve_splitting(prog: ConicProgram, tol: float = 1e-6, max_iter: int = 50_000, rho: float = 1.0,
                    warm_start: np.ndarray | None = None) -> ConeSolution:
    A = prog.A.toarray()
    b, c = prog.b, prog.c
    m, n = A.shape
    AAt = A @ A.T + 1e-12 * np.eye(m)
    fac = la.cho_factor(AAt)

    def proj_affine(v):
        return v - A.T @ la.cho_solve(fac, A @ v - b)

    z = np.zeros(n) if warm_start is None else warm_start.copy()
    u = np.zeros(n)
    bnorm = 1.0 + np.linalg.norm(b)
    cnorm = 1.0 + np.linalg.norm(c)
    status = Status.MAX_ITER
    pres = dres = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        x = proj_affine(z - u - c / rho)
        z_old = z
        z = project_cones(prog, x + u)
        u = u + x - z
        pres = np.linalg.norm(x - z) / bnorm
        dres = rho * np.linalg.norm(z - z_old) / cnorm
        if pres <= tol and dres <= tol:
            status = Status.OPTIMAL
            break
    s = -rho * u
    y = np.linalg.lstsq(A.T, c - s, rcond=None)[0] if m else np.zeros(0)
    pobj = float(c @ z)
    dobj = float(b @ y)
    gap = abs(pobj - dobj) / (1.0 + abs(pobj))
    return ConeSolution(
        primal=z, dual_eq=y, dual_cone=s, status=status, gap=gap,
        primal_residual=float(np.linalg.norm(A @ z - b) / bnorm), dual_residual=float(dres),
        iterations=it, primal_objective=pobj, dual_objective=dobj,
        message="operator splitting",
    )
