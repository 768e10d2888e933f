"""Conic programs with an added quadratic penalty on an affine image."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .ipm import ConeSolution
from .program import Cone, ConicProgram


def with_quadratic_penalty(prog: ConicProgram, factor, shift, rho: float, scale: float = 1.0) -> ConicProgram:
    """Append the epigraph of ``(rho/2)||F z - v||^2`` as a rotated cone.

    ``||u||^2 <= s t`` is encoded as ``(t + s, t - s, 2u)`` in the
    second-order cone, so the new block holds ``(w0, w1, w_u)`` with
    ``w0 - w1 = 2s`` and ``w_u - 2 F z = -2 v``; the objective gains
    ``(rho s / 4)(w0 + w1) = (rho / 2) ||u||^2`` at the optimum. The block is
    best conditioned when ``scale`` is near the optimal ``||F z - v||``.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    if not scale > 0:
        raise ValueError("scale must be positive")
    F = sp.csr_matrix(factor, dtype=float)
    v = np.asarray(shift, dtype=float).reshape(-1)
    k, n = F.shape
    if n != prog.n:
        raise ValueError(f"penalty factor has {n} columns, program has {prog.n} variables")
    if v.shape[0] != k:
        raise ValueError("shift length must equal the factor's row count")
    soc_dim = k + 2
    link = sp.hstack([sp.csr_matrix((1, n)), sp.csr_matrix(([1.0, -1.0], ([0, 0], [0, 1])), shape=(1, soc_dim))])
    bind = sp.hstack([-2.0 * F, sp.csr_matrix((k, 2)), sp.identity(k, format="csr")])
    A = sp.vstack([
        sp.hstack([prog.A, sp.csr_matrix((prog.m, soc_dim))]),
        link,
        bind,
    ]).tocsr()
    b = np.concatenate([prog.b, [2.0 * scale], -2.0 * v])
    c = np.concatenate([prog.c, [rho * scale / 4.0, rho * scale / 4.0], np.zeros(k)])
    labels = dict(prog.labels)
    labels[prog.n] = "penalty epigraph"
    return ConicProgram(c, A, b, list(prog.cones) + [Cone("soc", soc_dim)], labels)


def penalty_terms(prog: ConicProgram, factor, shift, rho: float) -> tuple[sp.csr_matrix, np.ndarray, float]:
    """``(P, q, r)`` with ``(rho/2)||F z - v||^2 = z^T P z / 2 + q^T z + r``."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    F = sp.csr_matrix(factor, dtype=float)
    v = np.asarray(shift, dtype=float).reshape(-1)
    if F.shape[1] != prog.n:
        raise ValueError(f"penalty factor has {F.shape[1]} columns, program has {prog.n} variables")
    if v.shape[0] != F.shape[0]:
        raise ValueError("shift length must equal the factor's row count")
    return (rho * (F.T @ F)).tocsr(), -rho * (F.T @ v), 0.5 * rho * float(v @ v)


def solve_quadratic_penalty(prog: ConicProgram, factor, shift, rho: float, tol: float = 1e-8,
                            max_iter: int = 200, method: str = "auto", scale: float = 1.0,
                            form: str = "auto") -> ConeSolution:
    """Minimize ``c.z + (rho/2)||factor z - shift||^2`` over the program's constraints.

    ``form="epigraph"`` appends the rotated second-order cone of
    :func:`with_quadratic_penalty`. ``form="native"`` hands the quadratic
    term to the interior-point method directly, which needs every penalized
    column to be free. With an epigraph the argmin is only accurate to about
    the square root of the duality gap, because the optimum can slide along
    the cone boundary at second-order cost; ``"auto"`` therefore prefers
    the native form whenever it applies. The returned solution is
    restricted to the original variables; the objective fields include the
    penalty term.
    """
    from . import MEMORY_BUDGET_BYTES, estimated_ipm_bytes, solve
    from .ipm import solve as solve_ipm

    P, q, r = penalty_terms(prog, factor, shift, rho)
    if form not in ("auto", "native", "epigraph"):
        raise ValueError(f"unknown penalty form {form!r}")
    touched = np.flatnonzero(np.asarray(abs(P).sum(axis=0)).ravel())
    native_ok = bool(np.all(prog.free_mask()[touched]))
    if method == "auto":
        method = "ipm" if estimated_ipm_bytes(prog) <= MEMORY_BUDGET_BYTES else "splitting"
    if form == "auto":
        form = "native" if native_ok and method == "ipm" else "epigraph"
    if form == "native":
        if not native_ok:
            raise ValueError("the native penalty form needs the penalized columns to be free")
        if method != "ipm":
            raise ValueError("the native penalty form needs the interior-point method")
        shifted = ConicProgram(prog.c + q, prog.A, prog.b, prog.cones, prog.labels)
        sol = solve_ipm(shifted, tol=tol, max_iter=max_iter, quadratic=P)
        sol.primal_objective += r
        sol.dual_objective += r
        sol.info["form"] = "native"
        return sol

    aug = with_quadratic_penalty(prog, factor, shift, rho, scale)
    sol = solve(aug, tol=tol, max_iter=max_iter, method=method)
    n, m = prog.n, prog.m
    sol.info["form"] = "epigraph"
    sol.info["epigraph"] = sol.primal[n:].copy()
    sol.primal = sol.primal[:n].copy()
    sol.dual_cone = sol.dual_cone[:n].copy()
    sol.info["penalty_duals"] = sol.dual_eq[m:].copy()
    sol.dual_eq = sol.dual_eq[:m].copy()
    return sol
