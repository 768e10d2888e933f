"""Small dense conic solver: free, nonnegative, second-order and PSD cones."""

from __future__ import annotations

from .ipm import ConeSolution, SolverError, Status
from .ipm import solve as solve_ipm
from .penalty import penalty_terms, solve_quadratic_penalty, with_quadratic_penalty
from .program import Cone, ConicProgram, ProgramBuilder, cone_violation, smat, svec, svec_index, svec_indices
from .splitting import psd_project, solve_splitting

# Dense factorizations larger than this switch "auto" to operator splitting.
MEMORY_BUDGET_BYTES = 2 * 1024 ** 3

IPM_MAX_ITER = 200
SPLITTING_MAX_ITER = 50_000


def estimated_ipm_bytes(prog: ConicProgram) -> int:
    nfree = int(prog.free_mask().sum())
    k = nfree + prog.m
    return 8 * (2 * k * k + prog.m * prog.n)


def solve(prog: ConicProgram, tol: float = 1e-8, max_iter: int | None = None, method: str = "auto") -> ConeSolution:
    """Solve a conic program.

    ``method`` is ``"ipm"``, ``"splitting"`` or ``"auto"``; the automatic
    choice uses the interior-point path unless its dense factorization
    would exceed :data:`MEMORY_BUDGET_BYTES`.
    """
    if method == "auto":
        method = "ipm" if estimated_ipm_bytes(prog) <= MEMORY_BUDGET_BYTES else "splitting"
    if method == "ipm":
        return solve_ipm(prog, tol=tol, max_iter=IPM_MAX_ITER if max_iter is None else max_iter)
    if method == "splitting":
        return solve_splitting(prog, tol=tol, max_iter=SPLITTING_MAX_ITER if max_iter is None else max_iter)
    raise ValueError(f"unknown method {method!r}")


__all__ = [
    "Cone",
    "ConeSolution",
    "ConicProgram",
    "ProgramBuilder",
    "SolverError",
    "Status",
    "cone_violation",
    "estimated_ipm_bytes",
    "psd_project",
    "smat",
    "solve",
    "solve_ipm",
    "penalty_terms",
    "solve_quadratic_penalty",
    "solve_splitting",
    "svec",
    "svec_index",
    "svec_indices",
    "with_quadratic_penalty",
]
