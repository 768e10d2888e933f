"""Two-colour ADMM over region subproblems.

With the unknowns of shaded regions as the first block and unshaded as the
second, every coupling row touches exactly one region of each colour, so
each colour sweep splits into independent penalized subproblems

    z_i <- argmin  c_i . x_i + (rho/2) || A_i z_i - v_i ||^2   over region i's cone,
    v_i  = -(rows of the other colour's contribution) - y / rho,

followed by the dual step ``y <- y + rho * (sum_i A_i z_i)``.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .. import conic
from ..conic import ConeSolution, ConicProgram, Status
from ..hjb import ControlProblem, NoiseStructure, check_noise_assumption
from ..polynomial import Polynomial
from ..soscert import CertificateOptions, Direction, RegionSubproblem, assemble_region_subproblem
from .coupling import CouplingSystem, assemble_coupling, build_coupling
from .partition import SHADED, UNSHADED, Partition

log = logging.getLogger(__name__)


class SubproblemFailure(RuntimeError):
    def __init__(self, region: int, iteration: int, solution: ConeSolution):
        super().__init__(f"region {region} failed at ADMM iteration {iteration}: "
                         f"{solution.status.value} {solution.message}".rstrip())
        self.region = region
        self.iteration = iteration
        self.solution = solution


# -- blocks --------------------------------------------------------------------

class ConicBlock:
    """One ADMM block: a conic program whose columns ``columns`` form z_i."""

    def __init__(self, program: ConicProgram, columns: Sequence[int], gamma_position: int | None = -1,
                 tol: float = 1e-8, method: str = "auto", accept_tol: float = 1e-5):
        self.program = program
        self.columns = np.asarray(columns, dtype=int)
        self.gamma_position = gamma_position
        self.tol = tol
        self.method = method
        self.select = sp.csr_matrix(
            (np.ones(len(self.columns)), (np.arange(len(self.columns)), self.columns)),
            shape=(len(self.columns), program.n))
        self.last: ConeSolution | None = None
        # solves that stalled short of tol but within accept_tol
        self.accept_tol = accept_tol
        self.inexact = 0

    @property
    def zdim(self) -> int:
        return len(self.columns)

    def _accept(self, sol: ConeSolution) -> np.ndarray | None:
        self.last = sol
        if sol.status != Status.OPTIMAL:
            if sol.status not in (Status.MAX_ITER, Status.NUMERICAL_FAILURE) or \
                    sol.info.get("accuracy", np.inf) > self.accept_tol:
                return None
            self.inexact += 1
            log.debug("accepting stalled solve at accuracy %.2e", sol.info["accuracy"])
        return sol.primal[self.columns].copy()

    def initial(self) -> np.ndarray | None:
        return self._accept(conic.solve(self.program, tol=self.tol, method=self.method))

    def penalized(self, F: sp.csr_matrix, v: np.ndarray, rho: float) -> np.ndarray | None:
        Fx = F @ self.select
        # sizes the epigraph cone when the penalty cannot be handled natively
        scale = 1.0
        if self.last is not None:
            scale = float(np.clip(np.linalg.norm(Fx @ self.last.primal - v), 1e-3, 1e3))
        return self._accept(conic.solve_quadratic_penalty(
            self.program, Fx, v, rho, tol=self.tol, method=self.method, scale=scale))

    def gamma(self, z: np.ndarray) -> float:
        return float(z[self.gamma_position]) if self.gamma_position is not None else 0.0


# -- options, state, results ------------------------------------------------------

@dataclass
class AdmmOptions:
    rho: float = 1.0
    eps_pri: float = 1e-5
    eps_dual: float = 1e-5
    # dual tolerance grows by eps_rel * ||A_S^T y||; absorbs the noise floor of inexact conic solves
    eps_rel: float = 1e-3
    max_outer: int = 200
    adaptive_rho: bool = False
    sweep: str = "parallel"          # "parallel" or "serial"
    workers: int | None = None
    record_iterates: bool = False
    trace_stream: io.TextIOBase | None = None

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.sweep not in ("parallel", "serial"):
            raise ValueError("sweep must be 'parallel' or 'serial'")


@dataclass
class TraceRow:
    iteration: int
    primal_residual: float
    dual_residual: float
    gamma_max: float
    rho: float
    duals: np.ndarray


@dataclass
class AdmmState:
    z: list[np.ndarray]
    y: np.ndarray
    rho: float
    iteration: int = 0
    trace: list[TraceRow] = field(default_factory=list)
    iterates: list[list[np.ndarray]] = field(default_factory=list)


@dataclass
class AdmmResult:
    state: AdmmState
    converged: bool
    primal_residual: float
    dual_residual: float


TRACE_HEADER = ["iter", "primal_res", "dual_res", "gamma_max"]


def trace_header(nrows: int) -> list[str]:
    return TRACE_HEADER + [f"y{k}" for k in range(nrows)]


def trace_record(row: TraceRow) -> list[str]:
    return [str(row.iteration)] + [f"{v:.17g}" for v in (row.primal_residual, row.dual_residual, row.gamma_max)] + [
        f"{v:.17g}" for v in row.duals]


def write_trace_csv(trace: Sequence[TraceRow], nrows: int, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(trace_header(nrows))
    for row in trace:
        w.writerow(trace_record(row))


def _map(fn, items, parallel: bool, workers: int | None):
    if parallel and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers or os.cpu_count() or 1) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def run_admm(blocks: Sequence[ConicBlock], system: CouplingSystem, colors: Sequence[int],
             options: AdmmOptions, on_iteration: Callable[[AdmmState], None] | None = None) -> AdmmResult:
    """The colour-sweep ADMM loop on arbitrary conic blocks."""
    parallel = options.sweep == "parallel"
    nb = len(blocks)
    shaded = [i for i in range(nb) if colors[i] == SHADED]
    unshaded = [i for i in range(nb) if colors[i] == UNSHADED]
    rows = [system.rows_of(i) for i in range(nb)]
    local = [system.blocks[i][rows[i]] for i in range(nb)]

    def init(i):
        z = blocks[i].initial()
        if z is None:
            raise SubproblemFailure(i, 0, blocks[i].last)
        return z

    z = _map(init, list(range(nb)), parallel, options.workers)
    state = AdmmState(z, np.zeros(system.nrows), options.rho)
    gamma_max = max(b.gamma(zi) for b, zi in zip(blocks, z))
    r = system.residual(z)
    pres = float(np.max(np.abs(r), initial=0.0))
    if system.nrows == 0:
        state.trace.append(TraceRow(0, 0.0, 0.0, gamma_max, state.rho, state.y.copy()))
        return AdmmResult(state, True, 0.0, 0.0)

    header_written = False
    writer = csv.writer(options.trace_stream, lineterminator="\n") if options.trace_stream else None
    dres = np.inf
    converged = False
    for k in range(1, options.max_outer + 1):
        state.iteration = k
        rho = state.rho
        old_unshaded = {i: state.z[i] for i in unshaded}
        for group in (shaded, unshaded):
            total = system.residual(state.z)
            order = group if parallel else list(reversed(group))

            def update(i):
                R = rows[i]
                w = total[R] - local[i] @ state.z[i]
                v = -w - state.y[R] / rho
                zi = blocks[i].penalized(local[i], v, rho)
                if zi is None:
                    raise SubproblemFailure(i, k, blocks[i].last)
                return zi

            new = _map(update, order, parallel, options.workers)
            for i, zi in zip(order, new):
                state.z[i] = zi
        r = system.residual(state.z)
        state.y = state.y + rho * r
        pres = float(np.max(np.abs(r)))
        change = np.zeros(system.nrows)
        for i in unshaded:
            change += system.blocks[i] @ (state.z[i] - old_unshaded[i])
        dres = rho * float(np.sqrt(sum(np.sum((system.blocks[i].T @ change) ** 2) for i in shaded)))
        gamma_max = max(b.gamma(zi) for b, zi in zip(blocks, state.z))
        row = TraceRow(k, pres, dres, gamma_max, rho, state.y.copy())
        state.trace.append(row)
        if options.record_iterates:
            state.iterates.append([zi.copy() for zi in state.z])
        if writer is not None:
            if not header_written:
                writer.writerow(trace_header(system.nrows))
                header_written = True
            writer.writerow(trace_record(row))
        log.info("admm %d: primal %.3e dual %.3e gamma_max %.6g", k, pres, dres, gamma_max)
        if on_iteration is not None:
            on_iteration(state)
        ynorm = float(np.sqrt(sum(np.sum((system.blocks[i].T @ state.y) ** 2) for i in shaded)))
        if pres <= options.eps_pri and dres <= options.eps_dual + options.eps_rel * ynorm:
            converged = True
            break
        if options.adaptive_rho:
            if pres > 10 * dres:
                state.rho *= 2.0
            elif dres > 10 * pres:
                state.rho /= 2.0
    return AdmmResult(state, converged, pres, dres)


# -- the decomposed HJB solve -----------------------------------------------------------

@dataclass
class DecomposedSolution:
    partition: Partition
    variables: tuple[str, ...]
    psis: list[Polynomial]            # original coordinates
    gammas: list[float]
    direction: Direction
    degree: int
    order: int
    converged: bool
    iterations: int
    primal_residual: float
    dual_residual: float
    boundary_slack: float
    trace: list[TraceRow] = field(default_factory=list)
    coupling_labels: list[str] = field(default_factory=list)
    iterates: list[list[np.ndarray]] = field(default_factory=list)
    lam: float = 1.0

    @property
    def gamma_max(self) -> float:
        return max(self.gammas)

    @property
    def gamma_spread(self) -> float:
        return max(self.gammas) - min(self.gammas)

    def region_of(self, x) -> int:
        return self.partition.locate(x)


def evaluate_stitched(sol: DecomposedSolution, x) -> float:
    """Psi of the lowest-index region containing x."""
    return sol.psis[sol.partition.locate(x)].evaluate(x)


def consensus_mismatch(sol: DecomposedSolution, order: int | None = None, samples: int = 50) -> list[float]:
    """Largest |d^k Psi_i - d^k Psi_j| (normal derivatives) over sampled shared faces, per k."""
    order = sol.order if order is None else order
    worst = [0.0] * (order + 1)
    part = sol.partition
    n = part.domain.nvars
    for f in part.facets:
        box = part.regions[f.lower]
        others = [a for a in range(n) if a != f.axis]
        if others:
            grids = np.meshgrid(*[np.linspace(box.lower[a], box.upper[a], samples) for a in others], indexing="ij")
            pts = np.empty((grids[0].size, n))
            for g, a in zip(grids, others):
                pts[:, a] = g.ravel()
        else:
            pts = np.empty((1, n))
        pts[:, f.axis] = f.value
        pi, pj = sol.psis[f.lower], sol.psis[f.upper]
        for k in range(order + 1):
            diff = float(np.max(np.abs(pi.evaluate_many(pts) - pj.evaluate_many(pts))))
            worst[k] = max(worst[k], diff)
            pi, pj = pi.differentiate(f.axis), pj.differentiate(f.axis)
    return worst


def compile_regions(problem: ControlProblem, partition: Partition, sigma: NoiseStructure, degree: int,
                    certificate: CertificateOptions | None, direction: Direction | str,
                    parallel: bool = True, workers: int | None = None) -> list[RegionSubproblem]:
    def build(i):
        return assemble_region_subproblem(problem, partition.regions[i], sigma, degree, certificate, direction, i)

    return _map(build, list(range(partition.size)), parallel, workers)


def admm_solve(problem: ControlProblem, partition: Partition, degree: int, order: int = 1,
               direction: Direction | str = Direction.UPPER, certificate: CertificateOptions | None = None,
               options: AdmmOptions | None = None, sigma: NoiseStructure | None = None,
               tol: float = 1e-8, method: str = "auto",
               on_iteration: Callable[[AdmmState], None] | None = None) -> DecomposedSolution:
    """Decomposed SOS bound on the desirability with C^order coupling."""
    options = options or AdmmOptions()
    direction = Direction(direction)
    sigma = sigma if sigma is not None else check_noise_assumption(problem)
    parallel = options.sweep == "parallel"
    subs = compile_regions(problem, partition, sigma, degree, certificate, direction, parallel, options.workers)
    constraints = build_coupling(partition, degree, order)
    zdim = len(subs[0].basis) + 1
    system = assemble_coupling(partition, constraints, zdim)
    blocks = [ConicBlock(s.program, s.coupling_columns, -1, tol, method) for s in subs]
    res = run_admm(blocks, system, partition.colors, options, on_iteration)
    psis = []
    for s, z in zip(subs, res.state.z):
        psis.append(s.box.from_local(Polynomial.from_coefficients(s.basis, z[:-1])))
    return DecomposedSolution(
        partition=partition,
        variables=problem.variables,
        psis=psis,
        gammas=[float(z[-1]) for z in res.state.z],
        direction=direction,
        degree=degree,
        order=order,
        converged=res.converged,
        iterations=res.state.iteration,
        primal_residual=res.primal_residual,
        dual_residual=res.dual_residual,
        boundary_slack=max(s.boundary_slack for s in subs),
        trace=res.state.trace,
        coupling_labels=system.labels,
        iterates=res.state.iterates,
        lam=problem.lam,
    )
