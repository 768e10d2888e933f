"""Command line entry point: check, solve, eval, compare, table.

Exit codes: 0 success, 2 validation failure, 3 solver failure,
4 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import multiprocessing as mp
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .conic import SolverError, Status
from .config import ConfigError, SolveConfig, load_config
from .decomp import DecomposedSolution, SubproblemFailure, admm_solve, make_grid_partition, write_trace_csv
from .hjb import NoiseAssumptionViolated, box_facets, check_noise_assumption, fit_boundary_data
from .records import RecordError, SolutionRecord
from .refgrid import GridSolution, solve_fd
from .soscert import box_set, certify_nonneg

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3
EXIT_NOT_CONVERGED = 4
VIOLATION_TOL = 1e-4

log = logging.getLogger("hjbsos")


def _f(v: float) -> str:
    return format(float(v), ".17g")


# -- check ----------------------------------------------------------------------------

@dataclass
class CheckReport:
    passed: bool
    reason: str = ""
    lines: list[str] = field(default_factory=list)
    sigma: np.ndarray | None = None

    def text(self) -> str:
        tail = "RESULT PASS" if self.passed else f"RESULT FAIL {self.reason}"
        return "\n".join(self.lines + [tail]) + "\n"


def cmd_check(cfg: SolveConfig) -> CheckReport:
    pb = cfg.problem
    rep = CheckReport(True)
    try:
        sigma = check_noise_assumption(pb)
    except NoiseAssumptionViolated as exc:
        rep.lines.append(f"noise_assumption FAIL residual {_f(exc.discrepancy)}")
        rep.passed, rep.reason = False, "NoiseAssumptionViolated"
        return rep
    if not sigma.is_constant:
        rep.lines.append("noise_assumption FAIL state-dependent Sigma_t")
        rep.passed, rep.reason = False, "StateDependentNoise"
        return rep
    S = sigma.array()
    rep.sigma = S
    rep.lines.append(f"noise_assumption PASS residual 0 Sigma_t {S.tolist()}")
    if pb.state_cost.degree == 0:
        ok = pb.state_cost.evaluate(np.zeros(pb.nvars)) >= 0
    else:
        ok = certify_nonneg(pb.state_cost, box_set(pb.domain)).status is Status.OPTIMAL
    rep.lines.append(f"state_cost_nonneg {'PASS' if ok else 'FAIL'} certificate")
    if not ok:
        rep.passed, rep.reason = False, "StateCostNotCertified"
    fit_degree = cfg.solver["fit_degree"] if cfg.solver["fit_degree"] is not None else cfg.solver["degree"]
    for facet in box_facets(pb.nvars):
        fit = fit_boundary_data(pb.boundary_costs[facet], pb.lam, facet, pb.domain, fit_degree,
                                cfg.solver["fit_samples"])
        rep.lines.append(f"boundary_fit {facet.name(pb.variables)} degree {fit_degree} max_error {_f(fit.max_error)}")
    return rep


# -- solve ----------------------------------------------------------------------------

@dataclass
class SolveOutcome:
    solutions: list[DecomposedSolution]
    records: list[SolutionRecord]
    files: list[Path]
    summary: str
    seconds: float

    @property
    def converged(self) -> bool:
        return all(s.converged for s in self.solutions)


def run_solve(cfg: SolveConfig, sigma=None, direction=None, **admm_overrides) -> tuple[DecomposedSolution, float]:
    s = cfg.solver
    part = make_grid_partition(cfg.problem.domain, cfg.counts)
    t0 = time.perf_counter()
    sol = admm_solve(cfg.problem, part, s["degree"], s["order"], direction or cfg.direction[0], cfg.certificate(),
                     cfg.admm_options(**admm_overrides), sigma, tol=s["tol"], method=s["method"])
    return sol, time.perf_counter() - t0


def summary_text(cfg: SolveConfig, sols: Sequence[DecomposedSolution], seconds: Sequence[float]) -> str:
    s = cfg.solver
    lines = [f"config {cfg.source}", f"degree {s['degree']}", f"regions {' '.join(map(str, cfg.counts))}",
             f"order {s['order']}"]
    for sol, sec in zip(sols, seconds):
        d = sol.direction.value
        lines += [f"[{d}]",
                  f"gamma_max {sol.gamma_max:.5g}",
                  f"gamma_spread {sol.gamma_spread:.3e}",
                  f"converged {'yes' if sol.converged else 'no'}",
                  f"iterations {sol.iterations}",
                  f"primal_residual {sol.primal_residual:.3e}",
                  f"dual_residual {sol.dual_residual:.3e}",
                  f"boundary_slack {sol.boundary_slack:.3e}",
                  f"seconds {sec:.1f}"]
    return "\n".join(lines) + "\n"


def cmd_solve(cfg: SolveConfig, outdir: Path | None = None) -> SolveOutcome:
    outdir = Path(outdir or cfg.output["directory"])
    outdir.mkdir(parents=True, exist_ok=True)
    sigma = check_noise_assumption(cfg.problem)
    sols, records, files, secs = [], [], [], []
    t_all = time.perf_counter()
    for d in cfg.direction:
        sol, sec = run_solve(cfg, sigma, d)
        rec = SolutionRecord.from_solution(sol, cfg.problem, cfg.solver["eps_floor"])
        rpath = outdir / f"solution_{d.value}.txt"
        rec.write(rpath)
        tpath = outdir / f"trace_{d.value}.csv"
        with open(tpath, "w", newline="") as fh:
            write_trace_csv(sol.trace, len(sol.coupling_labels), fh)
        sols.append(sol)
        records.append(rec)
        secs.append(sec)
        files += [rpath, tpath]
    text = summary_text(cfg, sols, secs)
    spath = outdir / "summary.txt"
    spath.write_text(text)
    files.append(spath)
    return SolveOutcome(sols, records, files, text, time.perf_counter() - t_all)


# -- eval -----------------------------------------------------------------------------

def grid_points(lower, upper, resolution: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(lower, upper)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in grids])


def cmd_eval(record: SolutionRecord, resolution: int, stream) -> int:
    """Write x, psi, V, u* rows; returns the number of rows below the floor."""
    m = record.input_matrix.shape[1]
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(list(record.variables) + ["psi", "V"] + [f"u{k + 1}" for k in range(m)] + ["status"])
    flagged = 0
    for x in grid_points(record.domain.lower, record.domain.upper, resolution):
        psi, v, u = record.evaluate(x)
        if v is None:
            flagged += 1
            w.writerow([_f(c) for c in x] + [_f(psi), "nan"] + ["nan"] * m + ["below_floor"])
        else:
            w.writerow([_f(c) for c in x] + [_f(psi), _f(v)] + [_f(c) for c in u] + ["ok"])
    return flagged


# -- compare --------------------------------------------------------------------------

@dataclass
class GapStats:
    direction: str
    minimum: float
    mean: float
    maximum: float
    violations: int


def bound_gaps(record: SolutionRecord, grid: GridSolution) -> np.ndarray:
    """Signed distance by which the record bounds the grid solution (>= 0 is a valid bound)."""
    pts = grid.nodes()
    vals = np.array([record.psi_at(x) for x in pts])
    fd = grid.values.ravel()
    return vals - fd if record.direction.value == "upper" else fd - vals


def cmd_compare(cfg: SolveConfig, records: Sequence[SolutionRecord], nodes: int) -> tuple[list[GapStats], str]:
    pb = cfg.problem
    if pb.nvars > 2:
        raise ConfigError("UnsupportedDimension", "the grid oracle handles one or two state dimensions")
    for r in records:
        if r.variables != pb.variables or not (np.allclose(r.domain.lower, pb.domain.lower)
                                                 and np.allclose(r.domain.upper, pb.domain.upper)):
            raise ConfigError("DomainMismatch", "record and config describe different domains")
    grid = solve_fd(pb, None, nodes)
    stats = []
    lines = [f"fd_nodes {nodes} per axis, residual {grid.residual:.2e}"]
    for r in records:
        g = bound_gaps(r, grid)
        st = GapStats(r.direction.value, float(g.min()), float(g.mean()), float(g.max()),
                      int(np.sum(g < -VIOLATION_TOL)))
        stats.append(st)
        label = "psi_upper - psi_fd" if st.direction == "upper" else "psi_fd - psi_lower"
        lines.append(f"{label}: min {_f(st.minimum)} mean {_f(st.mean)} max {_f(st.maximum)} "
                     f"violations {st.violations}")
    ups = [r for r in records if r.direction.value == "upper"]
    los = [r for r in records if r.direction.value == "lower"]
    if ups and los:
        pts = grid.nodes()
        width = np.array([ups[0].psi_at(x) - los[0].psi_at(x) for x in pts])
        lines.append(f"sandwich width: max {_f(width.max())} mean {_f(width.mean())}, "
                     f"gamma envelope {_f(ups[0].gamma_max + los[0].gamma_max)}")
    return stats, "\n".join(lines) + "\n"


# -- table ----------------------------------------------------------------------------

def _cell(cfg: SolveConfig, degree: int, n_r: int, queue) -> None:
    try:
        cfg.solver["degree"] = degree
        cfg.solver["regions"] = n_r
        sol, sec = run_solve(cfg, sweep="serial")
        queue.put((degree, n_r, "ok", sol.gamma_max, sec))
    except Exception as exc:  # recorded per cell, the table keeps going
        queue.put((degree, n_r, "failed", f"{type(exc).__name__}: {exc}", 0.0))


def cmd_table(cfg: SolveConfig, degrees: Sequence[int], counts: Sequence[int], budget: float | None = None,
              workers: int = 1) -> dict[tuple[int, int], tuple[str, object]]:
    """Solve every (d, n_r) cell in its own process; cells over budget are skipped."""
    ctx = mp.get_context("fork")
    queue = ctx.Queue()
    pending = [(d, n) for n in counts for d in degrees]
    running: dict[tuple[int, int], tuple[mp.Process, float]] = {}
    results: dict[tuple[int, int], tuple[str, object]] = {}
    while pending or running:
        while pending and len(running) < max(1, workers):
            key = pending.pop(0)
            proc = ctx.Process(target=_cell, args=(cfg, key[0], key[1], queue), daemon=True)
            proc.start()
            running[key] = (proc, time.monotonic())
        try:
            d, n, status, value, _ = queue.get(timeout=0.2)
            results[d, n] = (status, value)
            proc, _ = running.pop((d, n))
            proc.join()
        except Exception:
            pass
        now = time.monotonic()
        for key, (proc, start) in list(running.items()):
            if key in results:
                continue
            if budget is not None and now - start > budget:
                proc.terminate()
                proc.join()
                running.pop(key)
                results[key] = ("skipped", f"over {budget:g} s budget")
            elif not proc.is_alive() and queue.empty():
                running.pop(key)
                results[key] = ("failed", f"worker exited with code {proc.exitcode}")
    return results


def table_csv(results, degrees, counts, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["n_r"] + [f"d={d}" for d in degrees])
    for n in counts:
        row = [str(n)]
        for d in degrees:
            status, value = results[d, n]
            row.append(_f(value) if status == "ok" else status)
        w.writerow(row)


# -- argument handling ----------------------------------------------------------------

def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hjbsos", description="Certified SOS bounds on desirability functions.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log ADMM progress")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("config", help="YAML config file or bundled example name")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry by dotted path, e.g. solver.degree=6")

    p = sub.add_parser("check", help="validate a config")
    with_config(p)
    p = sub.add_parser("solve", help="run the decomposed SOS solve")
    with_config(p)
    p.add_argument("--out", help="output directory (default: output.directory)")
    p = sub.add_parser("eval", help="evaluate a solution record on a grid")
    p.add_argument("record")
    p.add_argument("--resolution", type=int, default=101)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p = sub.add_parser("compare", help="compare records against the finite-difference oracle")
    with_config(p)
    p.add_argument("records", nargs="+")
    p.add_argument("--nodes", type=int, help="grid nodes per axis (default: output.fd_nodes)")
    p = sub.add_parser("table", help="gamma_max over degrees and region counts")
    with_config(p)
    p.add_argument("--degrees", type=_int_list, default=[4, 6, 8])
    p.add_argument("--regions", type=_int_list, default=[1])
    p.add_argument("--budget", type=float, help="seconds per cell before it is skipped")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="CSV path (default: stdout)")
    return ap


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "eval":
            rec = SolutionRecord.read(args.record)
            buf = io.StringIO()
            cmd_eval(rec, args.resolution, buf)
            _emit(buf.getvalue(), args.out)
            return EXIT_OK
        cfg = load_config(args.config, args.overrides)
        if args.command == "check":
            rep = cmd_check(cfg)
            sys.stdout.write(rep.text())
            return EXIT_OK if rep.passed else EXIT_INVALID
        if args.command == "solve":
            rep = cmd_check(cfg)
            if not rep.passed:
                sys.stdout.write(rep.text())
                return EXIT_INVALID
            out = cmd_solve(cfg, args.out)
            sys.stdout.write(out.summary)
            return EXIT_OK if out.converged else EXIT_NOT_CONVERGED
        if args.command == "compare":
            recs = [SolutionRecord.read(r) for r in args.records]
            _, text = cmd_compare(cfg, recs, args.nodes or cfg.output["fd_nodes"])
            sys.stdout.write(text)
            return EXIT_OK
        if args.command == "table":
            res = cmd_table(cfg, args.degrees, args.regions, args.budget, args.workers)
            buf = io.StringIO()
            table_csv(res, args.degrees, args.regions, buf)
            _emit(buf.getvalue(), args.out)
            return EXIT_OK
    except (ConfigError, RecordError) as exc:
        code = getattr(exc, "code", "MalformedRecord")
        sys.stdout.write(f"RESULT FAIL {code}\n{exc}\n")
        return EXIT_INVALID
    except NoiseAssumptionViolated as exc:
        sys.stdout.write(f"RESULT FAIL NoiseAssumptionViolated\n{exc}\n")
        return EXIT_INVALID
    except SubproblemFailure as exc:
        sys.stderr.write(f"solver failure: {exc}\n")
        return EXIT_SOLVER
    except SolverError as exc:
        sys.stderr.write(f"solver failure: {exc}\n")
        return EXIT_SOLVER
    return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
