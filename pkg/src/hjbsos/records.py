"""Plain-text solution records.

A record is line oriented: ``key value...`` header lines, then one block per
region::

    hjbsos-solution 1
    variables x y
    lambda 1
    ...
    input 0 1 <expression>       # G entries, for policy extraction
    penalty 0 1 <value>          # R entries
    region 0 lower -1 -1 upper -0.33333333333333331 -0.33333333333333331 gamma 0.5 terms 45
    0 0 0.98765432109876543
    ...
    end

Coefficients are in original coordinates and printed with 17 significant
digits, which round-trips IEEE doubles exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decomp import DecomposedSolution, Partition, make_grid_partition
from .hjb import EPS_FLOOR, Box, ControlProblem, NonPositiveDesirability, desirability_to_value, extract_policy
from .polynomial import PolyMatrix, Polynomial, parse, to_expression
from .soscert import Direction

MAGIC = "hjbsos-solution"
VERSION = 1


class RecordError(ValueError):
    pass


def _num(v: float) -> str:
    return format(float(v), ".17g")


@dataclass
class PolicyData:
    """What :func:`extract_policy` needs from the control problem."""

    lam: float
    input_matrix: PolyMatrix
    control_penalty: np.ndarray


@dataclass
class SolutionRecord:
    variables: tuple[str, ...]
    lam: float
    direction: Direction
    degree: int
    order: int
    domain: Box
    counts: tuple[int, ...]
    regions: list[Box]
    gammas: list[float]
    psis: list[Polynomial]
    input_matrix: PolyMatrix
    control_penalty: np.ndarray
    eps_floor: float = EPS_FLOOR
    converged: bool = True
    iterations: int = 0
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    boundary_slack: float = 0.0
    _partition: Partition | None = field(default=None, repr=False, compare=False)

    @property
    def nvars(self) -> int:
        return len(self.variables)

    @property
    def gamma_max(self) -> float:
        return max(self.gammas)

    @property
    def policy_data(self) -> PolicyData:
        return PolicyData(self.lam, self.input_matrix, self.control_penalty)

    @property
    def partition(self) -> Partition:
        if self._partition is None:
            self._partition = make_grid_partition(self.domain, self.counts)
        return self._partition

    @classmethod
    def from_solution(cls, sol: DecomposedSolution, problem: ControlProblem,
                      eps_floor: float = EPS_FLOOR) -> SolutionRecord:
        part = sol.partition
        return cls(tuple(problem.variables), problem.lam, sol.direction, sol.degree, sol.order, part.domain,
                   part.counts, list(part.regions), list(sol.gammas), list(sol.psis), problem.input_matrix,
                   np.array(problem.control_penalty), eps_floor, sol.converged, sol.iterations,
                   sol.primal_residual, sol.dual_residual, sol.boundary_slack, part)

    # -- evaluation ---------------------------------------------------------------

    def psi_at(self, x) -> float:
        return self.psis[self.partition.locate(x)].evaluate(x)

    def evaluate(self, x) -> tuple[float, float | None, np.ndarray | None]:
        """``(Psi, V, u*)``; V and u* are None where Psi is below the floor."""
        psi = self.psis[self.partition.locate(x)]
        value = psi.evaluate(x)
        try:
            v = desirability_to_value(psi, self.lam, x, self.eps_floor)
            u = extract_policy(psi, self.policy_data, x, self.eps_floor)
        except NonPositiveDesirability:
            return value, None, None
        return value, v, u

    # -- text format ----------------------------------------------------------------

    def dumps(self) -> str:
        out = [f"{MAGIC} {VERSION}",
               "variables " + " ".join(self.variables),
               f"lambda {_num(self.lam)}",
               f"direction {self.direction.value}",
               f"degree {self.degree}",
               f"order {self.order}",
               f"eps_floor {_num(self.eps_floor)}",
               "domain_lower " + " ".join(_num(v) for v in self.domain.lower),
               "domain_upper " + " ".join(_num(v) for v in self.domain.upper),
               "counts " + " ".join(str(c) for c in self.counts),
               f"converged {'true' if self.converged else 'false'}",
               f"iterations {self.iterations}",
               f"primal_residual {_num(self.primal_residual)}",
               f"dual_residual {_num(self.dual_residual)}",
               f"boundary_slack {_num(self.boundary_slack)}",
               f"gamma_max {_num(self.gamma_max)}"]
        rows, cols = self.input_matrix.shape
        for i in range(rows):
            for j in range(cols):
                out.append(f"input {i} {j} {to_expression(self.input_matrix[i, j], self.variables)}")
        R = np.atleast_2d(self.control_penalty)
        for i in range(R.shape[0]):
            for j in range(R.shape[1]):
                out.append(f"penalty {i} {j} {_num(R[i, j])}")
        for k, (box, g, p) in enumerate(zip(self.regions, self.gammas, self.psis)):
            terms = sorted(p.items())
            out.append(f"region {k} lower {' '.join(_num(v) for v in box.lower)} "
                       f"upper {' '.join(_num(v) for v in box.upper)} gamma {_num(g)} terms {len(terms)}")
            for m, c in terms:
                out.append(" ".join(str(e) for e in m) + " " + _num(c))
        out.append("end")
        return "\n".join(out) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> SolutionRecord:
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if not lines or lines[0].split()[:1] != [MAGIC]:
            raise RecordError("not a solution record")
        try:
            version = int(lines[0].split()[1])
        except (IndexError, ValueError) as exc:
            raise RecordError("missing record version") from exc
        if version != VERSION:
            raise RecordError(f"unsupported record version {version}")
        head: dict[str, list[str]] = {}
        G: dict[tuple[int, int], str] = {}
        R: dict[tuple[int, int], float] = {}
        regions, gammas, psis = [], [], []
        i = 1
        try:
            while i < len(lines) and not lines[i].startswith("region ") and lines[i] != "end":
                key, *rest = lines[i].split()
                if key == "input":
                    G[int(rest[0]), int(rest[1])] = lines[i].split(None, 3)[3]
                elif key == "penalty":
                    R[int(rest[0]), int(rest[1])] = float(rest[2])
                else:
                    head[key] = rest
                i += 1
            variables = tuple(head["variables"])
            n = len(variables)
            while lines[i] != "end":
                tok = lines[i].split()
                if tok[0] != "region":
                    raise RecordError(f"expected a region header, got {lines[i]!r}")
                lo = tuple(float(v) for v in tok[3:3 + n])
                hi = tuple(float(v) for v in tok[4 + n:4 + 2 * n])
                gammas.append(float(tok[5 + 2 * n]))
                count = int(tok[7 + 2 * n])
                terms = {}
                for ln in lines[i + 1:i + 1 + count]:
                    parts = ln.split()
                    if len(parts) != n + 1:
                        raise RecordError(f"bad term line {ln!r}")
                    terms[tuple(int(e) for e in parts[:n])] = float(parts[n])
                regions.append(Box(lo, hi))
                psis.append(Polynomial(n, terms))
                i += 1 + count
            rows = 1 + max(k[0] for k in G)
            cols = 1 + max(k[1] for k in G)
            Gm = PolyMatrix([[parse(G[r, c], variables) for c in range(cols)] for r in range(rows)])
            m = 1 + max(k[0] for k in R)
            Rm = np.array([[R[r, c] for c in range(m)] for r in range(m)])
            rec = cls(
                variables=variables,
                lam=float(head["lambda"][0]),
                direction=Direction(head["direction"][0]),
                degree=int(head["degree"][0]),
                order=int(head["order"][0]),
                domain=Box(tuple(float(v) for v in head["domain_lower"]), tuple(float(v) for v in head["domain_upper"])),
                counts=tuple(int(c) for c in head["counts"]),
                regions=regions,
                gammas=gammas,
                psis=psis,
                input_matrix=Gm,
                control_penalty=Rm,
                eps_floor=float(head["eps_floor"][0]),
                converged=head["converged"][0] == "true",
                iterations=int(head["iterations"][0]),
                primal_residual=float(head["primal_residual"][0]),
                dual_residual=float(head["dual_residual"][0]),
                boundary_slack=float(head["boundary_slack"][0]),
            )
        except RecordError:
            raise
        except (KeyError, IndexError, ValueError) as exc:
            raise RecordError(f"malformed record: {exc}") from exc
        if len(rec.regions) != int(np.prod(rec.counts)):
            raise RecordError("region count does not match the grid counts")
        return rec

    @classmethod
    def read(cls, path) -> SolutionRecord:
        return cls.loads(Path(path).read_text())
