"""YAML problem/solver configuration with schema validation.

Layout (every polynomial is an expression string over ``variables``)::

    problem:
      variables: [x, y]
      drift: ["-x", "-y"]              # f, one entry per state
      input_matrix: [["1", "0"], ...]  # G, n x m
      noise_matrix: [["1", "0"], ...]  # B, n x k
      control_penalty: [[1, 0], ...]   # R, m x m
      noise_covariance: [[1, 0], ...]  # Sigma_eps, k x k
      lambda: 1
      state_cost: "1"                  # q
      domain: {lower: [-1, -1], upper: [1, 1]}
      boundary: {"x-": "1", "x+": "0", ...}   # phi per facet
    solver:
      degree: 8
      ...                              # see SOLVER_DEFAULTS
    output:
      directory: out
      resolution: 101

Dotted overrides (``solver.degree=6``) are applied to the raw tree before
validation; their values are parsed as YAML scalars.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .decomp import AdmmOptions
from .hjb import Box, ControlProblem, Facet, box_facets
from .polynomial import ParseError, PolyMatrix, parse
from .soscert import CertificateOptions, Direction

SOLVER_DEFAULTS: dict[str, Any] = {
    "degree": 6,
    "multiplier_extra_degree": 0,
    "order": 1,
    "direction": "upper",          # upper, lower or both
    "regions": 1,                  # int or one count per dimension
    "rho": 1.0,
    "eps_pri": 1e-5,
    "eps_dual": 1e-5,
    "eps_rel": 1e-3,
    "max_outer": 200,
    "adaptive_rho": False,
    "sweep": "parallel",
    "workers": None,
    "fit_degree": None,
    "fit_samples": 64,
    "eps_floor": 1e-6,
    "tol": 1e-8,
    "method": "auto",
}
OUTPUT_DEFAULTS: dict[str, Any] = {"directory": "out", "resolution": 101, "fd_nodes": 201}
PROBLEM_KEYS = {"variables", "drift", "input_matrix", "noise_matrix", "control_penalty", "noise_covariance",
                "lambda", "state_cost", "domain", "boundary"}
BUNDLED = ("scalar_sec6", "cartesian_sec7", "cartesian_consistent")


class ConfigError(ValueError):
    """Schema violation; ``code`` is a stable machine-readable reason."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass
class SolveConfig:
    problem: ControlProblem
    solver: dict[str, Any]
    output: dict[str, Any]
    raw: dict[str, Any] = field(default_factory=dict)
    source: str = ""

    @property
    def direction(self) -> list[Direction]:
        d = self.solver["direction"]
        return [Direction.UPPER, Direction.LOWER] if d == "both" else [Direction(d)]

    @property
    def counts(self) -> tuple[int, ...]:
        r = self.solver["regions"]
        n = self.problem.nvars
        return (int(r),) * n if isinstance(r, int) else tuple(int(c) for c in r)

    def certificate(self) -> CertificateOptions:
        s = self.solver
        return CertificateOptions(extra_degree=s["multiplier_extra_degree"], fit_degree=s["fit_degree"],
                                  fit_samples=s["fit_samples"], eps_floor=s["eps_floor"])

    def admm_options(self, **overrides) -> AdmmOptions:
        s = self.solver
        kw = dict(rho=s["rho"], eps_pri=s["eps_pri"], eps_dual=s["eps_dual"], eps_rel=s["eps_rel"],
                  max_outer=s["max_outer"], adaptive_rho=s["adaptive_rho"], sweep=s["sweep"], workers=s["workers"])
        kw.update(overrides)
        return AdmmOptions(**kw)


def bundled_path(name: str) -> Path:
    if name not in BUNDLED:
        raise ConfigError("UnknownConfig", f"no bundled config {name!r}; choose from {', '.join(BUNDLED)}")
    return Path(str(resources.files("hjbsos") / "configs" / f"{name}.yaml"))


def resolve_path(spec: str) -> Path:
    """A file path, or the name of a bundled example."""
    p = Path(spec)
    if p.exists():
        return p
    if spec in BUNDLED:
        return bundled_path(spec)
    raise ConfigError("MissingConfig", f"config file {spec!r} not found")


def apply_override(tree: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError("BadOverride", f"override {assignment!r} must look like key.path=value")
    key, text = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = tree
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError("BadOverride", f"{key} does not name a mapping entry")
    node[parts[-1]] = yaml.safe_load(text)


def load_config(spec: str, overrides=()) -> SolveConfig:
    path = resolve_path(spec)
    try:
        tree = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("BadYaml", str(exc)) from exc
    tree = tree or {}
    for o in overrides:
        apply_override(tree, o)
    cfg = build_config(tree)
    cfg.source = str(path)
    return cfg


def _matrix(value, name: str, rows: int | None = None) -> list[list]:
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ConfigError("BadShape", f"{name} must be a nested list")
    if rows is not None and len(value) != rows:
        raise ConfigError("BadShape", f"{name} needs {rows} rows")
    if len({len(r) for r in value}) != 1:
        raise ConfigError("BadShape", f"{name} rows differ in length")
    return value


def _poly(text, variables, name: str):
    try:
        return parse(str(text), variables)
    except (ParseError, ValueError) as exc:
        raise ConfigError("BadExpression", f"{name}: {exc}") from exc


def _polymatrix(value, variables, name: str) -> PolyMatrix:
    rows = _matrix(value, name, len(variables))
    return PolyMatrix([[_poly(e, variables, f"{name}[{i}][{j}]") for j, e in enumerate(r)] for i, r in enumerate(rows)])


def build_config(tree: dict) -> SolveConfig:
    if not isinstance(tree, dict) or "problem" not in tree:
        raise ConfigError("MissingSection", "config needs a 'problem' section")
    unknown = set(tree) - {"problem", "solver", "output"}
    if unknown:
        raise ConfigError("UnknownKey", f"unknown top-level keys {sorted(unknown)}")
    pr = tree["problem"]
    missing = PROBLEM_KEYS - set(pr)
    if missing:
        raise ConfigError("MissingKey", f"problem section lacks {sorted(missing)}")
    extra = set(pr) - PROBLEM_KEYS
    if extra:
        raise ConfigError("UnknownKey", f"unknown problem keys {sorted(extra)}")
    variables = [str(v) for v in pr["variables"]]
    n = len(variables)
    if n == 0 or len(set(variables)) != n:
        raise ConfigError("BadVariables", "variables must be distinct and non-empty")
    if not isinstance(pr["drift"], list) or len(pr["drift"]) != n:
        raise ConfigError("BadShape", f"drift needs {n} entries")
    drift = PolyMatrix.column([_poly(e, variables, f"drift[{i}]") for i, e in enumerate(pr["drift"])])
    G = _polymatrix(pr["input_matrix"], variables, "input_matrix")
    B = _polymatrix(pr["noise_matrix"], variables, "noise_matrix")
    try:
        R = np.array(_matrix(pr["control_penalty"], "control_penalty"), dtype=float)
        S = np.array(_matrix(pr["noise_covariance"], "noise_covariance"), dtype=float)
        lam = float(pr["lambda"])
        lower = [float(v) for v in pr["domain"]["lower"]]
        upper = [float(v) for v in pr["domain"]["upper"]]
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError("BadValue", str(exc)) from exc
    if len(lower) != n or len(upper) != n:
        raise ConfigError("BadShape", f"domain bounds need {n} entries")
    try:
        domain = Box(tuple(lower), tuple(upper))
    except ValueError as exc:
        raise ConfigError("BadDomain", str(exc)) from exc
    costs = {}
    for key, expr in (pr["boundary"] or {}).items():
        try:
            facet = Facet.parse(str(key), variables)
        except ValueError as exc:
            raise ConfigError("BadFacet", str(exc)) from exc
        costs[facet] = _poly(expr, variables, f"boundary[{key}]")
    for facet in box_facets(n):
        if facet not in costs:
            raise ConfigError("MissingFacet", f"no boundary cost for facet {facet.name(variables)}")
    q = _poly(pr["state_cost"], variables, "state_cost")
    try:
        problem = ControlProblem(tuple(variables), drift, G, B, R, S, lam, q, domain, costs)
    except ValueError as exc:
        raise ConfigError("BadProblem", str(exc)) from exc

    solver = copy.deepcopy(SOLVER_DEFAULTS)
    given = tree.get("solver") or {}
    extra = set(given) - set(solver)
    if extra:
        raise ConfigError("UnknownKey", f"unknown solver keys {sorted(extra)}")
    solver.update(given)
    _check_solver(solver, n)
    output = dict(OUTPUT_DEFAULTS)
    given = tree.get("output") or {}
    extra = set(given) - set(output)
    if extra:
        raise ConfigError("UnknownKey", f"unknown output keys {sorted(extra)}")
    output.update(given)
    if int(output["resolution"]) < 2 or int(output["fd_nodes"]) < 11:
        raise ConfigError("BadValue", "output.resolution must be >= 2 and output.fd_nodes >= 11")
    return SolveConfig(problem, solver, output, tree)


def _check_solver(s: dict, n: int) -> None:
    def bad(msg):
        raise ConfigError("BadSolver", msg)

    if not isinstance(s["degree"], int) or s["degree"] < 0 or s["degree"] % 2:
        bad("degree must be a non-negative even integer")
    if s["order"] not in (0, 1, 2):
        bad("order must be 0, 1 or 2")
    if s["direction"] not in ("upper", "lower", "both"):
        bad("direction must be upper, lower or both")
    r = s["regions"]
    counts = [r] if isinstance(r, int) else r
    if not isinstance(counts, list) or not all(isinstance(c, int) and c >= 1 for c in counts) or \
            (not isinstance(r, int) and len(counts) != n):
        bad(f"regions must be a positive integer or {n} positive integers")
    for key in ("rho", "eps_pri", "eps_dual", "tol", "eps_floor"):
        if not float(s[key]) > 0:
            bad(f"{key} must be positive")
    if float(s["eps_rel"]) < 0:
        bad("eps_rel must be non-negative")
    if not isinstance(s["max_outer"], int) or s["max_outer"] < 1:
        bad("max_outer must be a positive integer")
    if s["sweep"] not in ("parallel", "serial"):
        bad("sweep must be parallel or serial")
    if s["method"] not in ("auto", "ipm", "splitting"):
        bad("method must be auto, ipm or splitting")
    if not isinstance(s["multiplier_extra_degree"], int) or s["multiplier_extra_degree"] < 0:
        bad("multiplier_extra_degree must be a non-negative integer")
    if s["fit_degree"] is not None and (not isinstance(s["fit_degree"], int) or s["fit_degree"] < 0):
        bad("fit_degree must be a non-negative integer or null")
