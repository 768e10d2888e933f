import numpy as np
import pytest

from hjbsos.hjb import Box, ControlProblem, Facet
from hjbsos.polynomial import PolyMatrix, parse

CARTESIAN_DRIFT = ("0.1*(-2*x - x^3 - 5*y - y^3)", "0.1*(6*x + x^3 - 3*y - y^3)")


def make_problem(variables, drift, q, costs, lower, upper, lam=1.0, R=None, noise=None):
    n = len(variables)
    eye = PolyMatrix.from_array(n, np.eye(n))
    R = np.eye(n) if R is None else R
    noise = np.eye(n) if noise is None else noise
    phi = {}
    for key, expr in costs.items():
        phi[Facet.parse(key, variables)] = parse(expr, variables)
    return ControlProblem(tuple(variables), PolyMatrix.column([parse(e, variables) for e in drift]), eye, eye,
                          R, noise, lam, parse(q, variables), Box(tuple(lower), tuple(upper)), phi)


def scalar_problem(q="1", drift="x^2", phi="0"):
    return make_problem(["x"], [drift], q, {"x-": phi, "x+": phi}, [-1.0], [1.0])


def cartesian_problem(reward="1 - (y - 1)^2"):
    return make_problem(["x", "y"], CARTESIAN_DRIFT, "1", {"x-": "1", "x+": reward, "y-": "1", "y+": "1"},
                        [-1.0, -1.0], [1.0, 1.0])


def trivial_problem(n=1):
    variables = ["x", "y"][:n]
    costs = {f"{v}{s}": "0" for v in variables for s in "+-"}
    return make_problem(variables, ["0"] * n, "0", costs, [-1.0] * n, [1.0] * n)


@pytest.fixture
def scalar():
    return scalar_problem()


@pytest.fixture
def cartesian():
    return cartesian_problem()
