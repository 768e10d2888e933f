import io
import math
import warnings

import numpy as np
import pytest

from hjbsos.refgrid import solve_fd

from conftest import cartesian_problem, make_problem, scalar_problem, trivial_problem


def cosh_problem():
    # 1/2 Psi'' = Psi with Psi(+-1) = 1
    return scalar_problem(q="1", drift="0", phi="0")


def cosh_error(nodes):
    sol = solve_fd(cosh_problem(), nodes_per_axis=nodes)
    x = sol.axes[0]
    exact = np.cosh(math.sqrt(2.0) * x) / math.cosh(math.sqrt(2.0))
    return float(np.max(np.abs(sol.values - exact)))


def drift_problem(speed):
    # 1/2 Psi'' + speed Psi' = 0, Psi(-1) = 1, Psi(1) = exp(-1)
    return make_problem(["x"], [str(speed)], "0", {"x-": "0", "x+": "1"}, [-1.0], [1.0])


def drift_exact(speed, x):
    # Psi = A + B exp(-2 speed x), written without overflow
    layer = (np.exp(-2.0 * speed * (x + 1.0)) - math.exp(-4.0 * speed)) / (1.0 - math.exp(-4.0 * speed))
    return math.exp(-1.0) + (1.0 - math.exp(-1.0)) * layer


@pytest.mark.parametrize("n", [1, 2])
def test_trivial_problem_is_one(n):
    sol = solve_fd(trivial_problem(n), nodes_per_axis=21)
    assert np.allclose(sol.values, 1.0, atol=1e-12)
    assert sol.residual <= 1e-10


def test_cosh_closed_form():
    assert cosh_error(201) <= 1e-4


def test_second_order_refinement():
    ratio = cosh_error(101) / cosh_error(201)
    assert 3.5 <= ratio <= 4.5


def test_constant_drift_closed_form():
    sol = solve_fd(drift_problem(1.0), nodes_per_axis=201)
    assert sol.upwinded == 0
    assert np.max(np.abs(sol.values - drift_exact(1.0, sol.axes[0]))) <= 1e-4
    coarse = solve_fd(drift_problem(1.0), nodes_per_axis=101)
    ratio = np.max(np.abs(coarse.values - drift_exact(1.0, coarse.axes[0]))) / np.max(
        np.abs(sol.values - drift_exact(1.0, sol.axes[0])))
    assert 3.5 <= ratio <= 4.5


def test_upwinding_above_peclet_limit():
    # |f| h / Sigma = 500 * 0.01 > 2 at every interior node
    sol = solve_fd(drift_problem(500.0), nodes_per_axis=201)
    assert sol.upwinded == 199
    # the upwind scheme is monotone: no over- or undershoot in the boundary layer
    assert np.all(np.diff(sol.values) <= 1e-14)
    assert np.max(np.abs(sol.values - drift_exact(500.0, sol.axes[0]))[10:]) <= 1e-6


def test_boundary_nodes_are_exact_samples(scalar):
    sol = solve_fd(scalar, nodes_per_axis=51)
    assert sol.values[0] == 1.0 and sol.values[-1] == 1.0
    assert sol.boundary.sum() == 2


def test_maximum_principle_scalar(scalar):
    sol = solve_fd(scalar, nodes_per_axis=201)
    inner = sol.values[~sol.boundary]
    assert np.all(inner > 0.0)
    assert np.all(inner <= sol.boundary_values.max())


def test_maximum_principle_and_corners_2d(cartesian):
    with pytest.warns(UserWarning, match="corner"):
        sol = solve_fd(cartesian, nodes_per_axis=41)
    inner = sol.values[~sol.boundary]
    assert np.all(inner > 0.0)
    assert np.all(inner <= sol.boundary_values.max())
    # at (1, -1) the reward facet gives exp(3), the y- facet exp(-1)
    assert sol.values[-1, 0] == pytest.approx(0.5 * (math.exp(3.0) + math.exp(-1.0)), rel=1e-14)
    # at (1, 1) both facets give exp(-1)
    assert sol.values[-1, -1] == pytest.approx(math.exp(-1.0), rel=1e-14)


def test_consistent_corners_do_not_warn():
    prob = cartesian_problem(reward="1")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        solve_fd(prob, nodes_per_axis=21)


def test_csv_dump():
    sol = solve_fd(trivial_problem(2), nodes_per_axis=11)
    buf = io.StringIO()
    sol.write_csv(buf, ["x", "y"])
    lines = buf.getvalue().splitlines()
    assert lines[0] == "x,y,psi_fd"
    assert len(lines) == 1 + 121
    first = [float(v) for v in lines[1].split(",")]
    assert first == [-1.0, -1.0, 1.0]


def test_rejects_unsupported_inputs():
    three = make_problem(["x", "y", "z"], ["0"] * 3, "0",
                         {f"{v}{s}": "0" for v in "xyz" for s in "+-"}, [-1.0] * 3, [1.0] * 3)
    with pytest.raises(ValueError):
        solve_fd(three, nodes_per_axis=11)
    with pytest.raises(ValueError):
        solve_fd(trivial_problem(1), nodes_per_axis=10)
