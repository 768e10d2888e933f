import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjbsos.polynomial import (
    ParseError,
    PolyMatrix,
    Polynomial,
    add,
    differentiate,
    evaluate,
    grlex_key,
    monomial_basis,
    mul,
    parse,
    restrict,
    scale,
    to_expression,
)

XY = ["x", "y"]


def P(expr, variables=XY):
    return parse(expr, variables)


@st.composite
def polys(draw, nvars=None, max_deg=4):
    n = draw(st.integers(1, 3)) if nvars is None else nvars
    basis = monomial_basis(n, draw(st.integers(0, max_deg)))
    coeffs = draw(st.lists(st.floats(-3, 3, allow_nan=False), min_size=len(basis), max_size=len(basis)))
    return Polynomial.from_coefficients(basis, coeffs)


@st.composite
def poly_pair_and_point(draw):
    n = draw(st.integers(1, 3))
    p = draw(polys(nvars=n))
    q = draw(polys(nvars=n))
    v = draw(st.lists(st.floats(-1.5, 1.5), min_size=n, max_size=n))
    return p, q, np.array(v)


# -- basis -------------------------------------------------------------------------

def test_basis_examples():
    assert monomial_basis(1, 2) == [(0,), (1,), (2,)]
    assert monomial_basis(2, 2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert len(monomial_basis(2, 8)) == 45


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(0, 7))
def test_basis_ordered_and_counted(n, d):
    basis = monomial_basis(n, d)
    assert len(basis) == math.comb(n + d, d)
    keys = [grlex_key(m) for m in basis]
    assert all(a < b for a, b in zip(keys, keys[1:]))
    assert len(set(basis)) == len(basis)


# -- arithmetic -----------------------------------------------------------------------

def test_arithmetic_examples():
    x2 = P("x^2", ["x"])
    assert add(x2, -x2).is_zero()
    assert mul(P("x+1", ["x"]), P("x-1", ["x"])) == P("x^2 - 1", ["x"])
    assert mul(P("x+y"), P("x-y")) == P("x^2 - y^2")
    assert scale(P("x+y"), 2.0) == P("2*x + 2*y")
    assert P("x^3 + 1").degree == 3
    assert Polynomial.zero(2).degree == 0


def test_nvars_mismatch_rejected():
    with pytest.raises(ValueError):
        add(P("x", ["x"]), P("x"))


def test_derivative_examples():
    assert differentiate(P("x^3", ["x"]), 0) == P("3*x^2", ["x"])
    assert differentiate(P("x^2"), 1).is_zero()
    assert differentiate(P("x^2*y + y^3"), 0) == P("2*x*y")
    with pytest.raises((IndexError, ValueError)):
        differentiate(P("x"), 2)


def test_evaluate_examples():
    assert evaluate(P("x^2 + 1", ["x"]), [2.0]) == 5.0
    assert evaluate(Polynomial.zero(2), [0.3, -4.0]) == 0.0
    assert evaluate(P("x^2*y"), [3.0, 2.0]) == 18.0
    with pytest.raises(ValueError):
        evaluate(P("x"), [1.0])


def test_restrict_examples():
    p = P("x^2 + x*y + y^2")
    assert restrict(p, 0, 0.0) == P("y^2", ["y"])
    assert restrict(p, 0, 1.0) == P("1 + y + y^2", ["y"])
    assert restrict(Polynomial.constant(2, 4.0), 0, 3.0) == Polynomial.constant(1, 4.0)


@settings(max_examples=60, deadline=None)
@given(poly_pair_and_point())
def test_evaluation_homomorphism(data):
    p, q, v = data
    lhs = evaluate(mul(p, q), v)
    rhs = evaluate(p, v) * evaluate(q, v)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs), abs(evaluate(p, v)) * abs(evaluate(q, v)) + 1.0)


@settings(max_examples=60, deadline=None)
@given(poly_pair_and_point(), st.integers(0, 2))
def test_product_rule(data, i):
    p, q, _ = data
    i = i % p.nvars
    lhs = differentiate(mul(p, q), i)
    rhs = add(mul(differentiate(p, i), q), mul(p, differentiate(q, i)))
    diff = lhs - rhs
    assert diff.max_abs_coefficient() <= 1e-12 * max(1.0, lhs.max_abs_coefficient())


@settings(max_examples=60, deadline=None)
@given(poly_pair_and_point(), st.integers(0, 2))
def test_gradient_matches_central_difference(data, i):
    p, _, v = data
    i = i % p.nvars
    h = 1e-5
    e = np.zeros(p.nvars)
    e[i] = h
    fd = (evaluate(p, v + e) - evaluate(p, v - e)) / (2 * h)
    exact = evaluate(differentiate(p, i), v)
    assert abs(fd - exact) <= 1e-6 * max(1.0, p.max_abs_coefficient())


@settings(max_examples=40, deadline=None)
@given(polys(), st.floats(-2, 2))
def test_restrict_agrees_with_evaluation(p, a):
    rng = np.random.default_rng(0)
    v = rng.uniform(-1, 1, p.nvars)
    v[0] = a
    r = restrict(p, 0, a)
    assert abs(r.evaluate(v[1:]) - p.evaluate(v)) <= 1e-9 * max(1.0, p.max_abs_coefficient())


def test_affine_substitute():
    p = P("x^2 + 3*x*y - y")
    q = p.affine_substitute([0.5, -1.0], [2.0, 0.25])
    for pt in [(0.1, 0.2), (-0.7, 0.9)]:
        mapped = (0.5 + 2.0 * pt[0], -1.0 + 0.25 * pt[1])
        assert q.evaluate(pt) == pytest.approx(p.evaluate(mapped), abs=1e-12)


def test_polymatrix_product():
    A = PolyMatrix([[P("x"), P("1")], [P("0"), P("y")]])
    B = A @ A.T
    assert B[0, 0] == P("x^2 + 1")
    assert B[0, 1] == P("y")
    assert B.shape == (2, 2)


# -- parser ----------------------------------------------------------------------------

def test_parse_dynamics_and_reward():
    p = P("0.1*(-2*x - x^3 - 5*y - y^3)")
    expect = {(1, 0): -0.2, (3, 0): -0.1, (0, 1): -0.5, (0, 3): -0.1}
    assert set(dict(p.items())) == set(expect)
    for m, c in expect.items():
        assert p.coefficient(m) == pytest.approx(c, abs=1e-15)
    assert P("1 - (y-1)^2") == P("2*y - y^2")
    assert P("x*x - x^2", ["x"]).is_zero()


@pytest.mark.parametrize("expr", ["x + z", "x +", "x^-1", "x^1.5", "(x + 1", "2 ** x", "x^65"])
def test_parse_errors_report_position(expr):
    with pytest.raises(ParseError) as info:
        P(expr)
    assert info.value.position >= 0


@settings(max_examples=50, deadline=None)
@given(polys(nvars=2))
def test_parse_print_fixed_point(p):
    first = P(to_expression(p, XY))
    assert first.allclose(p, 1e-12)
    assert P(to_expression(first, XY)) == first
