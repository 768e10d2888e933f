import numpy as np
import pytest

from hjbsos import conic
from hjbsos.conic import ProgramBuilder, Status
from hjbsos.hjb import Box, check_noise_assumption
from hjbsos.polynomial import Polynomial, monomial_basis, parse
from hjbsos.soscert import (
    CertificateDegreeError,
    CertificateTemplate,
    Direction,
    LinearPolynomial,
    SemialgebraicSet,
    assemble_region_subproblem,
    box_set,
    certify_nonneg,
    check_sos,
    compile_nonneg_on_set,
    gram_parameterize,
    solve_region,
    unit_box_set,
)

from conftest import scalar_problem, trivial_problem

XY = ["x", "y"]


def gram_poly(basis, Q, nvars):
    terms = {}
    for i, a in enumerate(basis):
        for j, b in enumerate(basis):
            m = tuple(p + q for p, q in zip(a, b))
            terms[m] = terms.get(m, 0.0) + Q[i, j]
    return Polynomial(nvars, terms)


def apply_gram_map(M, Q):
    return M @ conic.svec(Q)


# -- Gram parameterization -----------------------------------------------------------

def test_gram_map_examples():
    basis, M = gram_parameterize(2, 1)
    assert basis == [(0,), (1,)]
    out = monomial_basis(1, 2)
    square = dict(zip(out, apply_gram_map(M, np.ones((2, 2)))))
    assert square == pytest.approx({(0,): 1.0, (1,): 2.0, (2,): 1.0})
    ident = dict(zip(out, apply_gram_map(M, np.eye(2))))
    assert ident == pytest.approx({(0,): 1.0, (1,): 0.0, (2,): 1.0})


def test_gram_map_dimensions():
    basis, M = gram_parameterize(4, 2)
    assert len(basis) == 6
    assert M.shape == (15, 21)
    assert np.linalg.matrix_rank(M.toarray()) == 15


def test_gram_map_rejects_odd_degree():
    with pytest.raises(ValueError):
        gram_parameterize(3, 1)


def test_gram_map_matches_expansion():
    rng = np.random.default_rng(3)
    basis, M = gram_parameterize(4, 2)
    A = rng.normal(size=(6, 6))
    Q = A + A.T
    direct = gram_poly(basis, Q, 2)
    mapped = Polynomial.from_coefficients(monomial_basis(2, 4), apply_gram_map(M, Q))
    assert (direct - mapped).max_abs_coefficient() <= 1e-12


# -- SOS checks -------------------------------------------------------------------------

def test_perfect_square_is_sos():
    res = check_sos(parse("x^2 - 2*x + 1", ["x"]))
    assert res.is_sos
    assert gram_poly(res.basis, res.gram, 1).allclose(parse("(x - 1)^2", ["x"]), 1e-7)
    assert np.linalg.eigvalsh(res.gram)[0] >= -1e-7


def test_negative_square_is_not_sos():
    res = check_sos(parse("-x^2", ["x"]))
    assert not res.is_sos
    assert res.solution.status == Status.INFEASIBLE
    assert res.certificate is not None


def test_motzkin_is_not_sos():
    motzkin = parse("x^4*y^2 + x^2*y^4 - 3*x^2*y^2 + 1", XY)
    # nonnegative everywhere (AM-GM on x^4 y^2, x^2 y^4, 1), spot check on a grid
    g = np.linspace(-2, 2, 41)
    assert min(motzkin.evaluate([a, b]) for a in g for b in g) >= -1e-12
    res = check_sos(motzkin)
    assert not res.is_sos
    assert res.solution.status == Status.INFEASIBLE


def test_sos_rejects_odd_degree():
    with pytest.raises(ValueError):
        check_sos(parse("x^3", ["x"]))


@pytest.mark.parametrize("seed", range(5))
def test_gram_round_trip(seed):
    rng = np.random.default_rng(seed)
    nvars = 1 + seed % 2
    basis = monomial_basis(nvars, 2)
    A = rng.normal(size=(len(basis), len(basis)))
    Q = A @ A.T + 0.1 * np.eye(len(basis))
    p = gram_poly(basis, Q, nvars)
    res = check_sos(p)
    assert res.is_sos
    assert res.residual <= 1e-7
    assert gram_poly(res.basis, res.gram, nvars).allclose(p, 1e-7)


# -- Putinar blocks ------------------------------------------------------------------------

def test_constant_is_certified_on_interval():
    sol = certify_nonneg(parse("1", ["x"]), unit_box_set(1))
    assert sol.status == Status.OPTIMAL


def test_generator_of_set_is_certified():
    g = parse("1 - x^2", ["x"])
    sol = certify_nonneg(g, SemialgebraicSet(1, [g]))
    assert sol.status == Status.OPTIMAL


@pytest.mark.parametrize("degree", [2, 4, 6])
def test_sign_changing_is_not_certified(degree):
    sol = certify_nonneg(parse("x", ["x"]), unit_box_set(1), CertificateTemplate(degree, (degree - 2,) * 2))
    assert sol.status == Status.INFEASIBLE


def test_degree_too_small_reports_minimum():
    builder = ProgramBuilder()
    with pytest.raises(CertificateDegreeError) as info:
        compile_nonneg_on_set(builder, LinearPolynomial.constant(parse("x^4 + 1", ["x"])), unit_box_set(1),
                              CertificateTemplate(2, (0, 0)))
    assert info.value.minimal == 4


def test_default_template_degrees():
    S = unit_box_set(2)
    cert = CertificateTemplate.default(4, S)
    # products s_i g_i with linear g_i only reach degree 4 once s_0 has degree 6
    assert cert.degree == 6
    assert cert.sos_multiplier_degrees == (4,) * 4
    assert CertificateTemplate.default(3, S).degree == 4


def test_box_set_encoding():
    S = box_set(Box((0.0, -2.0), (1.0, 3.0)))
    assert len(S.inequalities) == 4
    assert S.contains([0.5, 0.0])
    assert not S.contains([1.5, 0.0])


def sample_box(rng, n, count=200):
    return rng.uniform(-1.0, 1.0, size=(count, n))


@pytest.mark.parametrize("seed", range(12))
def test_block_sampling_soundness(seed):
    """Whenever a block is feasible the certified polynomial is nonnegative on samples."""
    rng = np.random.default_rng(100 + seed)
    n = 1 + seed % 2
    basis = monomial_basis(n, 4)
    p = Polynomial.from_coefficients(basis, rng.normal(size=len(basis)))
    shift = rng.uniform(0.0, 3.0)
    p = p + Polynomial.constant(n, shift)
    S = unit_box_set(n)
    sol = certify_nonneg(p, S)
    if sol.status == Status.OPTIMAL:
        vals = p.evaluate_many(sample_box(rng, n))
        assert np.min(vals) >= -1e-6
    else:
        assert sol.status == Status.INFEASIBLE


@pytest.mark.parametrize("seed", range(4))
def test_template_block_soundness(seed):
    """Smallest c with a x^2 + b x + c >= 0 on [-1, 1], against the closed form."""
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=2)
    builder = ProgramBuilder()
    col = builder.add_free(1)
    t = LinearPolynomial.column(col, Polynomial.constant(1, 1.0)) + Polynomial(1, {(2,): a, (1,): b})
    compile_nonneg_on_set(builder, t, unit_box_set(1), label="t")
    builder.set_objective(col, 1.0)
    sol = conic.solve(builder.build())
    assert sol.status == Status.OPTIMAL
    xs = np.linspace(-1, 1, 200)
    candidates = [-1.0, 1.0] + ([-b / (2 * a)] if a > 0 and abs(b / (2 * a)) <= 1 else [])
    exact = max(-(a * x * x + b * x) for x in candidates)
    c = sol.primal[col]
    assert min(a * x * x + b * x + c for x in xs) >= -1e-6
    assert c == pytest.approx(exact, abs=1e-6)


# -- region subproblems --------------------------------------------------------------------

@pytest.mark.parametrize("direction", ["upper", "lower"])
@pytest.mark.parametrize("n", [1, 2])
def test_trivial_region_is_exact(direction, n):
    prob = trivial_problem(n)
    sigma = check_noise_assumption(prob)
    sub = assemble_region_subproblem(prob, prob.domain, sigma, 4, direction=direction)
    sol = solve_region(sub)
    assert sol.status == Status.OPTIMAL
    assert abs(sub.gamma(sol.primal)) <= 1e-6
    assert sub.psi(sol.primal).allclose(Polynomial.constant(n, 1.0), 1e-5)


def test_scalar_left_region_solves_standalone():
    prob = scalar_problem()
    sigma = check_noise_assumption(prob)
    sub = assemble_region_subproblem(prob, Box((-1.0,), (0.0,)), sigma, 6)
    sol = solve_region(sub)
    assert sol.status == Status.OPTIMAL
    assert np.isfinite(sub.gamma(sol.primal))
    assert sub.gamma(sol.primal) >= -1e-8


def test_region_bookkeeping(cartesian):
    sigma = check_noise_assumption(cartesian)
    sub = assemble_region_subproblem(cartesian, Box((0.0, 0.0), (1.0, 1.0)), sigma, 4, direction=Direction.LOWER)
    basis = monomial_basis(2, 4)
    assert sorted(sub.psi_coeff_index) == sorted(basis)
    cols = list(sub.psi_coeff_index.values())
    assert len(set(cols)) == len(cols)
    assert sub.gamma_index not in cols
    assert list(sub.coupling_columns) == [sub.psi_coeff_index[m] for m in basis] + [sub.gamma_index]
    assert sub.program.c[sub.gamma_index] == 1.0
    assert np.count_nonzero(sub.program.c) == 1
    # only the two faces on the domain boundary carry boundary data
    assert len(sub.boundary_fits) == 2


def test_region_sampling_soundness(scalar):
    """The solved region certificate holds pointwise on samples."""
    sigma = check_noise_assumption(scalar)
    box = Box((-1.0,), (0.0,))
    for direction in (Direction.UPPER, Direction.LOWER):
        sub = assemble_region_subproblem(scalar, box, sigma, 6, direction=direction)
        sol = solve_region(sub)
        assert sol.status == Status.OPTIMAL
        psi = sub.psi(sol.primal)
        gamma = sub.gamma(sol.primal)
        from hjbsos.hjb import hjb_residual
        res = hjb_residual(psi, scalar, sigma)
        sign = 1.0 if direction is Direction.UPPER else -1.0
        xs = np.linspace(-1, 0, 200)
        vals = sign * np.array([res.evaluate([x]) for x in xs])
        assert vals.min() >= -1e-6
        assert vals.max() <= gamma + 1e-6
        # boundary x = -1 with zero cost: exp(0) = 1
        assert sign * (psi.evaluate([-1.0]) - 1.0) >= -1e-6
        assert min(psi.evaluate([x]) for x in xs) > 0


def test_region_outside_domain_rejected(scalar):
    sigma = check_noise_assumption(scalar)
    with pytest.raises(ValueError):
        assemble_region_subproblem(scalar, Box((0.0,), (2.0,)), sigma, 4)
    with pytest.raises(ValueError):
        assemble_region_subproblem(scalar, Box((-1.0,), (0.0,)), sigma, 5)
