import numpy as np
import pytest
import scipy.sparse as sp

from hjbsos.conic import (
    Cone,
    ConicProgram,
    ProgramBuilder,
    Status,
    psd_project,
    smat,
    solve,
    solve_quadratic_penalty,
    solve_splitting,
    svec,
)


# -- independent KKT oracle ------------------------------------------------------------

def block_views(cones, v):
    off = 0
    for k in cones:
        yield k, v[off:off + k.dim]
        off += k.dim


def cone_distance(k, v):
    """How far v lies outside the (self-dual) cone k; free blocks are unconstrained."""
    if k.kind == "free":
        return 0.0
    if k.kind == "nonneg":
        return float(max(0.0, -v.min()))
    if k.kind == "soc":
        return float(max(0.0, np.linalg.norm(v[1:]) - v[0]))
    return float(max(0.0, -np.linalg.eigvalsh(smat(v, k.size))[0]))


def kkt_residuals(prog, x, y, s):
    A = prog.A.toarray()
    scale_b = 1.0 + np.linalg.norm(prog.b)
    scale_c = 1.0 + np.linalg.norm(prog.c)
    primal = np.linalg.norm(A @ x - prog.b) / scale_b
    dual = np.linalg.norm(prog.c - A.T @ y - s) / scale_c
    free_dual = max((np.abs(v).max() for k, v in block_views(prog.cones, s) if k.kind == "free"), default=0.0)
    xcone = max(cone_distance(k, v) for k, v in block_views(prog.cones, x))
    scone = max(cone_distance(k, v) for k, v in block_views(prog.cones, s))
    comp = abs(x @ s) / (1.0 + abs(prog.c @ x))
    return {"primal": primal, "dual": dual, "free_dual": free_dual / scale_c, "x_cone": xcone,
            "s_cone": scone, "complementarity": comp}


def interior_point(k, rng):
    if k.kind == "free":
        return rng.normal(size=k.dim)
    if k.kind == "nonneg":
        return rng.uniform(0.5, 2.0, size=k.dim)
    if k.kind == "soc":
        u = rng.normal(size=k.dim - 1)
        return np.concatenate([[np.linalg.norm(u) + rng.uniform(0.5, 2.0)], u])
    B = rng.normal(size=(k.size, k.size))
    return svec(B @ B.T / k.size + 0.5 * np.eye(k.size))


def dual_interior_point(k, rng):
    if k.kind == "free":
        return np.zeros(k.dim)
    return interior_point(k, rng)


def random_program(seed):
    """Strictly primal and dual feasible instance: b = A x0, c = A^T y0 + s0."""
    rng = np.random.default_rng(seed)
    cones = []
    if rng.random() < 0.5:
        cones.append(Cone("free", int(rng.integers(1, 4))))
    cones.append(Cone("psd", int(rng.integers(2, 9))))
    if rng.random() < 0.7:
        cones.append(Cone("soc", int(rng.integers(2, 6))))
    if rng.random() < 0.5:
        cones.append(Cone("nonneg", int(rng.integers(1, 5))))
    if rng.random() < 0.3:
        cones.append(Cone("psd", int(rng.integers(2, 5))))
    n = sum(k.dim for k in cones)
    m = int(rng.integers(1, min(40, n) + 1))
    nfree = sum(k.dim for k in cones if k.kind == "free")
    m = max(m, nfree)
    A = rng.normal(size=(m, n))
    x0 = np.concatenate([interior_point(k, rng) for k in cones])
    s0 = np.concatenate([dual_interior_point(k, rng) for k in cones])
    y0 = rng.normal(size=m)
    return ConicProgram(A.T @ y0 + s0, sp.csr_matrix(A), A @ x0, cones)


@pytest.mark.parametrize("seed", range(30))
def test_random_instances_satisfy_kkt(seed):
    prog = random_program(seed)
    sol = solve(prog, tol=1e-8)
    assert sol.status == Status.OPTIMAL
    res = kkt_residuals(prog, sol.primal, sol.dual_eq, sol.dual_cone)
    for name, value in res.items():
        assert value <= 1e-6, (name, value)
    # weak duality
    assert sol.primal_objective >= sol.dual_objective - 1e-8 * (1 + abs(sol.primal_objective))


# -- closed forms -----------------------------------------------------------------------

def test_psd_closed_form():
    # min x  s.t. [[x, 1], [1, x]] PSD
    b = ProgramBuilder()
    x = b.add_free(1)
    Q = b.add_psd(2)
    b.add_row({Q: 1.0, x: -1.0}, 0.0)
    b.add_row({Q + 2: 1.0, x: -1.0}, 0.0)
    b.add_row({Q + 1: 1.0}, np.sqrt(2.0))
    b.set_objective(x, 1.0)
    sol = solve(b.build(), tol=1e-10)
    assert sol.status == Status.OPTIMAL
    assert sol.primal[x] == pytest.approx(1.0, abs=1e-8)


def test_lp_closed_form():
    prog = ConicProgram([1.0, 1.0], sp.csr_matrix([[1.0, 1.0]]), [1.0], [Cone("nonneg", 2)])
    sol = solve(prog, tol=1e-10)
    assert sol.status == Status.OPTIMAL
    assert sol.primal_objective == pytest.approx(1.0, abs=1e-8)
    assert sol.primal.sum() == pytest.approx(1.0, abs=1e-8)


def test_infeasible_and_unbounded_detected():
    infeasible = ConicProgram([1.0], sp.csr_matrix([[1.0]]), [-1.0], [Cone("nonneg", 1)])
    assert solve(infeasible).status == Status.INFEASIBLE
    unbounded = ConicProgram([-1.0, 0.0], sp.csr_matrix([[1.0, -1.0]]), [0.0], [Cone("nonneg", 2)])
    assert solve(unbounded).status == Status.UNBOUNDED


# -- invariants --------------------------------------------------------------------------

def solved_primal(prog):
    sol = solve(prog, tol=1e-9)
    # degenerate instances may stall a hair above 1e-9; their best iterate is still accurate
    assert sol.status == Status.OPTIMAL or sol.info.get("accuracy", 1.0) <= 1e-8, sol.status
    return sol.primal


@pytest.mark.parametrize("seed", range(20))
def test_objective_scaling_keeps_argmin(seed):
    prog = random_program(seed)
    base = solved_primal(prog)
    scaled = solved_primal(ConicProgram(3.7 * prog.c, prog.A, prog.b, prog.cones))
    assert np.allclose(scaled, base, atol=1e-5)
    rhs = solved_primal(ConicProgram(prog.c, prog.A, 2.5 * prog.b, prog.cones))
    assert np.allclose(rhs, 2.5 * base, atol=1e-5 * 2.5)


def test_determinism():
    prog = random_program(7)
    a = solve(prog)
    b = solve(prog)
    assert a.iterations == b.iterations
    assert np.array_equal(a.primal, b.primal)
    assert np.array_equal(a.dual_eq, b.dual_eq)


def test_dump_round_trip(tmp_path):
    prog = random_program(2)
    path = tmp_path / "prog.txt"
    prog.dump(path)
    back = ConicProgram.load(path)
    assert back.cones == prog.cones
    assert np.array_equal(back.c, prog.c)
    assert np.array_equal(back.b, prog.b)
    assert (back.A != prog.A).nnz == 0


def test_svec_inner_product():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(5, 5))
    Y = rng.normal(size=(5, 5))
    X, Y = X + X.T, Y + Y.T
    assert svec(X) @ svec(Y) == pytest.approx(np.trace(X @ Y))
    assert np.allclose(smat(svec(X)), X)


# -- PSD projection -----------------------------------------------------------------------

def test_psd_project_examples():
    assert np.allclose(psd_project(np.eye(3)), np.eye(3))
    assert np.allclose(psd_project(np.diag([1.0, -1.0])), np.diag([1.0, 0.0]))
    with pytest.raises(ValueError):
        psd_project(np.array([[0.0, 1.0], [0.0, 0.0]]))


@pytest.mark.parametrize("seed", range(5))
def test_psd_project_matches_eigen_oracle(seed):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(6, 6))
    M = B + B.T
    w, V = np.linalg.eigh(M)
    oracle = sum(max(wi, 0.0) * np.outer(V[:, i], V[:, i]) for i, wi in enumerate(w))
    P = psd_project(M)
    assert np.max(np.abs(P - oracle)) <= 1e-9
    assert np.max(np.abs(psd_project(P) - P)) <= 1e-12


# -- splitting fallback -------------------------------------------------------------------

def test_splitting_agrees_with_interior_point():
    prog = random_program(4)
    ipm = solve(prog, tol=1e-9)
    split = solve_splitting(prog, tol=1e-7)
    assert split.status in (Status.OPTIMAL, Status.MAX_ITER)
    assert split.primal_objective == pytest.approx(ipm.primal_objective, rel=1e-3, abs=1e-3)


def test_auto_method_choice(monkeypatch):
    from hjbsos import conic
    prog = random_program(3)
    calls = []
    monkeypatch.setattr(conic, "solve_splitting", lambda p, **kw: calls.append("splitting"))
    monkeypatch.setattr(conic, "solve_ipm", lambda p, **kw: calls.append("ipm"))
    conic.solve(prog)
    monkeypatch.setattr(conic, "MEMORY_BUDGET_BYTES", 0)
    conic.solve(prog)
    assert calls == ["ipm", "splitting"]
    with pytest.raises(ValueError):
        conic.solve(prog, method="simplex")


# -- quadratic penalty --------------------------------------------------------------------

def test_penalty_unconstrained_quadratic():
    prog = ConicProgram([0.0], sp.csr_matrix((0, 1)), [], [Cone("free", 1)])
    sol = solve_quadratic_penalty(prog, [[1.0]], [3.0], 1.0)
    assert sol.status == Status.OPTIMAL
    assert sol.primal[0] == pytest.approx(3.0, abs=1e-8)


def test_penalty_with_linear_cost():
    prog = ConicProgram([1.0], sp.csr_matrix((0, 1)), [], [Cone("free", 1)])
    sol = solve_quadratic_penalty(prog, [[1.0]], [0.0], 1.0)
    assert sol.primal[0] == pytest.approx(-1.0, abs=1e-8)


@pytest.mark.parametrize("rho,scale", [(0.5, 1.0), (2.0, 1.0), (1.0, 0.01), (1.0, 50.0)])
def test_penalty_closed_form_with_constraints(rho, scale):
    # min z0 + (rho/2)((z0 - 2)^2 + (z1 + 1)^2)  s.t. z0 + z1 = 1
    prog = ConicProgram([1.0, 0.0], sp.csr_matrix([[1.0, 1.0]]), [1.0], [Cone("free", 2)])
    sol = solve_quadratic_penalty(prog, np.eye(2), [2.0, -1.0], rho, scale=scale)
    # stationarity 1 + rho (z0 - 2) = mu, rho (z1 + 1) = mu with z0 + z1 = 1
    A = np.array([[rho, 0.0, -1.0], [0.0, rho, -1.0], [1.0, 1.0, 0.0]])
    rhs = np.array([2.0 * rho - 1.0, -rho, 1.0])
    exact = np.linalg.solve(A, rhs)[:2]
    assert sol.status == Status.OPTIMAL
    assert np.allclose(sol.primal, exact, atol=1e-8)


def test_penalty_rejects_bad_arguments():
    prog = ConicProgram([0.0], sp.csr_matrix((0, 1)), [], [Cone("free", 1)])
    with pytest.raises(ValueError):
        solve_quadratic_penalty(prog, [[1.0]], [0.0], 0.0)
    with pytest.raises(ValueError):
        solve_quadratic_penalty(prog, [[1.0, 1.0]], [0.0], 1.0)
