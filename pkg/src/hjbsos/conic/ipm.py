"""Homogeneous self-dual interior-point method for mixed conic programs.

Solves ``min c^T x + x^T P x / 2  s.t.  A x = b, x in K`` where ``K`` mixes
free, nonnegative, second-order and PSD blocks and the optional PSD matrix
``P`` touches free variables only. The dual is
``max b^T y - x^T P x / 2  s.t.  c + P x - A^T y = s, s in K*``. The embedding

    A x - b tau = 0,   P x + c tau - A^T y - s = 0,
    b^T y - c^T x - x^T P x / tau - kappa = 0

is followed along the central path with Nesterov-Todd scaling and a
Mehrotra predictor-corrector step. Each Newton step reduces to a saddle
system in (free primal variables, equality duals) whose lower-right block
is the Schur complement ``A_K W^T W A_K^T`` of the cone variables.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .program import Cone, ConicProgram, smat, svec

log = logging.getLogger(__name__)

INFEASIBILITY_RATIO = 1e-7
# Fraction of the distance to the cone boundary taken per step.
STEP_FRACTION = 0.95
# Lower bound on (boundary distance of x) * (of s) per cone, relative to mu.
CENTRALITY = 1e-3
# Give up once the best iterate has not improved for this many steps.
STALL_ITERATIONS = 8
# Pure centering steps at the final mu, and the deviation from the central
# path at which they stop.
POLISH_STEPS = 10
POLISH_TARGET = 1e-3
REFINE_STEPS = 3


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITER = "MaxIter"
    NUMERICAL_FAILURE = "NumericalFailure"


class SolverError(RuntimeError):
    """Raised by callers that require an optimal solution."""

    def __init__(self, message: str, solution: "ConeSolution | None" = None):
        super().__init__(message)
        self.solution = solution


@dataclass
class ConeSolution:
    primal: np.ndarray
    dual_eq: np.ndarray
    dual_cone: np.ndarray
    status: Status
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    primal_objective: float = float("nan")
    dual_objective: float = float("nan")
    message: str = ""
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


# -- per-block Nesterov-Todd scalings ------------------------------------------
#
# Each scaling W satisfies W s = W^{-T} x = lam for the current primal block
# x and dual block s. Methods act on block-local vectors.

class _NonnegScaling:
    def __init__(self, x, s):
        self.w = np.sqrt(x / s)
        self.lam = np.sqrt(x * s)

    def H(self, v):  # W^T W
        return self.w ** 2 * v

    def H_rows(self, Ab):  # rows of Ab mapped through H
        return Ab * (self.w ** 2)[None, :]

    def Wt(self, v):
        return self.w * v

    def W(self, v):
        return self.w * v

    def Winv(self, v):
        return v / self.w

    def WinvT(self, v):
        return v / self.w


class _SocScaling:
    def __init__(self, x, s):
        def jnorm(v):
            return np.sqrt(max((v[0] - np.linalg.norm(v[1:])) * (v[0] + np.linalg.norm(v[1:])), 1e-300))

        nx, ns = jnorm(x), jnorm(s)
        xb, sb = x / nx, s / ns
        gamma = np.sqrt(max((1.0 + xb @ sb) / 2.0, 1e-300))
        Js = sb.copy()
        Js[1:] = -Js[1:]
        wb = (xb + Js) / (2.0 * gamma)
        self.beta = np.sqrt(nx / ns)
        d = wb.shape[0]
        Hm = np.empty((d, d))
        Hm[0, 0] = wb[0]
        Hm[0, 1:] = wb[1:]
        Hm[1:, 0] = wb[1:]
        Hm[1:, 1:] = np.eye(d - 1) + np.outer(wb[1:], wb[1:]) / (1.0 + wb[0])
        self.Wm = self.beta * Hm
        Jm = np.ones(d)
        Jm[1:] = -1.0
        self.Winv_m = (Jm[:, None] * Hm * Jm[None, :]) / self.beta
        self.HH = self.Wm @ self.Wm
        self.lam = self.Wm @ s

    def H(self, v):
        return self.HH @ v

    def H_rows(self, Ab):
        return Ab @ self.HH

    def Wt(self, v):
        return self.Wm @ v

    def W(self, v):
        return self.Wm @ v

    def Winv(self, v):
        return self.Winv_m @ v

    def WinvT(self, v):
        return self.Winv_m @ v


class _PsdScaling:
    def __init__(self, x, s, n):
        self.n = n
        X = smat(x, n)
        S = smat(s, n)
        Lx = np.linalg.cholesky(X)
        Ls = np.linalg.cholesky(S)
        U, lam, Vt = np.linalg.svd(Ls.T @ Lx)
        self.R = Lx @ Vt.T / np.sqrt(lam)[None, :]
        self.Rinv = (np.sqrt(lam)[:, None] * Vt) @ la.solve_triangular(Lx, np.eye(n), lower=True)
        self.P = self.R @ self.R.T
        self.lam_diag = lam
        self.lam = svec(np.diag(lam))

    def _conj(self, L, v, Rt):
        return svec(L @ smat(v, self.n) @ Rt)

    def H(self, v):
        return svec(self.P @ smat(v, self.n) @ self.P)

    def H_rows(self, Ab):
        mats = smat(Ab, self.n)
        return svec(self.P @ mats @ self.P)

    def Wt(self, v):
        return self._conj(self.R, v, self.R.T)

    def W(self, v):
        return self._conj(self.R.T, v, self.R)

    def Winv(self, v):
        return self._conj(self.Rinv.T, v, self.Rinv)

    def WinvT(self, v):
        return self._conj(self.Rinv, v, self.Rinv.T)


# -- Jordan algebra helpers -------------------------------------------------

def _jordan(kind, n, a, b):
    if kind == "nonneg":
        return a * b
    if kind == "soc":
        out = np.empty_like(a)
        out[0] = a @ b
        out[1:] = a[0] * b[1:] + b[0] * a[1:]
        return out
    A, B = smat(a, n), smat(b, n)
    return svec((A @ B + B @ A) / 2.0)


def _jordan_solve(kind, n, scaling, r):
    """Solve lam o u = r for u, with lam the block's scaled point."""
    lam = scaling.lam
    if kind == "nonneg":
        return r / lam
    if kind == "soc":
        det = lam[0] ** 2 - lam[1:] @ lam[1:]
        u = np.empty_like(r)
        u[0] = (lam[0] * r[0] - lam[1:] @ r[1:]) / det
        u[1:] = (r[1:] - u[0] * lam[1:]) / lam[0]
        return u
    ld = scaling.lam_diag
    Rm = smat(r, n)
    return svec(2.0 * Rm / (ld[:, None] + ld[None, :]))


def _identity(kind, n):
    if kind == "nonneg":
        return np.ones(n)
    if kind == "soc":
        e = np.zeros(n)
        e[0] = 1.0
        return e
    return svec(np.eye(n))


def _max_step(kind, n, v, dv):
    """Largest alpha with v + alpha dv in the closed cone (inf if unbounded)."""
    if kind == "nonneg":
        neg = dv < 0
        if not np.any(neg):
            return np.inf
        return float(np.min(-v[neg] / dv[neg]))
    if kind == "soc":
        a = dv[0] ** 2 - dv[1:] @ dv[1:]
        bq = 2.0 * (v[0] * dv[0] - v[1:] @ dv[1:])
        cq = v[0] ** 2 - v[1:] @ v[1:]
        roots = []
        if abs(a) > 1e-300:
            disc = bq * bq - 4 * a * cq
            if disc >= 0:
                sq = np.sqrt(disc)
                q = -0.5 * (bq + np.copysign(sq, bq))
                if q != 0:
                    roots.extend([q / a, cq / q])
        elif bq != 0:
            roots.append(-cq / bq)
        alpha = min([r for r in roots if r > 0], default=np.inf)
        if dv[0] < 0:
            alpha = min(alpha, -v[0] / dv[0])
        return alpha
    V = smat(v, n)
    try:
        L = np.linalg.cholesky(V)
    except np.linalg.LinAlgError:
        return 0.0
    Li = la.solve_triangular(L, np.eye(n), lower=True)
    ev = np.linalg.eigvalsh(Li @ smat(dv, n) @ Li.T)[0]
    return np.inf if ev >= 0 else float(-1.0 / ev)


class _Blocks:
    """Cone-part bookkeeping: slices into the cone subvector of x and s."""

    def __init__(self, cones: list[Cone]):
        self.items = []
        off = 0
        for k in cones:
            if k.kind == "free":
                continue
            self.items.append((k.kind, k.size, slice(off, off + k.dim)))
            off += k.dim
        self.dim = off

    def identity(self):
        e = np.zeros(self.dim)
        for kind, n, sl in self.items:
            e[sl] = _identity(kind, n)
        return e

    def scalings(self, x, s):
        out = []
        for kind, n, sl in self.items:
            if kind == "nonneg":
                out.append(_NonnegScaling(x[sl], s[sl]))
            elif kind == "soc":
                out.append(_SocScaling(x[sl], s[sl]))
            else:
                out.append(_PsdScaling(x[sl], s[sl], n))
        return out

    def apply(self, scalings, method, v):
        out = np.empty_like(v)
        for (kind, n, sl), W in zip(self.items, scalings):
            out[sl] = getattr(W, method)(v[sl])
        return out

    def lam(self, scalings):
        out = np.empty(self.dim)
        for (kind, n, sl), W in zip(self.items, scalings):
            out[sl] = W.lam
        return out

    def jordan(self, a, b):
        out = np.empty_like(a)
        for kind, n, sl in self.items:
            out[sl] = _jordan(kind, n, a[sl], b[sl])
        return out

    def jordan_solve(self, scalings, r):
        out = np.empty_like(r)
        for (kind, n, sl), W in zip(self.items, scalings):
            out[sl] = _jordan_solve(kind, n, W, r[sl])
        return out

    def centrality(self, x, s):
        """Smallest per-cone product of boundary distances (PSD blocks skipped)."""
        worst = np.inf
        for kind, n, sl in self.items:
            if kind == "nonneg":
                worst = min(worst, float(np.min(x[sl] * s[sl])))
            elif kind == "soc":
                xs = []
                for v in (x[sl], s[sl]):
                    r = np.linalg.norm(v[1:])
                    xs.append(np.sqrt(max((v[0] - r) * (v[0] + r), 0.0)))
                worst = min(worst, xs[0] * xs[1])
        return worst

    def max_step(self, v, dv):
        alpha = np.inf
        for kind, n, sl in self.items:
            alpha = min(alpha, _max_step(kind, n, v[sl], dv[sl]))
        return alpha


def solve(prog: ConicProgram, tol: float = 1e-8, max_iter: int = 200, verbose: bool = False,
          quadratic=None) -> ConeSolution:
    """Solve ``prog`` to relative accuracy ``tol``; never raises on bad status.

    ``quadratic`` is an optional PSD ``n x n`` matrix ``P`` adding
    ``x^T P x / 2`` to the objective; it may only couple free variables.
    """
    return _Ipm(prog, tol, max_iter, verbose, quadratic).run()


class _Ipm:
    def __init__(self, prog: ConicProgram, tol: float, max_iter: int, verbose: bool, quadratic=None):
        self.prog = prog
        self.tol = tol
        self.max_iter = max_iter
        self.verbose = verbose
        free = prog.free_mask()
        self.free_idx = np.flatnonzero(free)
        self.cone_idx = np.flatnonzero(~free)
        A = prog.A.toarray()
        self.A = A
        self.AF = A[:, self.free_idx]
        self.AC = A[:, self.cone_idx]
        self.c = prog.c
        self.cF = prog.c[self.free_idx]
        self.cC = prog.c[self.cone_idx]
        self.b = prog.b
        self.blocks = _Blocks(prog.cones)
        self.nu = prog.cone_degree
        self.nF = self.free_idx.size
        self.m = prog.m
        self.P = np.zeros((self.nF, self.nF))
        if quadratic is not None:
            P = quadratic.toarray() if hasattr(quadratic, "toarray") else np.asarray(quadratic, dtype=float)
            if P.shape != (prog.n, prog.n):
                raise ValueError(f"quadratic term has shape {P.shape}, expected ({prog.n}, {prog.n})")
            if np.any(P[np.ix_(self.cone_idx, np.arange(prog.n))]) or np.any(P[:, self.cone_idx]):
                raise ValueError("the quadratic term may only involve free variables")
            self.P = (P[np.ix_(self.free_idx, self.free_idx)] + P[np.ix_(self.free_idx, self.free_idx)].T) / 2.0

    # x is stored split as (xF, xC); s only on the cone part.

    def _residuals(self, xF, xC, y, s, tau, kappa):
        rp = self.AF @ xF + self.AC @ xC - self.b * tau
        PxF = self.P @ xF
        rdF = self.cF * tau + PxF - self.AF.T @ y
        rdC = self.cC * tau - self.AC.T @ y - s
        rg = self.b @ y - self.cF @ xF - self.cC @ xC - xF @ PxF / tau - kappa
        return rp, rdF, rdC, rg

    def _factor(self, scalings):
        m, nF = self.m, self.nF
        M = np.zeros((m, m))
        for (kind, n, sl), W in zip(self.blocks.items, scalings):
            Ab = self.AC[:, sl]
            rows = np.flatnonzero(np.any(Ab != 0.0, axis=1))
            if rows.size == 0:
                continue
            Ar = Ab[rows]
            M[np.ix_(rows, rows)] += Ar @ W.H_rows(Ar).T
        K = np.zeros((nF + m, nF + m))
        K[:nF, :nF] = -self.P
        K[:nF, nF:] = self.AF.T
        K[nF:, :nF] = self.AF
        K[nF:, nF:] = M
        self.K = K
        scale = max(1.0, float(np.max(np.abs(np.diag(M)), initial=0.0)))
        reg = np.zeros(nF + m)
        reg[:nF] = -1e-13 * scale
        reg[nF:] = 1e-13 * scale
        Kreg = K + np.diag(reg)
        with np.errstate(all="raise"):
            self.lu = la.lu_factor(Kreg, check_finite=True)

    def _ksolve(self, rhs):
        sol = la.lu_solve(self.lu, rhs)
        for _ in range(3):
            res = rhs - self.K @ sol
            if np.linalg.norm(res) <= 1e-15 * (1.0 + np.linalg.norm(rhs)):
                break
            sol = sol + la.lu_solve(self.lu, res)
        return sol

    def _newton(self, state, scalings, rhs, tau_sol):
        """Solve the linearized system for right-hand side ``(p, dF, dC, g, c, k)``:

            AF dxF + AC dxC - b dtau = p
            P dxF + cF dtau - AF^T dy = dF
            cC dtau - AC^T dy - ds = dC
            b^T dy - gF^T dxF - cC^T dxC + (x^T P x / tau^2) dtau - dkappa = g
            lam o (W^-T dxC + W ds) = c
            kappa dtau + tau dkappa = k
        """
        xF, tau, kappa = state[0], state[4], state[5]
        p, dF, dC, g, c, k = rhs
        B = self.blocks
        nF = self.nF
        xi = B.jordan_solve(scalings, c)
        Wt_xi = B.apply(scalings, "Wt", xi)
        H_dC = B.apply(scalings, "H", dC)
        u0 = self._ksolve(np.concatenate([-dF, p - self.AC @ (H_dC + Wt_xi)]))
        u1, dxC1 = tau_sol
        dxC0 = B.apply(scalings, "H", self.AC.T @ u0[nF:]) + H_dC + Wt_xi
        # the x^T P x / tau term of the gap equation, linearized
        PxF = self.P @ xF
        gF = self.cF + 2.0 * PxF / tau
        num = g - self.b @ u0[nF:] + gF @ u0[:nF] + self.cC @ dxC0 + k / tau
        den = (self.b @ u1[nF:] - gF @ u1[:nF] - self.cC @ dxC1 + kappa / tau + xF @ PxF / tau ** 2)
        dtau = num / den
        dxF = u0[:nF] + dtau * u1[:nF]
        dy = u0[nF:] + dtau * u1[nF:]
        dxC = dxC0 + dtau * dxC1
        dkappa = (k - kappa * dtau) / tau
        # the linear dual equation is better conditioned than the scaled
        # complementarity relation once W is badly scaled
        ds = self.cC * dtau - self.AC.T @ dy - dC
        return dxF, dxC, dy, ds, dtau, dkappa

    def _newton_residual(self, state, scalings, rhs, d):
        xF, tau, kappa = state[0], state[4], state[5]
        p, dF, dC, g, c, k = rhs
        dxF, dxC, dy, ds, dtau, dkappa = d
        B = self.blocks
        PxF = self.P @ xF
        gF = self.cF + 2.0 * PxF / tau
        comp = B.jordan(B.lam(scalings), B.apply(scalings, "WinvT", dxC) + B.apply(scalings, "W", ds))
        return (p - (self.AF @ dxF + self.AC @ dxC - self.b * dtau),
                dF - (self.P @ dxF + self.cF * dtau - self.AF.T @ dy),
                dC - (self.cC * dtau - self.AC.T @ dy - ds),
                g - (self.b @ dy - gF @ dxF - self.cC @ dxC + xF @ PxF / tau ** 2 * dtau - dkappa),
                c - comp,
                k - (kappa * dtau + tau * dkappa))

    def _direction(self, state, scalings, eta, r_c, r_k, tau_sol):
        rp, rdF, rdC, rg = state[6:]
        rhs = (-eta * rp, -eta * rdF, -eta * rdC, -eta * rg, r_c, r_k)
        d = self._newton(state, scalings, rhs, tau_sol)
        # refine against the full system: the reduced solve alone loses the
        # primal residual once the scaling is badly conditioned
        size = lambda r: max(float(np.max(np.abs(v), initial=0.0)) for v in map(np.atleast_1d, r))
        err = size(self._newton_residual(state, scalings, rhs, d))
        for _ in range(REFINE_STEPS):
            if err <= 1e-14 * (1.0 + size(rhs)):
                break
            res = self._newton_residual(state, scalings, rhs, d)
            trial = tuple(a + b for a, b in zip(d, self._newton(state, scalings, res, tau_sol)))
            terr = size(self._newton_residual(state, scalings, rhs, trial))
            if terr >= err:
                break
            d, err = trial, terr
        return d

    def _accuracy(self, xF, xC, y, s, tau):
        """Relative primal/dual residuals, relative gap and both objectives."""
        rp, rdF, rdC, _ = self._residuals(xF, xC, y, s, tau, 0.0)
        # residuals relative to the larger of the data and iterate norms
        pnorm = max(1.0 + np.linalg.norm(self.b), 1.0 + np.linalg.norm(self.AF @ xF + self.AC @ xC) / tau)
        dnorm = max(1.0 + np.linalg.norm(self.c),
                    1.0 + np.sqrt(np.sum((self.AF.T @ y) ** 2) + np.sum((self.AC.T @ y) ** 2)) / tau,
                    1.0 + np.linalg.norm(s) / tau, 1.0 + np.linalg.norm(self.P @ xF) / tau)
        pres = np.linalg.norm(rp) / tau / pnorm
        dres = np.sqrt(rdF @ rdF + rdC @ rdC) / tau / dnorm
        quad = xF @ self.P @ xF / tau ** 2 / 2.0
        pobj = (self.cF @ xF + self.cC @ xC) / tau + quad
        dobj = self.b @ y / tau - quad
        gap = (xC @ s) / tau ** 2 / (1.0 + abs(pobj))
        return pres, dres, gap, pobj, dobj

    def _deviation(self, scalings, mu, tau, kappa):
        """Largest |eig(lam o lam) / mu - 1| over all blocks: distance from the central path."""
        worst = abs(tau * kappa / mu - 1.0)
        for (kind, n, sl), W in zip(self.blocks.items, scalings):
            if kind == "nonneg":
                ev = W.lam ** 2
            elif kind == "soc":
                r = np.linalg.norm(W.lam[1:])
                ev = np.array([(W.lam[0] - r) ** 2, (W.lam[0] + r) ** 2])
            else:
                ev = W.lam_diag ** 2
            worst = max(worst, float(np.max(np.abs(ev / mu - 1.0))))
        return worst

    def _polish(self, point):
        """Centering Newton steps at fixed mu.

        Near the solution an iterate that is only roughly centred can sit
        O(sqrt(mu)) away from the optimum (cone blocks pair a nearly
        singular part with an O(sqrt(mu)) off-diagonal part), while the
        central path itself is O(mu) away. A few centering steps recover the
        missing digits without changing the linear residuals.
        """
        B = self.blocks
        e = B.identity()
        nF = self.nF
        for _ in range(POLISH_STEPS):
            xF, xC, y, s, tau, kappa = point
            mu = (xC @ s + tau * kappa) / (self.nu + 1)
            try:
                scalings = B.scalings(xC, s)
                dev = self._deviation(scalings, mu, tau, kappa)
                if dev <= POLISH_TARGET:
                    break
                self._factor(scalings)
                H_cC = B.apply(scalings, "H", self.cC)
                u1 = self._ksolve(np.concatenate([self.cF, self.b + self.AC @ H_cC]))
                dxC1 = B.apply(scalings, "H", self.AC.T @ u1[nF:]) - H_cC
                lam = B.lam(scalings)
                state = (xF, xC, y, s, tau, kappa) + self._residuals(xF, xC, y, s, tau, kappa)
                r_c = -B.jordan(lam, lam) + mu * e
                r_k = -tau * kappa + mu
                d = self._direction(state, scalings, 0.0, r_c, r_k, (u1, dxC1))
            except (np.linalg.LinAlgError, FloatingPointError, ValueError):
                break
            dxF, dxC, dy, ds, dtau, dkappa = d
            alpha = min(1.0, 0.99 * self._step_length(xC, s, tau, kappa, dxC, ds, dtau, dkappa))
            trial = None
            for _ in range(6):
                cand = (xF + alpha * dxF, xC + alpha * dxC, y + alpha * dy, s + alpha * ds,
                        tau + alpha * dtau, kappa + alpha * dkappa)
                try:
                    mu_c = (cand[1] @ cand[3] + cand[4] * cand[5]) / (self.nu + 1)
                    if (cand[4] > 0 and cand[5] > 0 and all(np.all(np.isfinite(v)) for v in cand)
                            and self._deviation(B.scalings(cand[1], cand[3]), mu_c, cand[4], cand[5]) < dev):
                        trial = cand
                        break
                except (np.linalg.LinAlgError, FloatingPointError, ValueError):
                    pass
                alpha /= 2.0
            if trial is None:
                break
            point = trial
        return point

    def _step_length(self, xC, s, tau, kappa, dxC, ds, dtau, dkappa):
        alpha = min(self.blocks.max_step(xC, dxC), self.blocks.max_step(s, ds))
        if dtau < 0:
            alpha = min(alpha, -tau / dtau)
        if dkappa < 0:
            alpha = min(alpha, -kappa / dkappa)
        return alpha

    def run(self) -> ConeSolution:
        B = self.blocks
        nF, m = self.nF, self.m
        xF = np.zeros(nF)
        xC = B.identity()
        s = B.identity()
        y = np.zeros(m)
        tau = kappa = 1.0
        e = B.identity()
        status = Status.MAX_ITER
        message = ""
        it = 0
        pres = dres = gap = np.inf
        best = None
        since_best = 0
        for it in range(self.max_iter + 1):
            rp, rdF, rdC, rg = self._residuals(xF, xC, y, s, tau, kappa)
            mu = (xC @ s + tau * kappa) / (self.nu + 1)
            pres, dres, gap, pobj, dobj = self._accuracy(xF, xC, y, s, tau)
            if self.verbose:
                log.info("it %3d pobj %+.8e dobj %+.8e pres %.2e dres %.2e gap %.2e tau/kappa %.2e",
                         it, pobj, dobj, pres, dres, gap, tau / kappa)
            if pres <= self.tol and dres <= self.tol and gap <= self.tol:
                status = Status.OPTIMAL
                break
            score = max(pres, dres, gap)
            if best is None or score < best[0]:
                best = (score, it, xF, xC, y, s, tau, kappa, pres, dres, gap)
                since_best = 0
            else:
                since_best += 1
                if since_best >= STALL_ITERATIONS and best[0] < 1e-3:
                    status = Status.NUMERICAL_FAILURE
                    message = f"no progress for {STALL_ITERATIONS} iterations"
                    break
            # infeasibility certificates
            by = self.b @ y
            cx = self.cF @ xF + self.cC @ xC
            small_tau = tau / kappa < INFEASIBILITY_RATIO
            if by > 0:
                pinf = np.sqrt(np.sum((self.AF.T @ y) ** 2) + np.sum((self.AC.T @ y + s) ** 2)) / by
                if pinf <= self.tol or (small_tau and pinf <= 1e-4):
                    status = Status.INFEASIBLE
                    message = f"dual ray residual {pinf:.2e}"
                    break
            if cx < 0:
                dinf = np.sqrt(np.sum((self.AF @ xF + self.AC @ xC) ** 2) + np.sum((self.P @ xF) ** 2)) / (-cx)
                if dinf <= self.tol or (small_tau and dinf <= 1e-4):
                    status = Status.UNBOUNDED
                    message = f"primal ray residual {dinf:.2e}"
                    break
            if it == self.max_iter:
                break
            try:
                scalings = B.scalings(xC, s)
                self._factor(scalings)
                # tau-coefficient system (shared by predictor and corrector)
                H_cC = B.apply(scalings, "H", self.cC)
                u1 = self._ksolve(np.concatenate([self.cF, self.b + self.AC @ H_cC]))
                dxC1 = B.apply(scalings, "H", self.AC.T @ u1[nF:]) - H_cC
                lam = B.lam(scalings)
                state = (xF, xC, y, s, tau, kappa, rp, rdF, rdC, rg)
                # predictor
                lamlam = B.jordan(lam, lam)
                d_aff = self._direction(state, scalings, 1.0, -lamlam, -tau * kappa, (u1, dxC1))
                a_aff = min(1.0, self._step_length(xC, s, tau, kappa, d_aff[1], d_aff[3], d_aff[4], d_aff[5]))
                sigma = (1.0 - a_aff) ** 3
                # corrector
                dx_s = B.apply(scalings, "WinvT", d_aff[1])
                ds_s = B.apply(scalings, "W", d_aff[3])
                r_c = -lamlam - B.jordan(dx_s, ds_s) + sigma * mu * e
                r_k = -tau * kappa - d_aff[4] * d_aff[5] + sigma * mu
                dxF, dxC, dy, ds, dtau, dkappa = self._direction(state, scalings, 1.0 - sigma, r_c, r_k, (u1, dxC1))
            except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
                status = Status.NUMERICAL_FAILURE
                message = f"factorization breakdown at iteration {it}: {exc}"
                break
            alpha = self._step_length(xC, s, tau, kappa, dxC, ds, dtau, dkappa)
            alpha = min(1.0, STEP_FRACTION * alpha)
            alpha0 = alpha
            # back off steps that would strand a cone block at its boundary
            for _ in range(40):
                xn, sn = xC + alpha * dxC, s + alpha * ds
                mun = (xn @ sn + (tau + alpha * dtau) * (kappa + alpha * dkappa)) / (self.nu + 1)
                if B.centrality(xn, sn) >= CENTRALITY * mun:
                    break
                alpha *= 0.8
            if self.verbose:
                log.info("    sigma %.2e step %.2e after backoff %.2e", sigma, alpha0, alpha)
            if not np.isfinite(alpha) or alpha < 1e-12:
                status = Status.NUMERICAL_FAILURE
                message = f"step length {alpha:.1e} at iteration {it}"
                break
            xF = xF + alpha * dxF
            xC = xC + alpha * dxC
            y = y + alpha * dy
            s = s + alpha * ds
            tau = tau + alpha * dtau
            kappa = kappa + alpha * dkappa
            # stay inside the cones despite roundoff
            if not (np.all(np.isfinite(xC)) and np.all(np.isfinite(s))):
                status = Status.NUMERICAL_FAILURE
                message = f"non-finite iterate at iteration {it}"
                break

        if status is Status.OPTIMAL:
            polished = self._polish((xF, xC, y, s, tau, kappa))
            acc = self._accuracy(*polished[:5])
            if max(acc[:3]) <= self.tol:
                xF, xC, y, s, tau, kappa = polished
                pres, dres, gap = acc[:3]
        if status in (Status.MAX_ITER, Status.NUMERICAL_FAILURE) and best is not None:
            # hand back the most accurate iterate seen
            _, best_it, xF, xC, y, s, tau, kappa, pres, dres, gap = best
            message = f"{message}; best iterate {best_it} has accuracy {best[0]:.2e}".lstrip("; ")
        n = self.prog.n
        scale = tau if status in (Status.OPTIMAL, Status.MAX_ITER, Status.NUMERICAL_FAILURE) else 1.0
        x = np.zeros(n)
        x[self.free_idx] = xF / scale
        x[self.cone_idx] = xC / scale
        z = np.zeros(n)
        z[self.cone_idx] = s / scale
        yy = y / scale
        if status is Status.INFEASIBLE:
            yy = y / (self.b @ y)
            z[self.cone_idx] = s / (self.b @ y)
        if status is Status.UNBOUNDED:
            cx = -(self.cF @ xF + self.cC @ xC)
            x[self.free_idx] = xF / cx
            x[self.cone_idx] = xC / cx
        return ConeSolution(
            primal=x,
            dual_eq=yy,
            dual_cone=z,
            status=status,
            gap=float(gap),
            primal_residual=float(pres),
            dual_residual=float(dres),
            iterations=it,
            primal_objective=float(self.c @ x + x[self.free_idx] @ self.P @ x[self.free_idx] / 2.0)
            if status is not Status.UNBOUNDED else float("nan"),
            dual_objective=float(self.b @ yy - x[self.free_idx] @ self.P @ x[self.free_idx] / 2.0)
            if status is not Status.INFEASIBLE else float("nan"),
            message=message,
            info={"accuracy": float(max(pres, dres, gap))},
        )
