"""Dense LP and strictly convex QP solvers.

Both methods are deterministic given identical inputs:

* ``solve_lp`` is a two-phase tableau simplex.  Entering column: most
  negative reduced cost, lowest index on ties; after a run of degenerate
  pivots it switches to Bland's rule until progress resumes.  Leaving row:
  minimum ratio, lowest basic-variable index on ties.
* ``solve_qp`` eliminates equalities on a nullspace basis and runs the
  Goldfarb-Idnani dual active-set method on the reduced problem.  The most
  violated inequality (lowest index on ties) is added each iteration, so the
  primal objective is non-decreasing along the iterates.  If the result
  fails the KKT tolerance (degenerate programs with many coincident active
  rows) a Mehrotra interior-point solve of the same scaled program is tried
  and kept when it converges to a feasible point.

Problems are written as::

    minimize    0.5 x'Hx + f'x
    subject to  A_eq x  = b_eq
                A_in x <= b_in
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg as sla


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITERATIONS = "max-iterations"


@dataclass
class ConvexProgram:
    H: np.ndarray | None
    f: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float).ravel()
        n = self.f.size
        if self.H is None:
            self.H = np.zeros((n, n))
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.A_eq, self.b_eq = _block(self.A_eq, self.b_eq, n)
        self.A_in, self.b_in = _block(self.A_in, self.b_in, n)
        if self.H.shape != (n, n):
            raise ValueError(f"H has shape {self.H.shape}, expected {(n, n)}")
        if not np.allclose(self.H, self.H.T, atol=1e-12 * (1 + np.abs(self.H).max())):
            raise ValueError("H must be symmetric")

    @property
    def n_v(self) -> int:
        return self.f.size

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.f @ x)

    def residuals(self, x: np.ndarray) -> tuple[float, float]:
        """Return (max equality residual, max inequality violation)."""
        eq = np.abs(self.A_eq @ x - self.b_eq).max(initial=0.0)
        ineq = np.maximum(self.A_in @ x - self.b_in, 0.0).max(initial=0.0)
        return float(eq), float(ineq)


def _block(A, b, n):
    if A is None or np.size(A) == 0:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[1] != n or A.shape[0] != b.size:
        raise ValueError(f"constraint block {A.shape} / {b.shape} inconsistent with {n} variables")
    return A, b


@dataclass
class SolveResult:
    status: Status
    x_opt: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    lam_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lam_in: np.ndarray = field(default_factory=lambda: np.zeros(0))
    history: list[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


def basis_mask(basis, n):
    mask = np.zeros(n, dtype=bool)
    mask[[j for j in basis if j < n]] = True
    return mask


def kkt_residual(prog: ConvexProgram, x, lam_eq, lam_in) -> float:
    """Max of stationarity, primal feasibility, dual sign and complementarity errors.

    Stationarity and complementarity are scaled by the problem data and the
    multiplier term so the number is comparable across programs of
    different magnitude.
    """
    grad = prog.H @ x + prog.f + prog.A_eq.T @ lam_eq + prog.A_in.T @ lam_in
    scale = 1.0 + max(np.abs(prog.f).max(initial=0.0), np.abs(prog.H @ x).max(initial=0.0),
                      np.abs(prog.A_in.T @ lam_in).max(initial=0.0))
    stat = np.abs(grad).max(initial=0.0) / scale
    eq, ineq = prog.residuals(x)
    dual = np.maximum(-lam_in, 0.0).max(initial=0.0)
    slack = prog.b_in - prog.A_in @ x
    comp = np.abs(lam_in * slack).max(initial=0.0) / scale
    return float(max(stat, eq, ineq, dual, comp))


class Solver:
    """Owns tolerances and scratch state; one instance per concurrent caller."""

    def __init__(self, tol: float = 1e-8, max_iter: int = 10_000, degenerate_run: int = 50):
        self.tol = tol
        self.max_iter = max_iter
        self.degenerate_run = degenerate_run

    # ------------------------------------------------------------------ LP
    def solve_lp(self, prog: ConvexProgram) -> SolveResult:
        if np.any(prog.H):
            raise ValueError("solve_lp called with nonzero H")
        n = prog.n_v
        # rows of the form -c*x_j <= 0 (c > 0) become sign restrictions
        nonneg = np.zeros(n, dtype=bool)
        keep = np.ones(prog.A_in.shape[0], dtype=bool)
        for r, row in enumerate(prog.A_in):
            nz = np.flatnonzero(row)
            if nz.size == 1 and row[nz[0]] < 0 and prog.b_in[r] == 0.0:
                nonneg[nz[0]] = True
                keep[r] = False
        A_in, b_in = prog.A_in[keep], prog.b_in[keep]
        free = np.flatnonzero(~nonneg)
        m_eq, m_in = prog.A_eq.shape[0], A_in.shape[0]

        # columns: x (n), x_free^- (len(free)), slacks (m_in)
        n_cols = n + free.size + m_in
        A = np.zeros((m_eq + m_in, n_cols))
        A[:m_eq, :n] = prog.A_eq
        A[:m_eq, n:n + free.size] = -prog.A_eq[:, free]
        A[m_eq:, :n] = A_in
        A[m_eq:, n:n + free.size] = -A_in[:, free]
        A[m_eq:, n + free.size:] = np.eye(m_in)
        b = np.concatenate([prog.b_eq, b_in])
        c = np.concatenate([prog.f, -prog.f[free], np.zeros(m_in)])

        status, y, iters, basis, rows = self._simplex(A, b, c)
        if status is not Status.OPTIMAL:
            return SolveResult(status, np.full(n, np.nan), np.nan, np.inf, iters)
        x = y[:n].copy()
        x[free] -= y[n:n + free.size]

        # duals from the final basis (B' pi = c_B); dropped redundant rows get zero
        pi = np.zeros(A.shape[0])
        pi[rows] = np.linalg.solve(A[rows][:, basis].T, c[basis])
        lam_eq = -pi[:m_eq]
        lam_in_kept = -pi[m_eq:]
        lam_in = np.zeros(prog.A_in.shape[0])
        lam_in[keep] = lam_in_kept
        # multipliers of the sign-restriction rows: remaining reduced cost
        g = prog.f + prog.A_eq.T @ lam_eq + A_in.T @ lam_in_kept
        for r in np.flatnonzero(~keep):
            j = np.flatnonzero(prog.A_in[r])[0]
            lam_in[r] = g[j] / -prog.A_in[r, j]
        lam_in = np.maximum(lam_in, 0.0)
        kkt = kkt_residual(prog, x, lam_eq, lam_in)
        return SolveResult(Status.OPTIMAL, x, prog.objective(x), kkt, iters, lam_eq, lam_in)

    def _simplex(self, A, b, c):
        """Revised two-phase simplex on ``min c'y, A y = b, y >= 0``.

        The basis is refactored from the original columns every iteration,
        which keeps the iterates free of accumulated pivot error.
        Returns (status, y, iterations, basis, kept_rows).
        """
        m, n = A.shape
        sign = np.where(b < 0, -1.0, 1.0)
        A = A * sign[:, None]
        b = b * sign
        Aext = np.hstack([A, np.eye(m)])
        basis = list(range(n, n + m))
        c1 = np.concatenate([np.zeros(n), np.ones(m)])
        rows = np.arange(m)
        status, basis, iters = self._revised(Aext, b, c1, basis, n + m, 0)
        if status is Status.MAX_ITERATIONS:
            return status, None, iters, None, None
        lu = sla.lu_factor(Aext[:, basis])
        xB = sla.lu_solve(lu, b)
        if c1[basis] @ xB > 1e-9 * (1.0 + np.abs(b).max(initial=0.0)):
            return Status.INFEASIBLE, None, iters, None, None
        # pivot zero-level artificials out; rows where that is impossible are redundant
        drop = []
        for r in range(m):
            if basis[r] < n:
                continue
            lu = sla.lu_factor(Aext[:, basis])
            er = np.zeros(m)
            er[r] = 1.0
            row_r = sla.lu_solve(lu, er, trans=1) @ A
            cand = np.flatnonzero(np.abs(row_r) > 1e-9 * (1.0 + np.abs(row_r).max()))
            cand = [j for j in cand if j not in basis]
            if cand:
                basis[r] = int(cand[0])
            else:
                drop.append(r)
        if drop:
            keep = [r for r in range(m) if r not in drop]
            basis = [basis[r] for r in keep]
            rows = rows[keep]
        A2, b2 = A[rows], b[rows]
        status, basis, iters = self._revised(A2, b2, c, basis, n, iters)
        if status is not Status.OPTIMAL:
            return status, None, iters, None, None
        y = np.zeros(n)
        y[basis] = np.maximum(np.linalg.solve(A2[:, basis], b2), 0.0)
        return Status.OPTIMAL, y, iters, basis, list(rows)

    def _revised(self, A, b, c, basis, n_enter, iters):
        m = A.shape[0]
        degenerate = 0
        while True:
            if iters >= self.max_iter:
                return Status.MAX_ITERATIONS, basis, iters
            lu = sla.lu_factor(A[:, basis])
            xB = sla.lu_solve(lu, b)
            pi = sla.lu_solve(lu, c[basis], trans=1)
            red = c[:n_enter] - A[:, :n_enter].T @ pi
            red[basis_mask(basis, n_enter)] = 0.0
            scale = 1.0 + np.abs(c[:n_enter]).max(initial=0.0)
            neg = np.flatnonzero(red < -1e-11 * scale)
            if neg.size == 0:
                return Status.OPTIMAL, basis, iters
            if degenerate >= self.degenerate_run:
                col = int(neg[0])                            # Bland
            else:
                col = int(neg[np.argmin(red[neg])])          # Dantzig, first minimum
            d = sla.lu_solve(lu, A[:, col])
            piv_tol = 1e-9 * max(1.0, np.abs(d).max())
            pos = np.flatnonzero(d > piv_tol)
            if pos.size == 0:
                return Status.UNBOUNDED, basis, iters
            ratios = np.maximum(xB[pos], 0.0) / d[pos]
            rmin = ratios.min()
            ties = pos[ratios <= rmin + 1e-12 * (1.0 + rmin)]
            # prefer the largest pivot among ties, then the lowest basic index
            best = max(d[ties])
            ties = [r for r in ties if d[r] >= 0.1 * best]
            row = int(min(ties, key=lambda r: basis[r]))
            degenerate = degenerate + 1 if rmin <= 1e-12 else 0
            basis[row] = col
            iters += 1

    # ------------------------------------------------------------------ QP
    def solve_qp(self, prog: ConvexProgram) -> SolveResult:
        n = prog.n_v
        H, f = prog.H, prog.f
        if prog.A_eq.shape[0]:
            U, s, Vt = np.linalg.svd(prog.A_eq)
            rank = int(np.sum(s > 1e-10 * max(1.0, s[0])))
            x0 = Vt[:rank].T @ ((U[:, :rank].T @ prog.b_eq) / s[:rank])
            if np.abs(prog.A_eq @ x0 - prog.b_eq).max() > 1e-8 * (1 + np.abs(prog.b_eq).max()):
                return SolveResult(Status.INFEASIBLE, x0, np.nan, np.inf, 0)
            Z = Vt[rank:].T
        else:
            x0 = np.zeros(n)
            Z = np.eye(n)
        Hr = Z.T @ H @ Z
        fr = Z.T @ (H @ x0 + f)
        Ar = prog.A_in @ Z
        br = prog.b_in - prog.A_in @ x0
        try:
            Lc = np.linalg.cholesky(Hr) if Hr.size else np.zeros((0, 0))
        except np.linalg.LinAlgError:
            # regularization capped at 1e-10 relative to the Hessian scale
            reg = 1e-10 * max(1.0, np.abs(Hr).max(initial=0.0))
            try:
                Lc = np.linalg.cholesky(Hr + reg * np.eye(Hr.shape[0]))
            except np.linalg.LinAlgError:
                raise ValueError("QP Hessian is not positive definite on the equality nullspace")
        status, z, u, iters, hist = self._reduced_qp(Hr, Lc, fr, Ar, br)
        x = x0 + Z @ z
        lam_in = u
        g = H @ x + f + prog.A_in.T @ lam_in
        if prog.A_eq.shape[0]:
            lam_eq = np.linalg.lstsq(prog.A_eq.T, -g, rcond=None)[0]
        else:
            lam_eq = np.zeros(0)
        if status is Status.INFEASIBLE:
            return SolveResult(status, x, np.nan, np.inf, iters, lam_eq, lam_in, hist)
        kkt = kkt_residual(prog, x, lam_eq, lam_in)
        return SolveResult(status, x, prog.objective(x), kkt, iters, lam_eq, lam_in, hist)

    def _reduced_qp(self, Hr, Lc, f, A, b):
        """Dual active set on the scaled problem, interior point when that stalls.

        Variables are scaled to a unit Hessian diagonal and rows to unit norm.
        Heavily degenerate programs (many more active rows than variables)
        can leave the active-set iterates with drifted multipliers; a
        converged, feasible interior-point result then replaces them.
        """
        n, m = f.size, A.shape[0]
        if n == 0:
            return self._dual_active_set(Lc, f, A, b)
        d = 1.0 / np.sqrt(np.maximum(np.diag(Hr), 1e-300))
        Hs = Hr * d[:, None] * d[None, :]
        As = A * d[None, :]
        rn = np.linalg.norm(As, axis=1)
        rn[rn == 0.0] = 1.0
        As, bs, fs = As / rn[:, None], b / rn, f * d
        try:
            Ls = np.linalg.cholesky(Hs)
        except np.linalg.LinAlgError:
            Ls = Lc * d[:, None]
        status, y, w, iters, hist = self._dual_active_set(Ls, fs, As, bs)
        if status is Status.OPTIMAL and m and _reduced_kkt(Hs, fs, As, bs, y, w) > self.tol:
            st2, y2, w2, it2 = self._interior_point(Hs, fs, As, bs)
            iters += it2
            if st2 is Status.OPTIMAL and np.max(As @ y2 - bs) <= self.tol:
                y, w = y2, w2
                hist.append(float(0.5 * y @ Hs @ y + fs @ y))
        return status, d * y, w / rn, iters, hist

    def _interior_point(self, H, f, A, b, max_iter: int = 200):
        """Mehrotra predictor-corrector on ``min 0.5 z'Hz + f'z, A z <= b``."""
        n, m = f.size, A.shape[0]
        L = np.linalg.cholesky(H)
        # least-squares start, then shift slacks and multipliers into the interior
        R0 = np.linalg.qr(np.vstack([L.T, A]), mode="r")
        z = sla.solve_triangular(R0, sla.solve_triangular(R0, A.T @ b - f, trans="T"))
        s = b - A @ z
        s = s + max(-1.5 * s.min(), 0.0)
        lam = np.ones(m)
        s = s + 0.5 * (s @ lam) / lam.sum()
        lam = lam + 0.5 * (s @ lam) / s.sum()
        nf, nb = 1.0 + np.abs(f).max(), 1.0 + np.abs(b).max()
        for it in range(1, max_iter + 1):
            r_d = H @ z + f + A.T @ lam
            r_p = A @ z + s - b
            mu = s @ lam / m
            # near-degenerate programs carry very large multipliers, so
            # stationarity is measured relative to them
            if (np.abs(r_d).max() <= 1e-10 * (nf + lam.max()) and np.abs(r_p).max() <= 1e-12 * nb
                    and mu <= 1e-12 * nb):
                return Status.OPTIMAL, z, lam, it
            # H + A'WA = R'R from a QR of the stacked square roots
            R = np.linalg.qr(np.vstack([L.T, np.sqrt(lam / s)[:, None] * A]), mode="r")
            if np.abs(np.diag(R)).min() <= 1e-300:
                break

            def direction(r_c):
                rhs = -r_d - A.T @ ((lam * r_p - r_c) / s)
                dz = sla.solve_triangular(R, sla.solve_triangular(R, rhs, trans="T"))
                ds = -r_p - A @ dz
                dl = (-r_c - lam * ds) / s
                return dz, ds, dl

            def max_step(v, dv):
                neg = dv < 0
                return min(1.0, float(np.min(-v[neg] / dv[neg]))) if neg.any() else 1.0

            dz, ds, dl = direction(s * lam)
            a_aff = min(max_step(s, ds), max_step(lam, dl))
            mu_aff = (s + a_aff * ds) @ (lam + a_aff * dl) / m
            sigma = (mu_aff / mu) ** 3
            dz, ds, dl = direction(s * lam + ds * dl - sigma * mu)
            a = min(1.0, 0.995 * min(max_step(s, ds), max_step(lam, dl)))
            z, s, lam = z + a * dz, s + a * ds, lam + a * dl
            s = np.maximum(s, 1e-300)
            lam = np.maximum(lam, 1e-300)
        return Status.MAX_ITERATIONS, z, lam, max_iter

    def _dual_active_set(self, Lc, f, A, b):
        n = f.size
        m = A.shape[0]
        solve_L = lambda v: sla.solve_triangular(Lc, v, lower=True)
        solve_Lt = lambda v: sla.solve_triangular(Lc.T, v, lower=False)
        x = -solve_Lt(solve_L(f)) if n else np.zeros(0)
        objective = lambda x: float(0.5 * np.sum((Lc.T @ x) ** 2) + f @ x)
        hist = [objective(x)]
        active: list[int] = []
        u = np.zeros(0)
        u_all = np.zeros(m)
        row_scale = 1.0 + np.abs(b)
        iters = 0
        while True:
            viol = (A @ x - b) / row_scale if m else np.zeros(0)
            if active:
                viol[active] = -np.inf
            p = int(np.argmax(viol)) if m else -1
            if m == 0 or viol[p] <= self.tol * 1e-1:
                u_all[:] = 0.0
                u_all[active] = u
                return Status.OPTIMAL, x, u_all, iters, hist
            ap = A[p]
            up = 0.0
            while True:
                iters += 1
                if iters > self.max_iter:
                    u_all[:] = 0.0
                    u_all[active] = u
                    return Status.MAX_ITERATIONS, x, u_all, iters, hist
                q = solve_L(ap)
                if active:
                    M = solve_L(A[active].T)
                    Q, R = np.linalg.qr(M)
                    qp = Q.T @ q
                    z = q - Q @ qp
                    # a row dependent on the active set gets no primal step
                    if np.linalg.norm(z) <= 1e-10 * max(1.0, np.linalg.norm(q)):
                        z = np.zeros_like(z)
                    dx = -solve_Lt(z)
                    du = -sla.solve_triangular(R, qp, lower=False)
                else:
                    dx = -solve_Lt(q)
                    du = np.zeros(0)
                slope = ap @ dx
                s_p = ap @ x - b[p]
                step_full = np.inf
                if np.any(dx) and -slope > 1e-14 * (1.0 + np.abs(ap).max() ** 2):
                    step_full = s_p / -slope
                blocking = np.flatnonzero(du < -1e-14)
                step_part, k = np.inf, -1
                if blocking.size:
                    ratios = -u[blocking] / du[blocking]
                    i = int(np.argmin(ratios))
                    step_part, k = float(ratios[i]), int(blocking[i])
                t = min(step_full, step_part)
                if not np.isfinite(t):
                    u_all[:] = 0.0
                    u_all[active] = u
                    return Status.INFEASIBLE, x, u_all, iters, hist
                if np.isfinite(step_full):
                    x = x + t * dx
                u = u + t * du
                up += t
                if t == step_full:
                    active.append(p)
                    u = np.append(u, up)
                    hist.append(objective(x))
                    break
                del active[k]
                u = np.delete(u, k)
                hist.append(objective(x))


def _reduced_kkt(H, f, A, b, z, lam) -> float:
    """KKT error on a scaled inequality-only program."""
    g = H @ z + f + A.T @ lam
    scale = 1.0 + max(np.abs(f).max(initial=0.0), np.abs(H @ z).max(initial=0.0))
    slack = b - A @ z
    return float(max(np.abs(g).max() / scale, np.maximum(-slack, 0.0).max(initial=0.0),
                     np.abs(lam * slack).max(initial=0.0) / scale))


_default = Solver()


def solve_lp(prog: ConvexProgram) -> SolveResult:
    return _default.solve_lp(prog)


def solve_qp(prog: ConvexProgram) -> SolveResult:
    return _default.solve_qp(prog)
