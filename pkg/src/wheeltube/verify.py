"""Randomized checks of the in-repo solver and polytope routines against independent oracles,
plus the synthesis certificates and tube soundness.

The LP oracle is HiGHS through scipy, the QP oracle is cvxopt's interior
point method, and inclusion is decided by brute-force vertex enumeration.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .polytope import Polytope, inclusion_certificate, verify_certificate
from .solver import ConvexProgram, Solver, Status


@dataclass
class SuiteResult:
    name: str
    cases: int = 0
    failures: int = 0
    worst: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.cases > 0 and self.failures == 0

    def line(self) -> str:
        worst = ", ".join(f"{k}={v:.3g}" for k, v in self.worst.items())
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'} ({self.cases} cases, {self.failures} failures; {worst})"


def random_lp(rng, n_max: int = 12):
    """Bounded, feasible LP with a generic cost: box rows plus random cuts through a feasible point."""
    n = int(rng.integers(1, n_max + 1))
    m_in = int(rng.integers(0, 2 * n + 1))
    m_eq = int(rng.integers(0, max(1, n // 2) + 1)) if n > 1 else 0
    x0 = rng.uniform(-1, 1, n)
    A = rng.normal(size=(m_in, n))
    b = A @ x0 + rng.uniform(0.0, 1.0, m_in)
    box = rng.uniform(1.5, 3.0, n)
    A_in = np.vstack([A, np.eye(n), -np.eye(n)])
    b_in = np.concatenate([b, box, box])
    A_eq = rng.normal(size=(m_eq, n)) if m_eq else None
    b_eq = A_eq @ x0 if m_eq else None
    c = rng.normal(size=n)
    return ConvexProgram(None, c, A_eq, b_eq, A_in, b_in)


def random_qp(rng, n_max: int = 12):
    n = int(rng.integers(1, n_max + 1))
    M = rng.normal(size=(n, n))
    H = M @ M.T + rng.uniform(0.05, 1.0) * np.eye(n)
    f = rng.normal(size=n) * 3.0
    m_in = int(rng.integers(0, 2 * n + 2))
    m_eq = int(rng.integers(0, n // 2 + 1))
    x0 = rng.uniform(-1, 1, n)
    A_in = rng.normal(size=(m_in, n)) if m_in else None
    b_in = A_in @ x0 + rng.uniform(0.0, 0.5, m_in) if m_in else None
    A_eq = rng.normal(size=(m_eq, n)) if m_eq else None
    b_eq = A_eq @ x0 if m_eq else None
    return ConvexProgram(H, f, A_eq, b_eq, A_in, b_in)


def lp_oracle(prog: ConvexProgram):
    from scipy.optimize import linprog

    n = prog.n_v
    res = linprog(prog.f, A_ub=prog.A_in if prog.A_in.shape[0] else None, b_ub=prog.b_in if prog.A_in.shape[0] else None,
                  A_eq=prog.A_eq if prog.A_eq.shape[0] else None, b_eq=prog.b_eq if prog.A_eq.shape[0] else None,
                  bounds=[(None, None)] * n, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    return res.status == 0, res.x, res.fun


def qp_oracle(prog: ConvexProgram):
    import cvxopt

    cvxopt.solvers.options.update({"show_progress": False, "abstol": 1e-11, "reltol": 1e-11, "feastol": 1e-10,
                                   "maxiters": 200})
    n = prog.n_v
    m = lambda a: cvxopt.matrix(np.asarray(a, dtype=float))
    G = prog.A_in if prog.A_in.shape[0] else np.zeros((1, n))
    h = prog.b_in if prog.A_in.shape[0] else np.ones(1)
    kw = {}
    if prog.A_eq.shape[0]:
        kw = dict(A=m(prog.A_eq), b=m(prog.b_eq))
    sol = cvxopt.solvers.qp(m(prog.H), m(prog.f), m(G), m(h), **kw)
    x = np.array(sol["x"]).ravel()
    return sol["status"] == "optimal", x, prog.objective(x)


def check_solver(n_lp: int = 1000, n_qp: int = 1000, seed: int = 0, obj_tol: float = 1e-6,
                 arg_tol: float = 1e-5) -> tuple[SuiteResult, SuiteResult]:
    rng = np.random.default_rng(seed)
    solver = Solver()
    out = []
    for kind, count, gen, oracle, solve in (("lp", n_lp, random_lp, lp_oracle, solver.solve_lp),
                                            ("qp", n_qp, random_qp, qp_oracle, solver.solve_qp)):
        r = SuiteResult(f"solver-{kind}", worst={"objective": 0.0, "argument": 0.0})
        skipped = 0
        while r.cases < count:
            prog = gen(rng)
            ok, x_ref, f_ref = oracle(prog)
            if not ok:
                # a replacement case is drawn so that ``count`` cases are compared
                skipped += 1
                if skipped > count:
                    break
                continue
            res = solve(prog)
            r.cases += 1
            if res.status is not Status.OPTIMAL:
                r.failures += 1
                continue
            d_obj = abs(res.objective - f_ref) / max(1.0, abs(f_ref))
            d_arg = float(np.abs(res.x_opt - x_ref).max()) if prog.n_v else 0.0
            r.worst["objective"] = max(r.worst["objective"], d_obj)
            r.worst["argument"] = max(r.worst["argument"], d_arg)
            if d_obj > obj_tol or d_arg > arg_tol:
                r.failures += 1
        if skipped:
            r.notes.append(f"{skipped} draws replaced because the oracle did not converge")
        out.append(r)
    return out[0], out[1]


def brute_vertices(F, b, tol: float = 1e-9) -> np.ndarray:
    """All feasible intersections of ``dim`` rows; the reference for inclusion tests."""
    n = F.shape[1]
    pts = []
    for rows in itertools.combinations(range(F.shape[0]), n):
        Fs = F[list(rows)]
        if abs(np.linalg.det(Fs)) < 1e-12:
            continue
        x = np.linalg.solve(Fs, b[list(rows)])
        if np.all(F @ x <= b + tol):
            pts.append(x)
    return np.array(pts)


def random_pair(rng, dim: int):
    """A bounded polytope and a second one that contains it or misses one of its vertices."""
    while True:
        m1 = int(rng.integers(dim + 2, dim + 7))
        F1 = rng.normal(size=(m1, dim))
        b1 = rng.uniform(0.5, 1.5, m1)
        V = brute_vertices(F1, b1)
        if len(V) > dim and np.abs(V).max() < 50 and Polytope(F1, b1).is_bounded():
            break
    m2 = int(rng.integers(dim + 1, dim + 7))
    F2 = rng.normal(size=(m2, dim))
    F2 /= np.linalg.norm(F2, axis=1, keepdims=True)
    h = (F2 @ V.T).max(axis=1)
    gap = rng.uniform(0.01, 0.3, m2)
    if rng.random() < 0.5:
        gap[int(rng.integers(m2))] *= -1.0
    return Polytope(F1, b1), Polytope(F2, h + gap), V


def check_inclusion(n_pairs: int = 1000, seed: int = 1) -> SuiteResult:
    rng = np.random.default_rng(seed)
    r = SuiteResult("polytope-inclusion", worst={"certificate_residual": 0.0})
    included = 0
    for k in range(n_pairs):
        dim = 2 if k % 2 == 0 else 3
        p1, p2, V = random_pair(rng, dim)
        truth = bool(np.all(p2.F @ V.T <= p2.b[:, None] + 1e-9))
        Om = inclusion_certificate(p1, p2)
        got = Om is not None
        r.cases += 1
        included += truth
        if got != truth or (got and not verify_certificate(Om, p1, p2)):
            r.failures += 1
        if got:
            r.worst["certificate_residual"] = max(r.worst["certificate_residual"],
                                                  float(np.abs(Om @ p1.F - p2.F).max()))
    r.notes.append(f"{included} of {r.cases} pairs were inclusions")
    return r


def tube_soundness(model, mcfg, samples, r_vertices) -> float:
    """Worst one-step tube slack over recorded steps, by direct enumeration."""
    from .governor import SteadyPair
    from .rampc import tube_residuals

    worst = np.inf
    for s in samples:
        pair = SteadyPair(s.x_s, s.u_s, s.x_s[:2], False)
        res = tube_residuals(model, mcfg, s.x, pair, s.b_theta, s.mu, s.alpha, r_vertices)
        worst = min(worst, res["tube"])
    return float(worst)


def check_certificates(model, art, theta_hat0, Q, R, theta_bound) -> SuiteResult:
    from .synthesis import box_vertices, terminal_cost, terminal_decrease_margin, verify_terminal_contractivity

    verts = box_vertices(np.concatenate([theta_bound, theta_bound]))
    tc = terminal_cost(model, theta_hat0, art.K_f, Q, R)
    eps_f = verify_terminal_contractivity(model, art.K_f, art.P_cert, verts)
    r = SuiteResult("certificates", cases=4)
    r.worst = {"epsilon": art.epsilon, "epsilon_f": eps_f, "lyapunov_residual": tc.residual,
               "terminal_decrease": terminal_decrease_margin(model, art.K_f, art.P_cert, verts, Q, R)}
    r.failures = int(art.epsilon >= 1) + int(eps_f >= 1) + int(tc.residual > 1e-8) + \
        int(r.worst["terminal_decrease"] < -1e-9)
    return r
