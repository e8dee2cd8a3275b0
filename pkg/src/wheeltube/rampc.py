"""Robust adaptive tube MPC: QP assembly and the per-step control law.

The tube lives on the full state: for every template vertex ``S_j alpha_i``
and every vertex of Theta(k) the propagated set must land inside
``{F_e e <= alpha_{i+1}}`` after the lumped disturbance offset.  Because the
parameter set is a box, the inclusion multipliers have a closed form and can
be eliminated; :func:`assemble_reduced` builds that smaller QP in
``(mu, alpha)`` and :func:`assemble` builds the full program including the
multipliers ``Omega``.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .estimator import ParamState
from .governor import Constraints, SteadyPair
from .model import LpvModel
from .polytope import VertexMap
from .solver import ConvexProgram, Solver, SolveResult, Status


@dataclass(frozen=True)
class MpcConfig:
    N: int
    Q: np.ndarray
    R: np.ndarray
    cons: Constraints
    F_e: np.ndarray
    vertex_map: VertexMap
    K: np.ndarray
    K_f: np.ndarray
    w_bar: np.ndarray
    alpha_reg: float = 1e-5

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon must be at least 1")
        if np.linalg.eigvalsh(self.R).min() <= 0:
            raise ValueError("R must be positive definite")
        if np.linalg.eigvalsh(self.Q).min() < -1e-12:
            raise ValueError("Q must be positive semidefinite")

    @property
    def n_e(self) -> int:
        return self.F_e.shape[0]


@dataclass
class TubeSolution:
    mu: np.ndarray          # (N, nu)
    alpha: np.ndarray       # (N+1, n_e)
    omega: np.ndarray       # (p, N+1, n_e, n_theta)
    u_applied: np.ndarray
    objective: float
    feasible: bool
    nominal: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))


@dataclass
class StepDiagnostics:
    status: str
    iterations: int
    kkt_residual: float
    solve_time: float
    fallback: bool
    max_alpha: float


def theta_box_vertices(b_theta) -> list[np.ndarray]:
    """Vertices of the box ``[I; -I] theta <= b_theta``."""
    b = np.asarray(b_theta, dtype=float)
    q = b.size // 2
    lo, hi = -b[q:], b[:q]
    return [np.where(np.array(bits), hi, lo) for bits in itertools.product([True, False], repeat=q)]


def nominal_prediction(model: LpvModel, theta_hat, K, e0, N):
    """Stacked maps with ``e_i = Gx[i] e0 + Gu[i] mu`` for i = 0..N."""
    A, B = model.eval(theta_hat)
    Ak = A + B @ K
    nx, nu = B.shape
    Gx = np.zeros((N + 1, nx, nx))
    Gu = np.zeros((N + 1, nx, N * nu))
    Gx[0] = np.eye(nx)
    for i in range(N):
        Gx[i + 1] = Ak @ Gx[i]
        Gu[i + 1] = Ak @ Gu[i]
        Gu[i + 1][:, i * nu:(i + 1) * nu] += B
    return Gx, Gu


def _cost(model, cfg: MpcConfig, theta_hat, P, e0, d0=None):
    """Quadratic cost in ``mu`` (and ``lam`` when ``e0 + lam d0`` is the initial error).

    Returns (H, f, const) for the variables ``mu`` or ``(mu, lam)``.
    """
    N, nu = cfg.N, model.nu
    Gx, Gu = nominal_prediction(model, theta_hat, cfg.K, e0, N)
    nm = N * nu
    extra = 0 if d0 is None else 1
    nv = nm + extra
    H = np.zeros((nv, nv))
    f = np.zeros(nv)
    c = 0.0
    for i in range(N + 1):
        ex = Gx[i] @ e0
        eu = Gu[i] if d0 is None else np.column_stack([Gu[i], Gx[i] @ d0])
        if i < N:
            sel = np.zeros((nu, nv))
            sel[:, i * nu:(i + 1) * nu] = np.eye(nu)
            ux, uu = cfg.K @ ex, cfg.K @ eu + sel
            W, Wu = cfg.Q, cfg.R
        else:
            ux, uu = cfg.K_f @ ex, cfg.K_f @ eu
            W, Wu = P, np.zeros_like(cfg.R)
        H += eu.T @ W @ eu + uu.T @ Wu @ uu
        f += eu.T @ W @ ex + uu.T @ Wu @ ux
        c += ex @ W @ ex + ux @ Wu @ ux
    return 2.0 * H, 2.0 * f, c


def _offsets(model, thetas, x_s, u_s):
    """d_v = A(theta_v) x_s + B(theta_v) u_s - x_s for every parameter vertex."""
    return [model.step(x_s, u_s, th) - x_s for th in thetas]


def assemble_reduced(model: LpvModel, cfg: MpcConfig, x_k, steady: SteadyPair, theta_hat,
                     b_theta, P, anchor: SteadyPair | None = None, rho: float = 1e6) -> ConvexProgram:
    """QP in ``z = (mu_0..mu_{N-1}, alpha_0..alpha_N)`` with the multipliers eliminated.

    With an ``anchor`` pair the steady pair becomes ``anchor + lam (steady - anchor)``
    with ``lam`` in [0, 1] appended to ``z`` and the offset cost
    ``rho |y_s(lam) - y_s(target)|^2`` added.  Every row is affine in the pair, so this stays a QP, and ``lam = 0``
    reproduces the anchor's program.
    """
    N, nu, n_e = cfg.N, model.nu, cfg.n_e
    nm = N * nu
    blend = anchor is not None
    n = nm + (N + 1) * n_e + int(blend)
    F, S = cfg.F_e, cfg.vertex_map.S
    base = anchor if blend else steady
    x_s, u_s = base.x_s, base.u_s
    dx = steady.x_s - x_s if blend else np.zeros_like(x_s)
    du = steady.u_s - u_s if blend else np.zeros_like(u_s)
    e0 = np.asarray(x_k, dtype=float) - x_s
    thetas = theta_box_vertices(b_theta)
    d = _offsets(model, thetas, x_s, u_s)

    def mu_sl(i):
        return slice(i * nu, (i + 1) * nu)

    def al_sl(i):
        return slice(nm + i * n_e, nm + (i + 1) * n_e)

    rows, rhs = [], []
    I_e = np.eye(n_e)
    for th, dv in zip(thetas, d):
        A, B = model.eval(th)
        AK, AKf = A + B @ cfg.K, A + B @ cfg.K_f
        FB = F @ B
        off = -cfg.w_bar - F @ dv
        lam_col = F @ (A @ dx + B @ du - dx)
        for Sj in S:
            FAS, FAfS = F @ AK @ Sj, F @ AKf @ Sj
            for i in range(N + 1):
                blk = np.zeros((n_e, n))
                if i < N:
                    blk[:, al_sl(i)] = FAS
                    blk[:, mu_sl(i)] = FB
                    blk[:, al_sl(i + 1)] -= I_e
                else:
                    blk[:, al_sl(N)] = FAfS - I_e
                if blend:
                    blk[:, -1] = lam_col
                rows.append(blk)
                rhs.append(off)
    G, Hc = cfg.cons.G, cfg.cons.H
    b_t = cfg.cons.b - G @ x_s - Hc @ u_s
    GK, GKf = G + Hc @ cfg.K, G + Hc @ cfg.K_f
    con_lam = G @ dx + Hc @ du
    for Sj in S:
        for i in range(N + 1):
            blk = np.zeros((G.shape[0], n))
            if i < N:
                blk[:, al_sl(i)] = GK @ Sj
                blk[:, mu_sl(i)] = Hc
            else:
                blk[:, al_sl(i)] = GKf @ Sj
            if blend:
                blk[:, -1] = con_lam
            rows.append(blk)
            rhs.append(b_t)
    blk = np.zeros((n_e, n))
    blk[:, al_sl(0)] = -I_e
    if blend:
        blk[:, -1] = -F @ dx
    rows.append(blk)
    rhs.append(-F @ e0)

    H = np.zeros((n, n))
    f = np.zeros(n)
    H[nm:nm + (N + 1) * n_e, nm:nm + (N + 1) * n_e] = 2.0 * cfg.alpha_reg * np.eye((N + 1) * n_e)
    if blend:
        Hm, fm, _ = _cost(model, cfg, theta_hat, P, e0, -dx)
        idx = np.r_[np.arange(nm), n - 1]
        H[np.ix_(idx, idx)] += Hm
        f[idx] += fm
        # offset cost rho |y_s(lam) - y_target|^2; alpha_reg keeps lam determined when the pairs agree
        gap = float(dx[:2] @ dx[:2])
        H[-1, -1] += 2.0 * (rho * gap + cfg.alpha_reg)
        f[-1] -= 2.0 * rho * gap
        lam_rows = np.zeros((2, n))
        lam_rows[0, -1], lam_rows[1, -1] = 1.0, -1.0
        rows.append(lam_rows)
        rhs.append(np.array([1.0, 0.0]))
    else:
        Hm, fm, _ = _cost(model, cfg, theta_hat, P, e0)
        H[:nm, :nm] += Hm
        f[:nm] = fm
    return ConvexProgram(0.5 * (H + H.T), f, A_in=np.vstack(rows), b_in=np.concatenate(rhs))


def blended_pair(anchor: SteadyPair, target: SteadyPair, lam: float) -> SteadyPair:
    x_s = anchor.x_s + lam * (target.x_s - anchor.x_s)
    u_s = anchor.u_s + lam * (target.u_s - anchor.u_s)
    y_s = x_s[:2].copy()
    return SteadyPair(x_s, u_s, y_s, bool(np.abs(y_s - target.y_s).max() <= 1e-9) and target.admissible)


def omega_from_box(c, b_theta) -> np.ndarray:
    """Cheapest nonnegative ``[w+, w-]`` with ``w+ - w- = c`` for the box direction set."""
    return np.concatenate([np.maximum(c, 0.0), np.maximum(-c, 0.0)])


def recover_omega(model: LpvModel, cfg: MpcConfig, steady: SteadyPair, b_theta, mu, alpha) -> np.ndarray:
    """Multipliers certifying the tube inclusions for a reduced-QP solution."""
    N, p, n_e = cfg.N, cfg.vertex_map.p, cfg.n_e
    q = model.q
    S = cfg.vertex_map.S
    out = np.zeros((p, N + 1, n_e, 2 * q))
    for j in range(p):
        for i in range(N + 1):
            e = S[j] @ alpha[i]
            ub = (cfg.K @ e + mu[i]) if i < N else cfg.K_f @ e
            Phi, _ = model.regressors(steady.x_s + e, steady.u_s + ub)
            C = cfg.F_e @ Phi
            for l in range(n_e):
                out[j, i, l] = omega_from_box(C[l], b_theta)
    return out


def assemble(model: LpvModel, cfg: MpcConfig, x_k, steady: SteadyPair, theta_hat, ps: ParamState,
             P, omega_reg: float = 1e-5) -> ConvexProgram:
    """Full QP over ``(mu, alpha, Omega)`` with the inclusion certificates explicit.

    Variable order: ``mu`` (N nu), ``alpha`` ((N+1) n_e), then ``Omega[j, i]``
    row-major for j = 1..p and i = 0..N.  Equalities encode
    ``Omega F_theta = F_e Phi(.)``; inequalities the offset rows, ``Omega >= 0``,
    the state/input rows and the initial cross-section.
    """
    N, nu, n_e = cfg.N, model.nu, cfg.n_e
    nx, q = model.nx, model.q
    F_th, b_th = ps.F_theta, ps.b_theta
    n_th = F_th.shape[0]
    p = cfg.vertex_map.p
    nm = N * nu
    na = (N + 1) * n_e
    no = n_e * n_th
    n = nm + na + p * (N + 1) * no
    S = cfg.vertex_map.S
    F = cfg.F_e
    x_s, u_s = steady.x_s, steady.u_s
    e0 = np.asarray(x_k, dtype=float) - x_s

    def om(j, i):
        return nm + na + (j * (N + 1) + i) * no

    def al(i):
        return nm + i * n_e

    # Phi(x_s + e, u_s + ub) and phi(.) are affine in (e, ub): split the parts
    Ai = [Aj for Aj in model.A]
    Bi = [Bj for Bj in model.B]
    eq_rows, eq_rhs, in_rows, in_rhs = [], [], [], []
    for j in range(p):
        for i in range(N + 1):
            Kx = cfg.K if i < N else cfg.K_f
            o = om(j, i)
            for l in range(n_e):
                # Omega[l] F_th = F[l] Phi: one equation per parameter coordinate
                for t in range(q):
                    row = np.zeros(n)
                    row[o + l * n_th: o + (l + 1) * n_th] = F_th[:, t]
                    Mt = F[l] @ (Ai[t + 1] + Bi[t + 1] @ Kx) @ S[j]
                    row[al(i): al(i) + n_e] -= Mt
                    if i < N:
                        row[i * nu:(i + 1) * nu] -= F[l] @ Bi[t + 1]
                    eq_rows.append(row)
                    eq_rhs.append(F[l] @ (Ai[t + 1] @ x_s + Bi[t + 1] @ u_s))
                # Omega[l] b + F[l] phi(.) - F[l] x_s - alpha_next[l] <= -w_bar[l]
                row = np.zeros(n)
                row[o + l * n_th: o + (l + 1) * n_th] = b_th
                row[al(i): al(i) + n_e] += F[l] @ (Ai[0] + Bi[0] @ Kx) @ S[j]
                if i < N:
                    row[i * nu:(i + 1) * nu] += F[l] @ Bi[0]
                nxt = i + 1 if i < N else N
                row[al(nxt) + l] -= 1.0
                in_rows.append(row)
                in_rhs.append(-cfg.w_bar[l] - F[l] @ (Ai[0] @ x_s + Bi[0] @ u_s - x_s))
    n_om = p * (N + 1) * no
    nonneg = np.zeros((n_om, n))
    nonneg[:, nm + na:] = -np.eye(n_om)
    G, Hc = cfg.cons.G, cfg.cons.H
    b_t = cfg.cons.b - G @ x_s - Hc @ u_s
    con = []
    for j in range(p):
        for i in range(N + 1):
            blk = np.zeros((G.shape[0], n))
            if i < N:
                blk[:, al(i): al(i) + n_e] = (G + Hc @ cfg.K) @ S[j]
                blk[:, i * nu:(i + 1) * nu] = Hc
            else:
                blk[:, al(i): al(i) + n_e] = (G + Hc @ cfg.K_f) @ S[j]
            con.append(blk)
    init = np.zeros((n_e, n))
    init[:, al(0): al(0) + n_e] = -np.eye(n_e)
    A_in = np.vstack([np.array(in_rows), nonneg, *con, init])
    b_in = np.concatenate([in_rhs, np.zeros(n_om), np.tile(b_t, p * (N + 1)), -F @ e0])

    Hm, fm, _ = _cost(model, cfg, theta_hat, P, e0)
    H = np.zeros((n, n))
    H[:nm, :nm] = Hm
    H[nm:nm + na, nm:nm + na] = 2.0 * cfg.alpha_reg * np.eye(na)
    H[nm + na:, nm + na:] = 2.0 * omega_reg * np.eye(n_om)
    f = np.zeros(n)
    f[:nm] = fm
    return ConvexProgram(0.5 * (H + H.T), f, np.array(eq_rows), np.array(eq_rhs), A_in, b_in)


def split_full(cfg: MpcConfig, nu: int, n_th: int, z) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    N, n_e, p = cfg.N, cfg.n_e, cfg.vertex_map.p
    nm, na = N * nu, (N + 1) * n_e
    mu = z[:nm].reshape(N, nu)
    alpha = z[nm:nm + na].reshape(N + 1, n_e)
    omega = z[nm + na:].reshape(p, N + 1, n_e, n_th)
    return mu, alpha, omega


def residual_vertices(Ts: float, w_max, eps_res: float) -> list[np.ndarray]:
    """Vertices of the one-step state residual box used by the tube."""
    half = np.concatenate([[eps_res, eps_res], Ts * np.asarray(w_max, dtype=float)])
    return [half * np.array(s) for s in itertools.product([1.0, -1.0], repeat=half.size)]


def tube_residuals(model: LpvModel, cfg: MpcConfig, x_k, steady: SteadyPair, b_theta, mu, alpha,
                   r_vertices=None) -> dict[str, float]:
    """Independent evaluation of the tube, constraint and initial rows at a solution.

    Each template vertex is pushed through every parameter vertex and every
    residual vertex ``r`` (state space); without ``r_vertices`` the offset
    ``w_bar`` is subtracted instead.  The returned numbers are minimum slacks.
    """
    S = cfg.vertex_map.S
    F, N = cfg.F_e, cfg.N
    x_s, u_s = steady.x_s, steady.u_s
    if r_vertices is None:
        r_vertices = [np.zeros(model.nx)]
        r_extra = cfg.w_bar
    else:
        r_extra = np.zeros(cfg.n_e)
    R = np.array(r_vertices)
    tube = np.inf
    for th in theta_box_vertices(b_theta):
        A, B = model.eval(th)
        for i in range(N + 1):
            Kx = cfg.K if i < N else cfg.K_f
            nxt = alpha[min(i + 1, N)]
            for Sj in S:
                e = Sj @ alpha[i]
                ub = Kx @ e + (mu[i] if i < N else 0.0)
                x_next = A @ (x_s + e) + B @ (u_s + ub)
                e_next = x_next[None, :] + R - x_s[None, :]
                tube = min(tube, float(np.min(nxt[None, :] - e_next @ F.T - r_extra[None, :])))
    cons = np.inf
    for i in range(N + 1):
        Kx = cfg.K if i < N else cfg.K_f
        for Sj in S:
            e = Sj @ alpha[i]
            u = u_s + Kx @ e + (mu[i] if i < N else 0.0)
            cons = min(cons, float(np.min(cfg.cons.slack(x_s + e, u))))
    init = float(np.min(alpha[0] - F @ (np.asarray(x_k) - x_s)))
    return {"tube": tube, "constraints": cons, "initial": init}


class RampcController:
    """Per-step law ``u = K (x - x_s) + mu_0 + u_s`` from the reduced QP.

    On an infeasible QP the previous input is held and the step is flagged.
    """

    def __init__(self, model: LpvModel, cfg: MpcConfig, solver: Solver | None = None, rho: float = 1e6):
        self.model = model
        self.cfg = cfg
        self.solver = solver or Solver(max_iter=20_000)
        self.rho = rho
        self.u_prev = np.zeros(model.nu)

    def solve_step(self, x_k, steady: SteadyPair, theta_hat, b_theta, P, anchor: SteadyPair | None = None):
        """Returns ``(u, TubeSolution, StepDiagnostics, pair)`` where ``pair`` is the steady pair used."""
        cfg = self.cfg
        x_k = np.asarray(x_k, dtype=float)
        t0 = time.perf_counter()
        prog = assemble_reduced(self.model, cfg, x_k, steady, theta_hat, b_theta, P, anchor, self.rho)
        res: SolveResult = self.solver.solve_qp(prog)
        dt = time.perf_counter() - t0
        N, nu, n_e = cfg.N, self.model.nu, cfg.n_e
        pair = steady
        if res.status is Status.OPTIMAL:
            z = res.x_opt
            mu = z[:N * nu].reshape(N, nu)
            alpha = z[N * nu:N * nu + (N + 1) * n_e].reshape(N + 1, n_e)
            if anchor is not None:
                pair = blended_pair(anchor, steady, float(np.clip(z[-1], 0.0, 1.0)))
            u = cfg.K @ (x_k - pair.x_s) + mu[0] + pair.u_s
            feasible, fallback = True, False
            Hm, fm, c = _cost(self.model, cfg, theta_hat, P, x_k - pair.x_s)
            m = mu.ravel()
            objective = 0.5 * m @ Hm @ m + fm @ m + c
        else:
            mu = np.zeros((N, nu))
            alpha = np.full((N + 1, n_e), np.nan)
            u = self.u_prev.copy()
            feasible, fallback = False, True
            objective = np.nan
            if anchor is not None:
                pair = anchor
        self.u_prev = u
        sol = TubeSolution(mu=mu, alpha=alpha, omega=np.zeros((0,)), u_applied=u,
                           objective=objective, feasible=feasible)
        diag = StepDiagnostics(status=res.status.value, iterations=res.iterations,
                               kkt_residual=res.kkt_residual, solve_time=dt, fallback=fallback,
                               max_alpha=float(np.nanmax(alpha)) if feasible else np.nan)
        return u, sol, diag, pair


@dataclass
class PipelineRecord:
    target: SteadyPair
    pair: SteadyPair
    diag: StepDiagnostics
    estimator_flag: bool
    margin_updated: bool


class AdaptiveTubeMpc:
    """Estimator, governor, terminal-cost update and tube MPC, run once per sample.

    The governor's pair is the target; the pair actually used blends the
    previously used pair toward it (see :func:`assemble_reduced`), so a
    reference jump never makes the QP infeasible by itself.
    """

    def __init__(self, model: LpvModel, cfg: MpcConfig, estimator, governor, ps: ParamState, P_fn,
                 margin_fn=None, solver: Solver | None = None, rho: float = 1e6):
        self.model = model
        self.cfg = cfg
        self.estimator = estimator
        self.governor = governor
        self.ps = ps
        self.P_fn = P_fn
        self.margin_fn = margin_fn
        self.ctl = RampcController(model, cfg, solver, rho)
        self._x_prev = None
        self._u_prev = None
        self.anchor: SteadyPair | None = None
        self._margin_key = None
        self._refresh_margin()

    def _refresh_margin(self) -> bool:
        if self.margin_fn is None:
            return False
        key = self.ps.b_theta.tobytes()
        if key == self._margin_key:
            return False
        self.governor.margin = self.margin_fn(self.ps)
        self.governor._cache.clear()
        self._margin_key = key
        return True

    def step(self, x_k, v_d):
        x_k = np.asarray(x_k, dtype=float)
        flag = False
        if self._x_prev is not None:
            flag = self.estimator.step(self.ps, x_k, self._x_prev, self._u_prev).flagged
        updated = self._refresh_margin()
        theta_hat, b_theta = self.ps.theta_hat, self.ps.b_theta
        target = self.governor.steady_pair(v_d, theta_hat)
        if self.anchor is None:
            self.anchor = self.governor.steady_pair(x_k[:2], theta_hat)
        P = self.P_fn(theta_hat)
        u, sol, diag, pair = self.ctl.solve_step(x_k, target, theta_hat, b_theta, P, self.anchor)
        self.anchor = pair
        self._x_prev, self._u_prev = x_k, u
        return u, sol, PipelineRecord(target, pair, diag, flag, updated)
