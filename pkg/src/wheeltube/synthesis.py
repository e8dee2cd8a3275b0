"""Offline synthesis: tube template, local gain, disturbance offset, terminal cost."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy.signal import place_poles

from .model import LpvModel
from .polytope import VertexMap, build_vertex_map
from .solver import ConvexProgram, Solver, Status


class TemplateInfeasibleError(RuntimeError):
    def __init__(self, epsilon: float):
        super().__init__(f"template is not contractive: best epsilon = {epsilon:.6g} >= 1")
        self.epsilon = epsilon


class UnstableClosedLoopError(ValueError):
    pass


@dataclass(frozen=True)
class GainSet:
    K: np.ndarray
    K_f: np.ndarray
    epsilon: float
    epsilon_f: float = np.nan


@dataclass(frozen=True)
class TubeTemplate:
    F_e: np.ndarray
    vertex_map: VertexMap
    w_bar: np.ndarray


@dataclass(frozen=True)
class TerminalCost:
    P: np.ndarray
    theta_used: np.ndarray
    residual: float


def box_vertices(b_theta) -> list[np.ndarray]:
    """Vertices of ``{theta | [I; -I] theta <= b_theta}``."""
    b_theta = np.asarray(b_theta, dtype=float)
    q = b_theta.size // 2
    hi, lo = b_theta[:q], -b_theta[q:]
    return [np.where(np.array(bits), hi, lo) for bits in itertools.product([True, False], repeat=q)]


def eigen_template(model: LpvModel, theta, poles) -> np.ndarray:
    """Parallelotope template aligned with the closed-loop eigenvectors.

    A nominal gain placing ``poles`` (real, distinct) at ``theta`` is computed
    and the rows of the inverse eigenvector matrix, normalized, are stacked
    with their negation.  In these coordinates the nominal closed loop is
    diagonal, which is what lets the gain LP certify contraction.
    """
    A, B = model.eval(theta)
    K0 = -place_poles(A, B, np.asarray(poles, dtype=float)).gain_matrix
    return closed_loop_template(A + B @ K0)


def closed_loop_template(Acl) -> np.ndarray:
    """Normalized left eigenvectors of a closed loop with real spectrum, stacked with their negation."""
    lam, V = np.linalg.eig(Acl)
    if np.abs(np.imag(lam)).max() > 1e-9:
        raise ValueError("closed loop has complex eigenvalues; template would not be real")
    order = np.argsort(-np.real(lam))
    T = np.linalg.inv(np.real(V[:, order]))
    T /= np.linalg.norm(T, axis=1, keepdims=True)
    return np.vstack([T, -T])


def lqr_gain(model: LpvModel, theta, Q, R) -> np.ndarray:
    """Infinite-horizon LQR gain (``u = K x``) of the model frozen at ``theta``."""
    A, B = model.eval(theta)
    X = sla.solve_discrete_are(A, B, Q, R)
    return -np.linalg.solve(R + B.T @ X @ B, B.T @ X @ A)


def _contraction_lp(model: LpvModel, F_e, theta_vertices, K_fixed=None):
    """Equality/inequality data of the contraction LP; K is a variable unless fixed."""
    F_e = np.asarray(F_e, dtype=float)
    n_e, nx = F_e.shape
    nu = model.nu
    nk = 0 if K_fixed is not None else nu * nx
    nl = n_e * n_e
    n = nk + len(theta_vertices) * nl + 1
    A_eq, b_eq, A_in, b_in = [], [], [], []
    for vi, th in enumerate(theta_vertices):
        A, B = model.eval(th)
        if K_fixed is not None:
            A = A + B @ K_fixed
        FA, FB = F_e @ A, F_e @ B
        off = nk + vi * nl
        for r in range(n_e):
            for c in range(nx):
                row = np.zeros(n)
                row[off + r * n_e: off + (r + 1) * n_e] = F_e[:, c]
                if nk:
                    row[[a * nx + c for a in range(nu)]] = -FB[r]
                A_eq.append(row)
                b_eq.append(FA[r, c])
            row = np.zeros(n)
            row[off + r * n_e: off + (r + 1) * n_e] = 1.0
            row[-1] = -1.0
            A_in.append(row)
            b_in.append(0.0)
    sign = -np.eye(n)[nk:]  # Lambda >= 0, eps >= 0
    A_in = np.vstack([np.array(A_in), sign])
    b_in = np.concatenate([b_in, np.zeros(n - nk)])
    c = np.zeros(n)
    c[-1] = 1.0
    return ConvexProgram(None, c, np.array(A_eq), np.array(b_eq), A_in, b_in), nk


def certify_gain(model: LpvModel, F_e, K, theta_vertices, solver: Solver | None = None) -> GainSet:
    """Contraction LP with the gain fixed: only the multipliers and eps are free."""
    prog, _ = _contraction_lp(model, F_e, theta_vertices, K_fixed=np.asarray(K, dtype=float))
    res = (solver or Solver()).solve_lp(prog)
    if res.status is not Status.OPTIMAL:
        raise RuntimeError(f"gain certification LP failed: {res.status.value}")
    eps = float(res.x_opt[-1])
    if eps >= 1.0:
        raise TemplateInfeasibleError(eps)
    K = np.asarray(K, dtype=float)
    return GainSet(K=K.copy(), K_f=K.copy(), epsilon=eps)


def synthesize_gain(model: LpvModel, F_e, theta_vertices, solver: Solver | None = None) -> GainSet:
    """Minimize the contraction factor of ``{e | F_e e <= 1}`` over ``K``.

    LP in ``(K, Lambda_v, eps)``::

        Lambda_v F_e = F_e (A_v + B_v K),  Lambda_v 1 <= eps 1,  Lambda_v >= 0

    for every parameter vertex ``v``.  K_f is set equal to K.
    """
    solver = solver or Solver()
    prog, nk = _contraction_lp(model, F_e, theta_vertices)
    res = solver.solve_lp(prog)
    if res.status is not Status.OPTIMAL:
        raise RuntimeError(f"gain synthesis LP failed: {res.status.value}")
    eps = float(res.x_opt[-1])
    K = res.x_opt[:nk].reshape(model.nu, model.nx)
    if eps >= 1.0:
        raise TemplateInfeasibleError(eps)
    return GainSet(K=K, K_f=K.copy(), epsilon=eps)


def contraction_factor(model: LpvModel, F_e, K, theta_vertices) -> float:
    """Direct evaluation of max_v max_j F_e (A_v + B_v K) e_j over template vertices."""
    vm = build_vertex_map(F_e)
    worst = 0.0
    for th in theta_vertices:
        A, B = model.eval(th)
        img = F_e @ (A + B @ K) @ np.stack(vm.vertices).T
        worst = max(worst, float(img.max()))
    return worst


def disturbance_offset(F_e, E, w_max) -> np.ndarray:
    """Row-wise support of ``F_e E w`` over the box ``|w| <= w_max``."""
    w_max = np.asarray(w_max, dtype=float)
    if np.any(w_max < 0):
        raise ValueError("disturbance bound must be nonnegative")
    return np.abs(np.asarray(F_e) @ np.asarray(E)) @ w_max


def solve_lyapunov(Ac, W) -> tuple[np.ndarray, float]:
    """Solve ``P = Ac' P Ac + W`` over symmetric P as an n(n+1)/2 linear system."""
    n = Ac.shape[0]
    iu = np.triu_indices(n)
    cols = []
    for a, b in zip(*iu):
        Eab = np.zeros((n, n))
        Eab[a, b] = Eab[b, a] = 1.0
        cols.append((Eab - Ac.T @ Eab @ Ac)[iu])
    p = np.linalg.solve(np.column_stack(cols), W[iu])
    P = np.zeros((n, n))
    P[iu] = p
    P = P + P.T - np.diag(np.diag(P))
    res = float(np.abs(P - Ac.T @ P @ Ac - W).max())
    return P, res


def terminal_cost(model: LpvModel, theta_hat, K_f, Q, R) -> TerminalCost:
    A, B = model.eval(theta_hat)
    Ac = A + B @ K_f
    rho = np.abs(np.linalg.eigvals(Ac)).max()
    if rho >= 1.0:
        raise UnstableClosedLoopError(f"spectral radius {rho:.6g} >= 1 at theta {theta_hat}")
    W = Q + K_f.T @ R @ K_f
    P, res = solve_lyapunov(Ac, 0.5 * (W + W.T))
    return TerminalCost(P=P, theta_used=np.asarray(theta_hat, dtype=float).copy(), residual=res)


def verify_terminal_contractivity(model: LpvModel, K_f, P, theta_vertices) -> float:
    """Largest generalized eigenvalue of (Ac' P Ac, P) over the parameter vertices."""
    eps_f = 0.0
    for th in theta_vertices:
        A, B = model.eval(th)
        Ac = A + B @ K_f
        lam = sla.eigh(Ac.T @ P @ Ac, P, eigvals_only=True)
        eps_f = max(eps_f, float(lam.max()))
    return eps_f


def certificate_matrix(model: LpvModel, K_f, F_e, theta_vertices, Q, R) -> np.ndarray:
    """A single P meeting both terminal conditions at every parameter vertex.

    The shape comes from the template, ``P ~ F_e' F_e``, whose level sets are
    contracted by the closed loop when the template is; the scale is the
    smallest one making ``P - Ac' P Ac - Q - K_f' R K_f`` semidefinite at all
    vertices.  Raises when the shape itself is not a strict Lyapunov matrix.
    """
    F_e = np.asarray(F_e, dtype=float)
    base = F_e.T @ F_e
    W = Q + K_f.T @ R @ K_f
    W = 0.5 * (W + W.T)
    scale = 0.0
    for th in theta_vertices:
        A, B = model.eval(th)
        Ac = A + B @ K_f
        D = base - Ac.T @ base @ Ac
        if np.linalg.eigvalsh(D).min() <= 0:
            raise UnstableClosedLoopError("template norm is not decreasing at a parameter vertex")
        scale = max(scale, float(sla.eigh(W, D, eigvals_only=True).max()))
    return scale * (1.0 + 1e-9) * base


def terminal_decrease_margin(model: LpvModel, K_f, P, theta_vertices, Q, R) -> float:
    """Smallest eigenvalue of ``P - Ac' P Ac - Q - K_f' R K_f`` over the vertices."""
    W = Q + K_f.T @ R @ K_f
    worst = np.inf
    for th in theta_vertices:
        A, B = model.eval(th)
        Ac = A + B @ K_f
        M = P - Ac.T @ P @ Ac - W
        worst = min(worst, float(np.linalg.eigvalsh(0.5 * (M + M.T)).min()))
    return worst


def residual_offset(F_e, E, w_max, eps_res: float) -> np.ndarray:
    """Support of ``F_e r`` over the one-step residual box.

    The box is ``|r_v| <= eps_res`` on the speed rows plus ``E w`` with
    ``|w| <= w_max``; the speed part covers the discretization error of the
    speed rows, which the lumped jerk bound alone does not.
    """
    F_e = np.asarray(F_e, dtype=float)
    nv = F_e.shape[1] - np.asarray(E).shape[1]
    return disturbance_offset(F_e, E, w_max) + np.abs(F_e[:, :nv]).sum(axis=1) * eps_res


# ---------------------------------------------------------------- artifact
_FIELDS = ("F_e", "K", "K_f", "w_max", "eps_res", "w_bar", "epsilon", "epsilon_f", "P0", "P_cert",
           "gain_Q", "gain_R")


@dataclass
class SynthesisArtifact:
    F_e: np.ndarray
    K: np.ndarray
    K_f: np.ndarray
    w_max: np.ndarray
    eps_res: float
    w_bar: np.ndarray
    epsilon: float
    epsilon_f: float
    P0: np.ndarray
    P_cert: np.ndarray
    gain_Q: np.ndarray
    gain_R: np.ndarray

    def template(self) -> TubeTemplate:
        return TubeTemplate(self.F_e, build_vertex_map(self.F_e), self.w_bar)

    def save(self, path) -> None:
        lines = ["# wheeltube synthesis artifact v2"]
        for name in _FIELDS:
            val = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            lines.append(f"[{name}] {val.shape[0]} {val.shape[1]}")
            lines.extend(" ".join(repr(float(x)) for x in row) for row in val)
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "SynthesisArtifact":
        vals: dict[str, np.ndarray] = {}
        lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
        i = 0
        while i < len(lines):
            head = lines[i].split()
            name = head[0].strip("[]")
            r, c = int(head[1]), int(head[2])
            rows = [[float(x) for x in lines[i + 1 + k].split()] for k in range(r)]
            vals[name] = np.array(rows).reshape(r, c)
            i += r + 1
        missing = [f for f in _FIELDS if f not in vals]
        if missing:
            raise ValueError(f"artifact is missing {missing}")
        scalars = ("eps_res", "epsilon", "epsilon_f")
        vectors = ("w_max", "w_bar")
        kw = {}
        for f in _FIELDS:
            v = vals[f]
            kw[f] = float(v[0, 0]) if f in scalars else v.ravel() if f in vectors else v
        return cls(**kw)


def synthesize(model: LpvModel, theta_bound, theta_hat0, w_max, eps_res: float, Q, R, gain_Q, gain_R,
               solver: Solver | None = None, max_retries: int = 6) -> SynthesisArtifact:
    """Full offline pipeline.

    ``K = K_f`` is the LQR gain for ``(gain_Q, gain_R)`` at ``theta_hat0``, the
    template is its closed-loop eigenbasis and the fixed-gain LP certifies
    the contraction factor over the parameter box.  If the certificate fails
    the input weight is multiplied by 4 and the synthesis retried.
    """
    verts = box_vertices(np.concatenate([theta_bound, theta_bound]))
    gain_Q = np.asarray(gain_Q, dtype=float)
    gain_R = np.asarray(gain_R, dtype=float)
    last = None
    for _ in range(max_retries):
        K = lqr_gain(model, theta_hat0, gain_Q, gain_R)
        A, B = model.eval(theta_hat0)
        F_e = closed_loop_template(A + B @ K)
        try:
            gains = certify_gain(model, F_e, K, verts, solver)
            break
        except TemplateInfeasibleError as exc:
            last = exc
            gain_R = 4.0 * gain_R
    else:
        raise last
    tc = terminal_cost(model, theta_hat0, gains.K_f, Q, R)
    P_cert = certificate_matrix(model, gains.K_f, F_e, verts, Q, R)
    eps_f = verify_terminal_contractivity(model, gains.K_f, P_cert, verts)
    w_bar = residual_offset(F_e, model.E, w_max, eps_res)
    return SynthesisArtifact(F_e=F_e, K=gains.K, K_f=gains.K_f, w_max=np.asarray(w_max, dtype=float),
                             eps_res=float(eps_res), w_bar=w_bar, epsilon=gains.epsilon, epsilon_f=eps_f,
                             P0=tc.P, P_cert=P_cert, gain_Q=gain_Q, gain_R=gain_R)
