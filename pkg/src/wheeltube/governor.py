"""Closest admissible steady state and input for a speed reference."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LpvModel
from .solver import ConvexProgram, Solver, Status


class InfeasibleSteadySetError(RuntimeError):
    pass


@dataclass(frozen=True)
class SteadyPair:
    x_s: np.ndarray
    u_s: np.ndarray
    y_s: np.ndarray
    admissible: bool


@dataclass(frozen=True)
class Constraints:
    """Rows ``G x + H u <= b``."""

    G: np.ndarray
    H: np.ndarray
    b: np.ndarray

    @classmethod
    def symmetric(cls, v_max: float, a_max: float, u_max: float) -> "Constraints":
        """|v_i| <= v_max, |a_i| <= a_max, |u_i| <= u_max as 12 rows."""
        I4, I2 = np.eye(4), np.eye(2)
        G = np.vstack([I4, -I4, np.zeros((4, 4))])
        H = np.vstack([np.zeros((8, 2)), I2, -I2])
        half = np.array([v_max, v_max, a_max, a_max])
        b = np.concatenate([half, half, [u_max] * 4])
        return cls(G, H, b)

    def slack(self, x, u) -> np.ndarray:
        return self.b - self.G @ x - self.H @ u

    def tightened(self, margin) -> "Constraints":
        return Constraints(self.G, self.H, self.b - np.asarray(margin, dtype=float))


class ReferenceGovernor:
    """Solves ``min ||v_d - y_s||^2_{Q_s}`` over steady pairs inside the constraints.

    ``margin`` tightens ``b`` so that a robust invariant tube fits around the
    returned pair; zero reproduces the untightened problem.
    """

    def __init__(self, model: LpvModel, cons: Constraints, Q_s=None, margin=None,
                 solver: Solver | None = None, tol: float = 1e-8):
        self.model = model
        self.cons = cons
        self.Q_s = np.eye(2) if Q_s is None else np.asarray(Q_s, dtype=float)
        self.margin = np.zeros_like(cons.b) if margin is None else np.asarray(margin, dtype=float)
        self.solver = solver or Solver()
        self.tol = tol
        self._cache: dict[bytes, SteadyPair] = {}

    def _program(self, v_d, theta_hat) -> ConvexProgram:
        A, B = self.model.eval(theta_hat)
        nx, nu = B.shape
        Cs = np.hstack([np.eye(2), np.zeros((2, nx - 2))])
        H = np.zeros((nx + nu, nx + nu))
        H[:nx, :nx] = 2.0 * Cs.T @ self.Q_s @ Cs
        f = np.concatenate([-2.0 * Cs.T @ self.Q_s @ v_d, np.zeros(nu)])
        A_eq = np.hstack([A - np.eye(nx), B])
        A_in = np.hstack([self.cons.G, self.cons.H])
        return ConvexProgram(H, f, A_eq, np.zeros(nx), A_in, self.cons.b - self.margin)

    def steady_pair(self, v_d, theta_hat) -> SteadyPair:
        v_d = np.asarray(v_d, dtype=float)
        theta_hat = np.asarray(theta_hat, dtype=float)
        key = v_d.tobytes() + theta_hat.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        res = self.solver.solve_qp(self._program(v_d, theta_hat))
        if res.status is not Status.OPTIMAL:
            raise InfeasibleSteadySetError(f"no steady pair satisfies the constraints ({res.status.value})")
        nx = self.model.nx
        x_s, u_s = res.x_opt[:nx], res.x_opt[nx:]
        y_s = x_s[:2].copy()
        pair = SteadyPair(x_s, u_s, y_s, bool(np.abs(y_s - v_d).max() <= 1e-6))
        if len(self._cache) > 4096:
            self._cache.clear()
        self._cache[key] = pair
        return pair


def minimal_invariant_tube(F_e, S, closed_loops, w_bar, tol: float = 1e-12, max_iter: int = 10_000) -> np.ndarray:
    """Least fixed point of ``alpha = max_{j,v} F_e Acl_v S_j alpha + w_bar``.

    Iterates from ``w_bar``; converges when the template is contractive for
    every closed loop in ``closed_loops``.
    """
    F_e = np.asarray(F_e, dtype=float)
    maps = np.stack([F_e @ Acl @ Sj for Acl in closed_loops for Sj in S])
    w_bar = np.asarray(w_bar, dtype=float)
    alpha = w_bar.copy()
    for _ in range(max_iter):
        nxt = (maps @ alpha).max(axis=0) + w_bar
        if np.abs(nxt - alpha).max() <= tol * (1 + np.abs(alpha).max()):
            return nxt
        alpha = nxt
    raise RuntimeError("invariant tube iteration did not converge")


def tube_margin(cons: Constraints, K, S, alpha) -> np.ndarray:
    """Row-wise support of ``(G + H K) e`` over ``{F_e e <= alpha}`` via its vertices."""
    GK = cons.G + cons.H @ K
    return np.max([GK @ Sj @ alpha for Sj in S], axis=0)


def steady_input_map(model: LpvModel, theta) -> np.ndarray:
    """``U`` with ``u_s = U v_s`` for steady pairs ``x_s = [v_s, 0]`` of the frozen model."""
    A, B = model.eval(theta)
    nv = 2
    rows = slice(nv, model.nx)
    return -np.linalg.solve(B[rows], (A - np.eye(model.nx))[rows, :nv])


def offset_support(model: LpvModel, F_e, thetas, theta_hat, v_cap) -> np.ndarray:
    """Row-wise bound on ``F_e (A(t) x_s + B(t) u_s - x_s)`` over parameter vertices and ``|v_s| <= v_cap``.

    For a steady pair of the estimate the offset is linear in ``v_s``.
    """
    A_h, B_h = model.eval(theta_hat)
    U = steady_input_map(model, theta_hat)
    worst = np.zeros(np.asarray(F_e).shape[0])
    for th in thetas:
        A, B = model.eval(th)
        Mv = (A - A_h)[:, :2] + (B - B_h) @ U
        worst = np.maximum(worst, np.abs(F_e @ Mv).sum(axis=1) * v_cap)
    return worst
