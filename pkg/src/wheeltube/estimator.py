"""Set-membership parameter estimation with projection-based point estimate."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import LpvModel
from .solver import ConvexProgram, Solver, Status


class EmptyParameterSetError(RuntimeError):
    pass


@dataclass
class ParamState:
    F_theta: np.ndarray
    b_theta: np.ndarray
    theta_hat: np.ndarray

    def __post_init__(self):
        self.F_theta = np.atleast_2d(np.asarray(self.F_theta, dtype=float))
        self.b_theta = np.asarray(self.b_theta, dtype=float).ravel()
        self.theta_hat = np.asarray(self.theta_hat, dtype=float).ravel()
        if self.F_theta.shape != (self.b_theta.size, self.theta_hat.size):
            raise ValueError("F_theta, b_theta and theta_hat have inconsistent shapes")

    @classmethod
    def box(cls, bound, theta_hat) -> "ParamState":
        bound = np.asarray(bound, dtype=float)
        q = bound.size
        return cls(np.vstack([np.eye(q), -np.eye(q)]), np.concatenate([bound, bound]), theta_hat)

    def contains(self, theta, tol: float = 1e-8) -> bool:
        return bool(np.all(self.F_theta @ np.asarray(theta, dtype=float) <= self.b_theta + tol))

    def box_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """(lower, upper) for the axis-aligned direction set [I; -I]."""
        q = self.theta_hat.size
        if not np.allclose(self.F_theta, np.vstack([np.eye(q), -np.eye(q)])):
            raise ValueError("box_bounds needs F_theta = [I; -I]")
        return -self.b_theta[q:], self.b_theta[:q]


@dataclass(frozen=True)
class ResidualSet:
    """``{r | F_w_x r <= b_w_x}`` holding the one-step state residual."""

    F_w_x: np.ndarray
    b_w_x: np.ndarray

    @classmethod
    def lifted_box(cls, Ts: float, w_max, eps_res: float) -> "ResidualSet":
        """Residual box: +-eps_res on the speed rows, +-Ts*w_max on the acceleration rows."""
        w_max = np.asarray(w_max, dtype=float)
        half = np.concatenate([[eps_res, eps_res], Ts * w_max])
        return cls(np.vstack([np.eye(4), -np.eye(4)]), np.concatenate([half, half]))

    def contains(self, r, tol: float = 0.0) -> bool:
        return bool(np.all(self.F_w_x @ r <= self.b_w_x + tol))


@dataclass
class UpdateReport:
    row_infeasible: list[int] = field(default_factory=list)
    empty: bool = False

    @property
    def flagged(self) -> bool:
        return self.empty or bool(self.row_infeasible)


class SetMembershipEstimator:
    def __init__(self, model: LpvModel, residual: ResidualSet, solver: Solver | None = None):
        self.model = model
        self.residual = residual
        self.solver = solver or Solver()

    def row_bounds(self, ps: ParamState, x_k, x_prev, u_prev) -> tuple[np.ndarray, list[int]]:
        """Per-row multiplier LPs; returns the candidate offsets and failed rows.

        Row l solves ``min L.c  s.t.  L M = F_theta[l], L >= 0`` with
        ``M = [F_theta; -F_w Phi]`` and ``c = [b_theta; b_w + F_w (phi - x_k)]``.
        """
        Phi, phi = self.model.regressors(x_prev, u_prev)
        Fw, bw = self.residual.F_w_x, self.residual.b_w_x
        M = np.vstack([ps.F_theta, -Fw @ Phi])
        c = np.concatenate([ps.b_theta, bw + Fw @ (phi - np.asarray(x_k, dtype=float))])
        m = M.shape[0]
        out = ps.b_theta.copy()
        failed = []
        for l in range(ps.F_theta.shape[0]):
            prog = ConvexProgram(None, c, A_eq=M.T, b_eq=ps.F_theta[l], A_in=-np.eye(m), b_in=np.zeros(m))
            res = self.solver.solve_lp(prog)
            if res.status is Status.OPTIMAL:
                out[l] = res.objective
            else:
                failed.append(l)
        return out, failed

    def update_set(self, ps: ParamState, x_k, x_prev, u_prev) -> tuple[np.ndarray, UpdateReport]:
        """New offsets ``min(b_theta(k-1), row LP values)``.

        A row LP only fails when the data contradicts Theta(k-1) (unbounded
        below); then, or if the intersection comes out empty, the whole
        previous set is kept and the report is flagged.
        """
        cand, failed = self.row_bounds(ps, x_k, x_prev, u_prev)
        b_new = np.minimum(ps.b_theta, cand)
        report = UpdateReport(row_infeasible=failed)
        if failed or _box_empty(ps.F_theta, b_new):
            report.empty = True
            return ps.b_theta.copy(), report
        return b_new, report

    def project_estimate(self, ps: ParamState, b_theta=None) -> np.ndarray:
        """Euclidean projection of the previous estimate onto ``{F_theta t <= b}``."""
        b = ps.b_theta if b_theta is None else np.asarray(b_theta, dtype=float)
        if np.all(ps.F_theta @ ps.theta_hat <= b):
            return ps.theta_hat.copy()
        q = ps.theta_hat.size
        prog = ConvexProgram(2.0 * np.eye(q), -2.0 * ps.theta_hat, A_in=ps.F_theta, b_in=b)
        res = self.solver.solve_qp(prog)
        if res.status is not Status.OPTIMAL:
            raise EmptyParameterSetError("parameter set is empty; cannot project")
        return res.x_opt

    def step(self, ps: ParamState, x_k, x_prev, u_prev) -> UpdateReport:
        """Update ``ps`` in place: shrink the set, then project the estimate."""
        b_new, report = self.update_set(ps, x_k, x_prev, u_prev)
        ps.b_theta = b_new
        ps.theta_hat = self.project_estimate(ps)
        return report


def _box_empty(F, b, tol: float = 1e-9) -> bool:
    q = F.shape[1]
    if F.shape[0] == 2 * q and np.allclose(F, np.vstack([np.eye(q), -np.eye(q)])):
        return bool(np.any(b[:q] + b[q:] < -tol))
    res = Solver().solve_lp(ConvexProgram(None, np.zeros(q), A_in=F, b_in=b + tol))
    return res.status is Status.INFEASIBLE
