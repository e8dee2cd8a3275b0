"""Wheelchair drive model: continuous cascade, Euler discretization, LPV split.

State ``x = [v1, v2, a1, a2]`` (wheel speeds in m/s and their derivatives in
m/s^2), input ``u = [u1, u2]`` in volts.  Mass and damping vary with the
user as ``inv(M) = Mbar_inv + beta * M_tilde`` and ``D = Dbar + gamma *
D_tilde``; the parameter vector is ``theta = (beta, gamma, beta * gamma)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SingularModelError(ValueError):
    pass


@dataclass(frozen=True)
class MotorParams:
    l1: float
    l2: float
    r1: float
    r2: float
    ke1: float
    ke2: float
    kt1: float
    kt2: float

    def __post_init__(self):
        for name, val in vars(self).items():
            if not val > 0:
                raise ValueError(f"motor parameter {name} must be positive, got {val}")

    @property
    def L(self):
        return np.diag([self.l1, self.l2])

    @property
    def R(self):
        return np.diag([self.r1, self.r2])

    @property
    def Ke(self):
        return np.diag([self.ke1, self.ke2])

    @property
    def Kt(self):
        return np.diag([self.kt1, self.kt2])


@dataclass(frozen=True)
class BodyParams:
    M_bar_inv: np.ndarray
    D_bar: np.ndarray
    M_tilde: np.ndarray
    D_tilde: np.ndarray

    def __post_init__(self):
        for name in ("M_bar_inv", "D_bar", "M_tilde", "D_tilde"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(2, 2))
        if abs(np.linalg.det(self.M_bar_inv)) < 1e-12:
            raise SingularModelError("nominal inverse mass matrix is singular")
        if np.any(self.D_bar - np.diag(np.diag(self.D_bar))) or np.any(np.diag(self.D_bar) <= 0):
            raise ValueError("nominal damping must be diagonal and positive")

    def mass_inv(self, beta: float) -> np.ndarray:
        return self.M_bar_inv + beta * self.M_tilde

    def damping(self, gamma: float) -> np.ndarray:
        return self.D_bar + gamma * self.D_tilde


# identified values for the test wheelchair
PAPER_MOTOR = MotorParams(l1=0.614, l2=0.482, r1=8.138, r2=5.871,
                          ke1=3.471, ke2=2.610, kt1=1.324, kt2=0.827)
PAPER_BODY = BodyParams(
    M_bar_inv=np.array([[3.822, 1.776], [1.549, 4.839]]),
    D_bar=np.diag([2.034, 1.854]),
    M_tilde=np.array([[1.241, -0.046], [0.733, 0.185]]),
    D_tilde=np.diag([0.048, 0.024]),
)


@dataclass(frozen=True)
class LpvModel:
    """A(theta) = A[0] + sum_j theta_j A[j], likewise for B; q = 3."""

    A: tuple[np.ndarray, ...]
    B: tuple[np.ndarray, ...]
    E: np.ndarray
    Ts: float
    motor: MotorParams | None = None
    body: BodyParams | None = None

    @property
    def q(self) -> int:
        return len(self.A) - 1

    @property
    def nx(self) -> int:
        return self.A[0].shape[0]

    @property
    def nu(self) -> int:
        return self.B[0].shape[1]

    def eval(self, theta) -> tuple[np.ndarray, np.ndarray]:
        theta = np.asarray(theta, dtype=float).ravel()
        A = self.A[0].copy()
        B = self.B[0].copy()
        for t, Aj, Bj in zip(theta, self.A[1:], self.B[1:]):
            A += t * Aj
            B += t * Bj
        return A, B

    def regressors(self, x, u) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(Phi, phi)`` with ``Phi @ theta + phi == A(theta) x + B(theta) u``."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        cols = [Aj @ x + Bj @ u for Aj, Bj in zip(self.A[1:], self.B[1:])]
        Phi = np.column_stack(cols) if cols else np.zeros((self.nx, 0))
        phi = self.A[0] @ x + self.B[0] @ u
        return Phi, phi

    def step(self, x, u, theta, w=None) -> np.ndarray:
        A, B = self.eval(theta)
        x_next = A @ x + B @ u
        if w is not None:
            x_next = x_next + self.E @ w
        return x_next


def lumped_gamma(motor: MotorParams, M_inv, D) -> np.ndarray:
    Li = np.linalg.inv(motor.L)
    return M_inv @ Li @ motor.R @ D + M_inv @ motor.Kt @ Li @ motor.Ke


def continuous_matrices(motor: MotorParams, M_inv, D):
    """(A_c, B_c, E_c) of the second-order speed dynamics for fixed mass/damping."""
    try:
        Li = np.linalg.inv(motor.L)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - L is diagonal positive
        raise SingularModelError("inductance matrix is singular") from exc
    I2, Z = np.eye(2), np.zeros((2, 2))
    Gam = lumped_gamma(motor, M_inv, D)
    Ac = np.block([[Z, I2], [-Gam, -(M_inv @ D + Li @ motor.R)]])
    Bc = np.vstack([Z, M_inv @ motor.Kt @ Li])
    Ec = np.vstack([Z, I2])
    return Ac, Bc, Ec


def build_model(motor: MotorParams = PAPER_MOTOR, body: BodyParams = PAPER_BODY,
                Ts: float = 0.005) -> LpvModel:
    if not Ts > 0:
        raise ValueError("sampling interval must be positive")
    Li = np.linalg.inv(motor.L)
    R, Ke, Kt = motor.R, motor.Ke, motor.Kt
    Mb, Db, Mt, Dt = body.M_bar_inv, body.D_bar, body.M_tilde, body.D_tilde
    I2, Z = np.eye(2), np.zeros((2, 2))

    def lower(c, d):
        return np.block([[Z, Z], [c, d]])

    Gbar = lumped_gamma(motor, Mb, Db)
    A0 = np.block([[I2, Ts * I2], [-Ts * Gbar, I2 - Ts * (Mb @ Db + Li @ R)]])
    A1 = lower(-Ts * (Mt @ Li @ R @ Db + Mt @ Kt @ Li @ Ke), -Ts * Mt @ Db)
    A2 = lower(-Ts * Mb @ Li @ R @ Dt, -Ts * Mb @ Dt)
    A3 = lower(-Ts * Mt @ Li @ R @ Dt, -Ts * Mt @ Dt)
    B0 = np.vstack([Z, Ts * Mb @ Kt @ Li])
    B1 = np.vstack([Z, Ts * Mt @ Kt @ Li])
    B2 = np.zeros((4, 2))
    B3 = np.zeros((4, 2))
    E = np.vstack([Z, Ts * I2])
    return LpvModel((A0, A1, A2, A3), (B0, B1, B2, B3), E, Ts, motor, body)


def theta_of(beta: float, gamma: float) -> np.ndarray:
    return np.array([beta, gamma, beta * gamma])
