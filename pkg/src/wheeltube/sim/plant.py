"""Current/velocity cascade of the two-wheel drive, integrated with fixed-step RK4."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..model import BodyParams, MotorParams


@dataclass(frozen=True)
class PlantState:
    v: np.ndarray      # wheel speeds, m/s
    i_c: np.ndarray    # motor currents, A
    w_f: np.ndarray    # disturbance torques at the last evaluation
    slope: float = 0.0  # deg

    @classmethod
    def rest(cls) -> "PlantState":
        return cls(np.zeros(2), np.zeros(2), np.zeros(2), 0.0)


class Plant:
    """``L di/dt = u - R i - Ke v`` and ``M dv/dt = Kt i - D v - w_f`` for a fixed user."""

    def __init__(self, motor: MotorParams, body: BodyParams, beta: float, gamma: float):
        self.motor = motor
        self.M_inv = body.mass_inv(beta)
        self.M = np.linalg.inv(self.M_inv)
        self.D = body.damping(gamma)
        self.Li = np.linalg.inv(motor.L)
        self.R, self.Ke, self.Kt = motor.R, motor.Ke, motor.Kt

    def derivatives(self, v, i_c, u, w_f):
        di = self.Li @ (u - self.R @ i_c - self.Ke @ v)
        dv = self.M_inv @ (self.Kt @ i_c - self.D @ v - w_f)
        return dv, di

    def acceleration(self, ps: PlantState) -> np.ndarray:
        return self.M_inv @ (self.Kt @ ps.i_c - self.D @ ps.v - ps.w_f)

    def measure(self, ps: PlantState) -> np.ndarray:
        """Full state ``[v, dv/dt]`` as used by the controller."""
        return np.concatenate([ps.v, self.acceleration(ps)])

    def step(self, ps: PlantState, u, dt: float, disturbance, t0: float = 0.0, substeps: int = 10) -> PlantState:
        """Advance by ``dt`` with ``u`` held; ``disturbance(t)`` returns ``(w_f, slope)``."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        u = np.asarray(u, dtype=float)
        h = dt / substeps
        v, i_c = ps.v.copy(), ps.i_c.copy()

        def f(t, v, i_c):
            return self.derivatives(v, i_c, u, disturbance(t)[0])

        t = t0
        for _ in range(substeps):
            k1v, k1i = f(t, v, i_c)
            k2v, k2i = f(t + h / 2, v + h / 2 * k1v, i_c + h / 2 * k1i)
            k3v, k3i = f(t + h / 2, v + h / 2 * k2v, i_c + h / 2 * k2i)
            k4v, k4i = f(t + h, v + h * k3v, i_c + h * k3i)
            v = v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
            i_c = i_c + h / 6 * (k1i + 2 * k2i + 2 * k3i + k4i)
            t += h
        w_f, slope = disturbance(t)
        return replace(ps, v=v, i_c=i_c, w_f=np.asarray(w_f, dtype=float), slope=float(slope))

    def steady_speed(self, u, w_f=np.zeros(2)) -> np.ndarray:
        """Speed at rest of the derivatives for constant ``u`` and ``w_f``."""
        # i = Kt^-1 (D v + w_f),  u = R i + Ke v
        Kti = np.linalg.inv(self.Kt)
        A = self.R @ Kti @ self.D + self.Ke
        return np.linalg.solve(A, np.asarray(u, dtype=float) - self.R @ Kti @ w_f)
