"""Decoupled per-wheel PI baseline and its rise-time tuning."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class PiController:
    """``u = kp e + ki int(e)`` per wheel, clamped at ``u_max``.

    The integrator is frozen while the output is saturated in the direction
    of the error (conditional integration anti-windup).
    """

    kp: float
    ki: float
    u_max: float
    Ts: float
    _z: np.ndarray = field(default_factory=lambda: np.zeros(2), init=False, repr=False)

    def __post_init__(self):
        if self.kp < 0 or self.ki < 0:
            raise ValueError("PI gains must be nonnegative")

    def reset(self) -> None:
        self._z = np.zeros(2)

    def step(self, v, v_ref) -> np.ndarray:
        e = np.asarray(v_ref, dtype=float) - np.asarray(v, dtype=float)
        z_new = self._z + self.Ts * e
        u_raw = self.kp * e + self.ki * z_new
        u = np.clip(u_raw, -self.u_max, self.u_max)
        windup = (u != u_raw) & (np.sign(e) == np.sign(u_raw))
        self._z = np.where(windup, self._z, z_new)
        return u


def rise_time(t, v, v_final: float, frac: float = 0.9) -> float:
    """First time the response reaches ``frac`` of ``v_final`` (wheel-wise max)."""
    t = np.asarray(t)
    v = np.atleast_2d(np.asarray(v).T).T
    out = 0.0
    for i in range(v.shape[1]):
        hit = np.nonzero(v[:, i] >= frac * v_final)[0]
        if hit.size == 0:
            return np.inf
        out = max(out, float(t[hit[0]]))
    return out


def tune_pi(step_response, target_rise: float, ratio: float, kp_lo: float = 1.0, kp_hi: float = 1000.0,
            iters: int = 40) -> tuple[float, float]:
    """Bisection on ``kp`` (with ``ki = ratio kp``) to match a 90% rise time.

    ``step_response(kp, ki)`` returns the rise time of the closed loop; it
    must decrease with ``kp`` over the bracket.
    """
    if step_response(kp_hi, ratio * kp_hi) > target_rise:
        return kp_hi, ratio * kp_hi
    for _ in range(iters):
        mid = np.sqrt(kp_lo * kp_hi)
        if step_response(mid, ratio * mid) > target_rise:
            kp_lo = mid
        else:
            kp_hi = mid
    return kp_hi, ratio * kp_hi
