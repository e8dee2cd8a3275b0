"""Task definitions: reference schedules, slope profiles and the gravity disturbance."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

G_ACC = 9.81
TORQUE_BOUND = 6.5


@dataclass(frozen=True)
class Segment:
    """A slope of ``deg`` degrees between ``start`` and ``end`` seconds."""

    start: float
    end: float
    deg: float


@dataclass(frozen=True)
class TaskSpec:
    name: str
    duration: float
    v_max: float
    a_max: float
    u_max: float
    theta_star: np.ndarray
    reference: str = "steps"                         # "steps" | "piecewise" | "sine"
    knots: tuple[tuple[float, float], ...] = ()      # (t, v): held from t on, or interpolated
    sine_amp: float = 0.0
    sine_omega: float = 0.0
    sine_signs: tuple[float, float] = (-1.0, 1.0)
    slopes: tuple[Segment, ...] = ()
    transition: float = 0.3
    noise: float = 0.0
    seed: int = 0
    admissible_tol: float = 1e-6

    def __post_init__(self):
        for name in ("duration", "v_max", "a_max", "u_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.reference not in ("steps", "piecewise", "sine"):
            raise ValueError(f"unknown reference kind {self.reference!r}")
        object.__setattr__(self, "theta_star", np.asarray(self.theta_star, dtype=float))

    def v_d(self, t: float) -> np.ndarray:
        if self.reference == "sine":
            s = self.sine_amp * np.sin(self.sine_omega * t)
            return np.array([self.sine_signs[0] * s, self.sine_signs[1] * s])
        ts, vs = zip(*self.knots)
        if self.reference == "steps":
            k = int(np.searchsorted(ts, t + 1e-12, side="right")) - 1
            v = float(vs[max(k, 0)])
        else:
            v = float(np.interp(t, ts, vs))
        return np.array([v, v])

    def admissible(self, t: float) -> bool:
        """Whether the raw reference respects the speed cap."""
        return bool(np.abs(self.v_d(t)).max() <= self.v_max + self.admissible_tol)

    def slope(self, t: float) -> float:
        """Slope in degrees with raised-cosine onsets and releases of length ``transition``."""
        deg = 0.0
        for seg in self.slopes:
            deg += seg.deg * _window(t, seg.start, seg.end, self.transition)
        return deg


def _window(t, t0, t1, tau):
    if t < t0 or t > t1 + tau:
        return 0.0
    if tau <= 0:
        return 1.0 if t < t1 else 0.0
    if t < t0 + tau:
        return 0.5 - 0.5 * np.cos(np.pi * (t - t0) / tau)
    if t <= t1:
        return 1.0
    return 0.5 + 0.5 * np.cos(np.pi * (t - t1) / tau)


@dataclass
class Disturbance:
    """Gravity torque along the slope plus optional bounded noise, clamped to the torque bound.

    In the identified model's units the torque producing a deceleration of
    ``g sin(slope)`` on both wheels is ``M [1, 1] g sin(slope)``.
    """

    task: TaskSpec
    M: np.ndarray
    bound: float = TORQUE_BOUND
    _rng: np.random.Generator = field(init=False, repr=False)
    _noise_t: float = field(default=-1.0, init=False, repr=False)
    _noise_val: np.ndarray = field(default_factory=lambda: np.zeros(2), init=False, repr=False)

    def __post_init__(self):
        self._rng = np.random.default_rng(self.task.seed)

    def gravity(self, slope_deg: float) -> np.ndarray:
        return self.M @ np.ones(2) * G_ACC * np.sin(np.deg2rad(slope_deg))

    def __call__(self, t: float) -> tuple[np.ndarray, float]:
        slope = self.task.slope(t)
        w = self.gravity(slope)
        if self.task.noise > 0:
            # piecewise constant per control interval keeps the RK4 stages consistent
            key = np.floor(t / 0.005 + 1e-9)
            if key != self._noise_t:
                self._noise_t = key
                self._noise_val = self._rng.uniform(-self.task.noise, self.task.noise, 2)
            w = w + self._noise_val
        return np.clip(w, -self.bound, self.bound), slope


def task_a(theta_star=(0.5, 0.6, 0.3), **kw) -> TaskSpec:
    """Ramp climbing and descending under a 1 m/s speed and 2 m/s^2 acceleration cap."""
    base = dict(
        name="a", duration=10.0, v_max=1.0, a_max=2.0, u_max=24.0, theta_star=theta_star,
        reference="piecewise",
        knots=((0.0, 0.0), (1.0, 1.0), (3.0, 1.0), (3.1, 0.9), (4.5, 0.9), (4.6, 1.0),
               (6.5, 1.0), (7.0, 0.5), (8.0, 0.5), (8.5, 1.0), (10.0, 1.0)),
        slopes=(Segment(3.0, 4.5, 5.0), Segment(6.5, 8.0, -5.0)),
    )
    base.update(kw)
    return TaskSpec(**base)


def task_b(theta_star=(0.5, 0.6, 0.3), **kw) -> TaskSpec:
    """Counter-rotating sinusoid of amplitude 0.5 m/s under a 0.2 m/s cap."""
    base = dict(
        name="b", duration=3.0, v_max=0.2, a_max=1.0, u_max=24.0, theta_star=theta_star,
        reference="sine", sine_amp=0.5, sine_omega=2.0, sine_signs=(-1.0, 1.0),
    )
    base.update(kw)
    return TaskSpec(**base)
