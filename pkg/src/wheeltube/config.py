"""Run configuration: YAML files and the bundled presets."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, asdict
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

PRESETS = ("paper_task_a", "paper_task_b")


@dataclass
class SynthesisConfig:
    w_max: list[float] = field(default_factory=lambda: [20.0, 20.0])   # m/s^3, lumped jerk bound
    eps_res: float = 1.5e-3                                            # m/s, speed-row residual bound
    gain_Q: list[float] = field(default_factory=lambda: [1000.0, 1000.0, 10.0, 10.0])
    gain_R: list[float] = field(default_factory=lambda: [0.01, 0.01])


@dataclass
class MpcSettings:
    N: int = 3
    Q: list[float] = field(default_factory=lambda: [1000.0, 1000.0, 1000.0, 1000.0])
    R: list[float] = field(default_factory=lambda: [0.001, 0.001])
    Q_s: list[float] = field(default_factory=lambda: [1.0, 1.0])
    alpha_reg: float = 1e-5
    rho: float = 1e6              # weight on reaching the governor's pair
    adaptive_margin: bool = True  # tighten the governor by the invariant tube of Theta(k)


@dataclass
class PiSettings:
    kp: float = 60.0
    ki: float = 600.0


@dataclass
class RunConfig:
    task: str = "a"
    theta_star: list[float] = field(default_factory=lambda: [0.5, 0.6, 0.3])
    theta_hat0: list[float] = field(default_factory=lambda: [0.55, 0.1, 0.055])
    theta_bound: list[float] = field(default_factory=lambda: [0.8, 0.8, 0.64])
    Ts: float = 0.005
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    mpc: MpcSettings = field(default_factory=MpcSettings)
    pi: PiSettings = field(default_factory=PiSettings)
    task_overrides: dict = field(default_factory=dict)
    tube_samples: int = 50
    figures: bool = True

    def __post_init__(self):
        if self.task not in ("a", "b"):
            raise ValueError(f"task must be 'a' or 'b', got {self.task!r}")
        if len(self.theta_star) != 3 or len(self.theta_hat0) != 3 or len(self.theta_bound) != 3:
            raise ValueError("parameter vectors must have three entries")
        if np.any(np.asarray(self.theta_bound) <= 0):
            raise ValueError("theta_bound must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data: dict):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kw = {}
    for k, v in data.items():
        sub = {"synthesis": SynthesisConfig, "mpc": MpcSettings, "pi": PiSettings}.get(k) if cls is RunConfig else None
        kw[k] = _build(sub, v or {}) if sub else _coerce(known[k].type, v)
    return cls(**kw)


def _coerce(kind: str, v):
    # YAML 1.1 reads "1.0e7" as a string; cast numbers by the declared field type
    if kind == "float":
        return float(v)
    if kind == "int":
        return int(v)
    if kind == "bool":
        if isinstance(v, str):
            return v.strip().lower() in ("1", "true", "yes", "on")
        return bool(v)
    if kind == "list[float]":
        return [float(x) for x in v]
    return v


def from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, dict(data or {}))


def load_config(source) -> RunConfig:
    """``source`` is a YAML path or the name of a bundled preset."""
    name = str(source)
    if name in PRESETS:
        text = resources.files("wheeltube.presets").joinpath(f"{name}.yaml").read_text()
    else:
        path = Path(name)
        if not path.exists():
            raise FileNotFoundError(f"no config file or preset named {name!r}")
        text = path.read_text()
    return from_dict(yaml.safe_load(text))


def dump_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
