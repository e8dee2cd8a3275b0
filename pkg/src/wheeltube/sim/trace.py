"""Per-step closed-loop records and their CSV form."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# column name -> width of the stored vector
COLUMNS = {
    "t": 1, "v": 2, "a": 2, "u": 2, "v_d": 2, "y_target": 2, "x_s": 4, "u_s": 2,
    "b_theta": 6, "theta_hat": 3, "w_f": 2, "slope": 1, "objective": 1, "feasible": 1,
    "fallback": 1, "iterations": 1, "kkt_residual": 1, "solve_time": 1, "estimator_flag": 1,
    "max_alpha": 1,
}


def column_names() -> list[str]:
    out = []
    for name, n in COLUMNS.items():
        out.extend([name] if n == 1 else [f"{name}_{i + 1}" for i in range(n)])
    return out


@dataclass
class TubeSample:
    """What the tube soundness check needs from one step."""

    k: int
    x: np.ndarray
    x_s: np.ndarray
    u_s: np.ndarray
    b_theta: np.ndarray
    mu: np.ndarray
    alpha: np.ndarray


@dataclass
class SimTrace:
    task: str
    controller: str
    Ts: float
    rows: list[np.ndarray] = field(default_factory=list)
    samples: list[TubeSample] = field(default_factory=list)
    wall_time: float = 0.0
    errors: list[str] = field(default_factory=list)

    def append(self, **vals) -> None:
        row = []
        for name, n in COLUMNS.items():
            v = np.atleast_1d(np.asarray(vals.get(name, np.full(n, np.nan)), dtype=float)).ravel()
            if v.size != n:
                raise ValueError(f"{name} expects {n} values, got {v.size}")
            row.append(v)
        self.rows.append(np.concatenate(row))

    @property
    def data(self) -> np.ndarray:
        return np.array(self.rows) if self.rows else np.zeros((0, sum(COLUMNS.values())))

    def col(self, name: str) -> np.ndarray:
        start = 0
        for key, n in COLUMNS.items():
            if key == name:
                out = self.data[:, start:start + n]
                return out[:, 0] if n == 1 else out
            start += n
        raise KeyError(name)

    @property
    def y_s(self) -> np.ndarray:
        return self.col("x_s")[:, :2]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(column_names())
            for row in self.rows:
                w.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path, task: str = "", controller: str = "", Ts: float = 0.005) -> "SimTrace":
        tr = cls(task, controller, Ts)
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            head = next(r)
            if head != column_names():
                raise ValueError("unexpected trace columns")
            tr.rows = [np.array([float(x) for x in row]) for row in r]
        return tr


def write_series(path, header: list[str], cols: list[np.ndarray]) -> None:
    """Plot-ready CSV: one column per series, full precision."""
    arr = np.column_stack(cols)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in arr:
            w.writerow([repr(float(x)) for x in row])
