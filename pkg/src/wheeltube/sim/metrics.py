"""Run metrics and the per-run pass/fail flags."""
from __future__ import annotations

import numpy as np

from .tasks import TaskSpec
from .trace import SimTrace

TOL = 1e-6


def _violations(x, cap):
    over = np.abs(x) - cap
    bad = over > TOL
    return int(bad.any(axis=1).sum()) if x.ndim > 1 else int(bad.sum()), float(max(over.max(), 0.0))


def switch_mask(t, admissible, transient: float) -> np.ndarray:
    """True within ``transient`` seconds after every change of admissibility (and after t = 0)."""
    mask = t < t[0] + transient
    for s in np.nonzero(np.diff(admissible.astype(int)))[0] + 1:
        mask |= (t >= t[s]) & (t < t[s] + transient)
    return mask


def compute_metrics(trace: SimTrace, task: TaskSpec, theta_hat0=None) -> dict:
    """Tracking error is measured against the governor's closest admissible reference."""
    t = trace.col("t")
    v, a, u = trace.col("v"), trace.col("a"), trace.col("u")
    y_ref = trace.col("y_target")
    y_pair = trace.y_s
    err = np.abs(v - y_ref)
    m: dict = {"task": task.name, "controller": trace.controller, "steps": int(len(t))}
    m["max_err"] = err.max(axis=0).tolist()
    m["max_err_vs_used_pair"] = np.abs(v - y_pair).max(axis=0).tolist()
    m["max_err_vs_raw_reference"] = np.abs(v - trace.col("v_d")).max(axis=0).tolist()
    for name, x, cap in (("speed", v, task.v_max), ("accel", a, task.a_max), ("voltage", u, task.u_max)):
        n, mag = _violations(x, cap)
        m[f"{name}_violations"] = n
        m[f"{name}_max_excess"] = mag
    m["max_abs_speed"] = float(np.abs(v).max())
    m["max_abs_accel"] = float(np.abs(a).max())
    m["max_abs_voltage"] = float(np.abs(u).max())
    feas = trace.col("feasible")
    m["feasibility_rate"] = float(np.mean(feas == 1.0))
    m["fallbacks"] = int(np.nansum(trace.col("fallback")))
    m["errors"] = list(trace.errors)
    m["wall_time"] = trace.wall_time
    m["solve_time_total"] = float(np.nansum(trace.col("solve_time")))
    if trace.controller == "rampc":
        b = trace.col("b_theta")
        th = trace.col("theta_hat")
        ts = np.asarray(task.theta_star)
        q = ts.size
        F = np.vstack([np.eye(q), -np.eye(q)])
        m["b_theta_monotone"] = bool(np.all(np.diff(b, axis=0) <= 1e-9))
        m["theta_star_contained"] = bool(np.all(b - F @ ts >= -1e-9))
        m["estimator_flags"] = int(np.nansum(trace.col("estimator_flag")))
        m["theta_err_end"] = float(np.linalg.norm(th[-1] - ts))
        if theta_hat0 is not None:
            m["theta_err_start"] = float(np.linalg.norm(np.asarray(theta_hat0) - ts))
        m["theta_hat_end"] = th[-1].tolist()
        m["max_alpha"] = float(np.nanmax(trace.col("max_alpha"))) if np.any(np.isfinite(trace.col("max_alpha"))) else np.nan
    if task.reference == "sine":
        adm = np.array([task.admissible(tt) for tt in t])
        trans = switch_mask(t, adm, 0.2)
        inad = ~adm
        m["inadmissible_fraction"] = float(inad.mean())
        m["clamp_deviation"] = float(np.abs(np.abs(v[inad]) - task.v_max).max()) if inad.any() else 0.0
        sel = adm & ~trans
        m["admissible_err"] = float(err[sel].max()) if sel.any() else 0.0
    return m


def task_a_flags(m: dict) -> dict:
    return {
        "safety": m["speed_violations"] == 0 and m["accel_violations"] == 0 and m["voltage_violations"] == 0,
        "tracking": max(m["max_err"]) <= 0.10,
        "feasible": m["feasibility_rate"] == 1.0 and m["fallbacks"] == 0,
    }


def task_b_flags(m: dict) -> dict:
    return {
        "accel_safe": m["accel_violations"] == 0,
        "clamping": m["clamp_deviation"] <= 0.05,
        "tracking": m["admissible_err"] <= 0.05,
        "feasible": m["feasibility_rate"] == 1.0 and m["fallbacks"] == 0,
    }


def pi_flags(m: dict) -> dict:
    return {"accel_violated": m["accel_violations"] >= 1, "error_large": max(m["max_err"]) >= 0.10}
