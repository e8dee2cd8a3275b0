"""Acceptance criteria at their stated tolerances; one PASS/FAIL line each.

The closed-loop runs are full length (Task A 10 s, Task B 3 s) and shared
between criteria through module-scoped fixtures.
"""
import numpy as np
import pytest

from wheeltube.config import load_config
from wheeltube.rampc import residual_vertices
from wheeltube.sim.metrics import compute_metrics
from wheeltube.sim.runner import build_rampc, make_artifact, make_model, make_task, run_task
from wheeltube.verify import check_certificates, check_inclusion, check_solver, tube_soundness

TOL = 1e-6


class Run:
    def __init__(self, preset, controller):
        self.cfg = load_config(preset)
        self.model = make_model(self.cfg)
        self.task = make_task(self.cfg)
        self.art = make_artifact(self.cfg, self.model) if controller == "rampc" else None
        self.trace = run_task(self.task, controller, self.cfg, self.art, self.model)
        self.m = compute_metrics(self.trace, self.task, self.cfg.theta_hat0)

    def tube_slack(self):
        mcfg = build_rampc(self.cfg, self.model, self.art, self.task).cfg
        rv = residual_vertices(self.model.Ts, self.art.w_max, self.art.eps_res)
        return tube_soundness(self.model, mcfg, self.trace.samples, rv)


@pytest.fixture(scope="module")
def run_a():
    return Run("paper_task_a", "rampc")


@pytest.fixture(scope="module")
def run_a_pi():
    return Run("paper_task_a", "pi")


@pytest.fixture(scope="module")
def run_b():
    return Run("paper_task_b", "rampc")


def test_c01_task_a_safety(run_a, report_line):
    m = run_a.m
    v, a, u = (np.abs(run_a.trace.col(c)).max() for c in ("v", "a", "u"))
    ok = v <= 1 + TOL and a <= 2 + TOL and u <= 24 + TOL and run_a.trace.wall_time <= 600
    report_line(1, "Task A safety", ok, f"max|v| {v:.6f}, max|a| {a:.6f}, max|u| {u:.4f}, "
                f"runtime {run_a.trace.wall_time:.1f} s")
    assert ok and m["errors"] == []


def test_c02_task_a_tracking(run_a, report_line):
    err = run_a.m["max_err"]
    ok = max(err) <= 0.10
    report_line(2, "Task A tracking", ok, f"per-wheel max error {err[0]:.4f}, {err[1]:.4f}")
    assert ok


def test_c03_pi_baseline(run_a_pi, report_line):
    m = run_a_pi.m
    ok = m["accel_violations"] >= 1 and max(m["max_err"]) >= 0.10
    report_line(3, "PI baseline on Task A", ok,
                f"acceleration violations {m['accel_violations']} (max|a| {m['max_abs_accel']:.4f}), "
                f"max error {max(m['max_err']):.4f}")
    assert ok


def test_c04_task_b(run_b, report_line):
    m = run_b.m
    a = np.abs(run_b.trace.col("a")).max()
    ok = a <= 1 + TOL and m["clamp_deviation"] <= 0.05 and m["admissible_err"] <= 0.05
    report_line(4, "Task B clamping and tracking", ok,
                f"max|a| {a:.6f}, clamp deviation {m['clamp_deviation']:.4f}, "
                f"admissible error {m['admissible_err']:.4f}")
    assert ok


def test_c05_feasibility(run_a, run_b, report_line):
    rates = [r.m["feasibility_rate"] for r in (run_a, run_b)]
    falls = [r.m["fallbacks"] for r in (run_a, run_b)]
    ok = rates == [1.0, 1.0] and falls == [0, 0]
    report_line(5, "QP feasibility", ok, f"feasible rate A {rates[0]:.4f}, B {rates[1]:.4f}; "
                f"fallbacks A {falls[0]}, B {falls[1]}")
    assert ok


def test_c06_set_membership(run_a, run_b, report_line):
    ok = all(r.m["b_theta_monotone"] and r.m["theta_star_contained"] for r in (run_a, run_b))
    report_line(6, "Set-membership soundness", ok,
                f"monotone A {run_a.m['b_theta_monotone']}, B {run_b.m['b_theta_monotone']}; "
                f"contained A {run_a.m['theta_star_contained']}, B {run_b.m['theta_star_contained']}")
    assert ok


def test_c07_estimate(run_a, report_line):
    err = run_a.m["theta_err_end"]
    ok = err < 0.559 and err <= 0.2
    report_line(7, "Parameter estimate on Task A", ok,
                f"|theta_hat_end - theta*| = {err:.4f} (start {run_a.m['theta_err_start']:.4f})")
    assert ok


def test_c08_solver_oracles(report_line):
    lp, qp = check_solver(1000, 1000)
    ok = lp.passed and qp.passed and lp.cases == 1000 and qp.cases == 1000
    report_line(8, "Solver against oracles", ok, f"{lp.line()}; {qp.line()}")
    assert ok


def test_c09_inclusion(report_line):
    r = check_inclusion(1000)
    ok = r.passed and r.cases == 1000
    report_line(9, "Inclusion certificates", ok, r.line())
    assert ok


def test_c10_certificates_and_tube(run_a, run_b, report_line):
    certs = [check_certificates(r.model, r.art, np.asarray(r.cfg.theta_hat0), np.diag(r.cfg.mpc.Q),
                                np.diag(r.cfg.mpc.R), np.asarray(r.cfg.theta_bound)).worst for r in (run_a, run_b)]
    w = {k: max(c[k] for c in certs) for k in ("epsilon", "epsilon_f", "lyapunov_residual")}
    slacks = [r.tube_slack() for r in (run_a, run_b)]
    counts = [len(r.trace.samples) for r in (run_a, run_b)]
    ok = (w["epsilon"] < 1 and w["epsilon_f"] < 1 and w["lyapunov_residual"] <= 1e-8
          and min(slacks) >= -1e-6 and min(counts) >= 50)
    report_line(10, "Certificates and tube soundness", ok,
                f"eps {w['epsilon']:.4f}, eps_f {w['epsilon_f']:.4f}, Lyapunov residual "
                f"{w['lyapunov_residual']:.2e}; tube slack A {slacks[0]:.2e} ({counts[0]} steps), "
                f"B {slacks[1]:.2e} ({counts[1]} steps)")
    assert ok
