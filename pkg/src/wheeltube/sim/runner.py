"""Closed-loop runs of the tube MPC and the PI baseline on the plant."""
from __future__ import annotations

import time

import numpy as np

from ..config import RunConfig
from ..estimator import ParamState, ResidualSet, SetMembershipEstimator
from ..governor import (Constraints, ReferenceGovernor, minimal_invariant_tube, offset_support,
                        tube_margin)
from ..model import LpvModel, build_model
from ..polytope import build_vertex_map
from ..rampc import AdaptiveTubeMpc, MpcConfig, theta_box_vertices
from ..synthesis import SynthesisArtifact, synthesize, terminal_cost
from .pi import PiController
from .plant import Plant, PlantState
from .tasks import Disturbance, TaskSpec, task_a, task_b
from .trace import SimTrace, TubeSample


def make_task(cfg: RunConfig) -> TaskSpec:
    maker = task_a if cfg.task == "a" else task_b
    return maker(theta_star=tuple(cfg.theta_star), **cfg.task_overrides)


def make_model(cfg: RunConfig) -> LpvModel:
    return build_model(Ts=cfg.Ts)


def make_artifact(cfg: RunConfig, model: LpvModel) -> SynthesisArtifact:
    s, m = cfg.synthesis, cfg.mpc
    return synthesize(model, np.asarray(cfg.theta_bound), np.asarray(cfg.theta_hat0), np.asarray(s.w_max),
                      s.eps_res, np.diag(m.Q), np.diag(m.R), np.diag(s.gain_Q), np.diag(s.gain_R))


def margin_function(model: LpvModel, cons: Constraints, art: SynthesisArtifact, vertex_map, v_cap: float,
                    keep: float = 0.05):
    """Governor tightening from the invariant tube of the current parameter set.

    The tightening per row is capped at ``(1 - keep) b`` so that the steady
    set never becomes empty; the MPC itself does not depend on it.
    """
    S = vertex_map.S

    def margin(ps: ParamState) -> np.ndarray:
        thetas = theta_box_vertices(ps.b_theta)
        loops = []
        for th in thetas:
            A, B = model.eval(th)
            loops.append(A + B @ art.K)
        off = offset_support(model, art.F_e, thetas, ps.theta_hat, v_cap)
        alpha = minimal_invariant_tube(art.F_e, S, loops, art.w_bar + off, tol=1e-9)
        return np.minimum(tube_margin(cons, art.K, S, alpha), (1.0 - keep) * cons.b)

    return margin


def build_rampc(cfg: RunConfig, model: LpvModel, art: SynthesisArtifact, task: TaskSpec) -> AdaptiveTubeMpc:
    m = cfg.mpc
    cons = Constraints.symmetric(task.v_max, task.a_max, task.u_max)
    vm = build_vertex_map(art.F_e)
    mcfg = MpcConfig(m.N, np.diag(m.Q), np.diag(m.R), cons, art.F_e, vm, art.K, art.K_f, art.w_bar,
                     m.alpha_reg)
    ps = ParamState.box(np.asarray(cfg.theta_bound), np.asarray(cfg.theta_hat0))
    est = SetMembershipEstimator(model, ResidualSet.lifted_box(model.Ts, art.w_max, art.eps_res))
    gov = ReferenceGovernor(model, cons, Q_s=np.diag(m.Q_s))
    cache: dict[bytes, np.ndarray] = {}

    def P_fn(theta_hat):
        key = np.asarray(theta_hat).tobytes()
        if key not in cache:
            if len(cache) > 256:
                cache.clear()
            cache[key] = terminal_cost(model, theta_hat, art.K_f, mcfg.Q, mcfg.R).P
        return cache[key]

    margin = margin_function(model, cons, art, vm, task.v_max) if m.adaptive_margin else None
    return AdaptiveTubeMpc(model, mcfg, est, gov, ps, P_fn, margin, rho=m.rho)


def run_task(task: TaskSpec, controller: str, cfg: RunConfig, artifact: SynthesisArtifact | None = None,
             model: LpvModel | None = None, duration: float | None = None, progress=None) -> SimTrace:
    """Simulate ``task`` under ``controller`` ('rampc' or 'pi'); always returns a full trace."""
    if controller not in ("rampc", "pi"):
        raise ValueError(f"unknown controller {controller!r}")
    model = model or make_model(cfg)
    Ts = model.Ts
    ts = np.asarray(task.theta_star, dtype=float)
    plant = Plant(model.motor, model.body, ts[0], ts[1])
    dist = Disturbance(task, plant.M)
    n = int(round((duration or task.duration) / Ts))
    trace = SimTrace(task.name, controller, Ts)
    if controller == "rampc":
        art = artifact or make_artifact(cfg, model)
        law = build_rampc(cfg, model, art, task)
        every = max(1, n // max(cfg.tube_samples, 1))
    else:
        law = PiController(cfg.pi.kp, cfg.pi.ki, task.u_max, Ts)
    st = PlantState.rest()
    u_hold = np.zeros(2)
    t_start = time.perf_counter()
    for k in range(n):
        t = k * Ts
        x = plant.measure(st)
        v_d = task.v_d(t)
        rec = {}
        if controller == "rampc":
            try:
                u, sol, r = law.step(x, v_d)
                d = r.diag
                rec = dict(y_target=r.target.y_s, x_s=r.pair.x_s, u_s=r.pair.u_s,
                           objective=sol.objective, feasible=float(sol.feasible), fallback=float(d.fallback),
                           iterations=d.iterations, kkt_residual=d.kkt_residual, solve_time=d.solve_time,
                           estimator_flag=float(r.estimator_flag), max_alpha=d.max_alpha)
                if sol.feasible and k % every == 0:
                    trace.samples.append(TubeSample(k, x.copy(), r.pair.x_s.copy(), r.pair.u_s.copy(),
                                                    law.ps.b_theta.copy(), sol.mu.copy(), sol.alpha.copy()))
            except Exception as exc:  # the run always completes; the step is flagged
                trace.errors.append(f"step {k}: {type(exc).__name__}: {exc}")
                u = u_hold
                rec = dict(feasible=0.0, fallback=1.0)
            rec.update(b_theta=law.ps.b_theta, theta_hat=law.ps.theta_hat)
        else:
            ref = np.clip(v_d, -task.v_max, task.v_max)
            u = law.step(x[:2], ref)
            rec = dict(y_target=ref, x_s=np.r_[ref, 0.0, 0.0], feasible=1.0, fallback=0.0)
        u_hold = np.asarray(u, dtype=float)
        trace.append(t=t, v=x[:2], a=x[2:], u=u_hold, v_d=v_d, w_f=st.w_f, slope=st.slope, **rec)
        st = plant.step(st, u_hold, Ts, dist, t)
        if progress is not None:
            progress(k, n)
    trace.wall_time = time.perf_counter() - t_start
    return trace


def step_task(cfg: RunConfig, v_step: float = 0.5, duration: float = 2.0) -> TaskSpec:
    """Flat-ground step used to match the PI rise time to the MPC."""
    return task_a(theta_star=tuple(cfg.theta_star), slopes=(), reference="steps", knots=((0.0, v_step),),
                  duration=duration)


def tune_pi_gains(cfg: RunConfig, ratio: float = 10.0, v_step: float = 0.5,
                  duration: float = 2.0) -> tuple[float, float, float]:
    """PI gains (ki = ratio kp) whose 90% rise time on a flat-ground step matches the MPC's.

    Returns ``(kp, ki, mpc_rise_time)``.
    """
    import copy

    from .pi import rise_time, tune_pi

    model = make_model(cfg)
    task = step_task(cfg, v_step, duration)
    tr = run_task(task, "rampc", cfg, make_artifact(cfg, model), model)
    t_mpc = rise_time(tr.col("t"), tr.col("v"), v_step)

    def response(kp, ki):
        c = copy.deepcopy(cfg)
        c.pi.kp, c.pi.ki = kp, ki
        t = run_task(task, "pi", c, model=model)
        return rise_time(t.col("t"), t.col("v"), v_step)

    kp, ki = tune_pi(response, t_mpc, ratio)
    return kp, ki, t_mpc
