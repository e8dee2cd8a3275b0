"""Command line: run, synthesize, verify, tune-pi."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, dump_config, load_config


def _artifact(cfg: RunConfig, model, path=None):
    from .sim.runner import make_artifact
    from .synthesis import SynthesisArtifact

    if path:
        return SynthesisArtifact.load(path)
    return make_artifact(cfg, model)


def run_and_report(cfg: RunConfig, controller: str, out_dir, artifact_path=None, duration=None) -> dict:
    """Closed-loop run plus every output file; returns the summary dict."""
    from .plotting import make_figures, write_plot_data
    from .rampc import residual_vertices
    from .sim.metrics import compute_metrics, pi_flags, task_a_flags, task_b_flags
    from .sim.runner import build_rampc, make_model, make_task, run_task

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = make_model(cfg)
    task = make_task(cfg)
    art = _artifact(cfg, model, artifact_path) if controller == "rampc" else None
    trace = run_task(task, controller, cfg, art, model, duration=duration)
    stem = f"task_{task.name}_{controller}"
    trace.to_csv(out / f"{stem}_trace.csv")
    m = compute_metrics(trace, task, cfg.theta_hat0)
    if controller == "rampc":
        from .verify import tube_soundness

        mcfg = build_rampc(cfg, model, art, task).cfg
        rv = residual_vertices(model.Ts, art.w_max, art.eps_res)
        m["tube_samples"] = len(trace.samples)
        m["tube_soundness_slack"] = tube_soundness(model, mcfg, trace.samples, rv) if trace.samples else np.nan
        m["epsilon"], m["epsilon_f"] = art.epsilon, art.epsilon_f
        flags = task_a_flags(m) if task.name == "a" else task_b_flags(m)
        flags["set_membership_sound"] = m["b_theta_monotone"] and m["theta_star_contained"]
        flags["tube_sound"] = m["tube_samples"] >= 50 and m["tube_soundness_slack"] >= -1e-6
        if task.name == "a":
            flags["estimate_converges"] = (m["theta_err_end"] < m["theta_err_start"]) and m["theta_err_end"] <= 0.2
    else:
        flags = pi_flags(m)
    m["flags"] = flags
    (out / f"{stem}_summary.json").write_text(json.dumps(m, indent=2, default=float))
    lines = [f"task {task.name}, controller {controller}"]
    for k, v in m.items():
        if k not in ("flags", "errors"):
            lines.append(f"  {k}: {v}")
    lines.append("flags:")
    lines.extend(f"  {k}: {'PASS' if v else 'FAIL'}" for k, v in flags.items())
    (out / f"{stem}_summary.txt").write_text("\n".join(lines) + "\n")
    write_plot_data(trace, out)
    if cfg.figures:
        make_figures(trace, task, out, cfg.theta_star)
    dump_config(cfg, out / f"{stem}_config.yaml")
    return m


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    cfg.task = args.task
    m = run_and_report(cfg, args.controller, args.out, args.artifact, args.duration)
    for k, v in m["flags"].items():
        print(f"{k}: {'PASS' if v else 'FAIL'}")
    return 0


def cmd_synthesize(args) -> int:
    from .sim.runner import make_model

    cfg = load_config(args.config)
    model = make_model(cfg)
    art = _artifact(cfg, model)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    art.save(args.out)
    print(f"epsilon = {art.epsilon:.6f}, epsilon_f = {art.epsilon_f:.6f}, written to {args.out}")
    return 0


def cmd_verify(args) -> int:
    from . import verify

    results = []
    if args.suite in ("solver", "all"):
        results.extend(verify.check_solver(args.cases, args.cases))
    if args.suite in ("polytope", "all"):
        results.append(verify.check_inclusion(args.cases))
    if args.suite in ("tube", "all"):
        from .sim.runner import build_rampc, make_model, make_task, run_task
        from .rampc import residual_vertices

        cfg = load_config(args.config)
        model = make_model(cfg)
        art = _artifact(cfg, model)
        results.append(verify.check_certificates(model, art, np.asarray(cfg.theta_hat0), np.diag(cfg.mpc.Q),
                                                 np.diag(cfg.mpc.R), np.asarray(cfg.theta_bound)))
        task = make_task(cfg)
        cfg.tube_samples = 50
        dur = min(task.duration, args.duration)
        trace = run_task(task, "rampc", cfg, art, model, duration=dur)
        mcfg = build_rampc(cfg, model, art, task).cfg
        slack = verify.tube_soundness(model, mcfg, trace.samples, residual_vertices(model.Ts, art.w_max, art.eps_res))
        r = verify.SuiteResult("tube-soundness", cases=len(trace.samples), worst={"slack": slack})
        r.failures = int(slack < -1e-6)
        results.append(r)
    for r in results:
        print(r.line())
        for n in r.notes:
            print(f"  note: {n}")
    return 0 if all(r.passed for r in results) else 1


def cmd_tune_pi(args) -> int:
    from .sim.runner import tune_pi_gains

    cfg = load_config(args.config)
    kp, ki, t_mpc = tune_pi_gains(cfg, ratio=args.ratio)
    print(f"MPC 90% rise time {t_mpc:.4f} s -> kp = {kp:.6g}, ki = {ki:.6g}")
    return 0


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="wheeltube", description="Robust adaptive tube MPC for wheelchair speed tracking")
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="closed-loop simulation of one task")
    r.add_argument("--task", choices=("a", "b"), required=True)
    r.add_argument("--controller", choices=("rampc", "pi"), required=True)
    r.add_argument("--config", required=True, help="YAML file or preset name (paper_task_a, paper_task_b)")
    r.add_argument("--out", required=True)
    r.add_argument("--artifact", help="synthesis artifact to use instead of synthesizing")
    r.add_argument("--duration", type=float, help="shorten the run (s)")
    r.set_defaults(fn=cmd_run)
    s = sub.add_parser("synthesize", help="offline gain, template and terminal certificate")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synthesize)
    v = sub.add_parser("verify", help="randomized oracle checks")
    v.add_argument("--suite", choices=("solver", "polytope", "tube", "all"), required=True)
    v.add_argument("--cases", type=int, default=1000)
    v.add_argument("--config", default="paper_task_b", help="config for the tube suite")
    v.add_argument("--duration", type=float, default=1.0, help="simulated seconds for the tube suite")
    v.set_defaults(fn=cmd_verify)
    t = sub.add_parser("tune-pi", help="match the PI 90%% rise time to the MPC on a flat-ground step")
    t.add_argument("--config", required=True)
    t.add_argument("--ratio", type=float, default=10.0, help="ki / kp")
    t.set_defaults(fn=cmd_tune_pi)
    args = p.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
