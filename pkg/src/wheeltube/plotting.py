"""Figures and plot-ready series for a closed-loop run."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .sim.tasks import TaskSpec
from .sim.trace import SimTrace, write_series


def write_plot_data(trace: SimTrace, out_dir) -> list[Path]:
    out = Path(out_dir)
    t = trace.col("t")
    files = []
    v, vd, y = trace.col("v"), trace.col("v_d"), trace.col("y_target")
    p = out / "speed.csv"
    write_series(p, ["t", "v_1", "v_2", "v_d_1", "v_d_2", "y_s_1", "y_s_2"],
                 [t, v[:, 0], v[:, 1], vd[:, 0], vd[:, 1], y[:, 0], y[:, 1]])
    files.append(p)
    a, u = trace.col("a"), trace.col("u")
    p = out / "accel_voltage.csv"
    write_series(p, ["t", "a_1", "a_2", "u_1", "u_2"], [t, a[:, 0], a[:, 1], u[:, 0], u[:, 1]])
    files.append(p)
    if trace.controller == "rampc":
        th, b = trace.col("theta_hat"), trace.col("b_theta")
        p = out / "parameters.csv"
        cols = [t] + [th[:, i] for i in range(3)] + [b[:, i] for i in range(6)]
        write_series(p, ["t", "theta_hat_1", "theta_hat_2", "theta_hat_3"] + [f"b_theta_{i + 1}" for i in range(6)],
                     cols)
        files.append(p)
    return files


def make_figures(trace: SimTrace, task: TaskSpec, out_dir, theta_star=None) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    t = trace.col("t")
    files = []
    fig, axes = plt.subplots(3, 1, figsize=(7, 7.5), sharex=True)
    v, vd, y = trace.col("v"), trace.col("v_d"), trace.col("y_target")
    for i, c in enumerate(("C0", "C1")):
        axes[0].plot(t, v[:, i], c, label=f"wheel {i + 1}")
        axes[0].plot(t, vd[:, i], c + "--", lw=0.8)
        axes[0].plot(t, y[:, i], c + ":", lw=0.8)
    axes[0].axhline(task.v_max, color="k", lw=0.6)
    axes[0].axhline(-task.v_max, color="k", lw=0.6)
    axes[0].set_ylabel("speed (m/s)")
    axes[0].legend(loc="best", fontsize=8)
    a = trace.col("a")
    axes[1].plot(t, a)
    axes[1].axhline(task.a_max, color="k", lw=0.6)
    axes[1].axhline(-task.a_max, color="k", lw=0.6)
    axes[1].set_ylabel("accel (m/s$^2$)")
    axes[2].plot(t, trace.col("u"))
    axes[2].set_ylabel("voltage (V)")
    axes[2].set_xlabel("time (s)")
    fig.tight_layout()
    p = out / "response.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    files.append(p)
    if trace.controller == "rampc":
        th = trace.col("theta_hat")
        b = trace.col("b_theta")
        fig, axes = plt.subplots(3, 1, figsize=(7, 6), sharex=True)
        for i, name in enumerate(("beta", "gamma", "beta*gamma")):
            axes[i].fill_between(t, -b[:, i + 3], b[:, i], color="0.85", label="bounds")
            axes[i].plot(t, th[:, i], "C0", label="estimate")
            if theta_star is not None:
                axes[i].axhline(theta_star[i], color="C3", ls="--", lw=0.8, label="true")
            axes[i].set_ylabel(name)
        axes[0].legend(loc="best", fontsize=8)
        axes[-1].set_xlabel("time (s)")
        fig.tight_layout()
        p = out / "parameters.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        files.append(p)
    return files
