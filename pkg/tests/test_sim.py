import json

import numpy as np
import pytest
import yaml

from wheeltube.cli import main
from wheeltube.config import PRESETS, dump_config, from_dict, load_config
from wheeltube.model import PAPER_BODY, PAPER_MOTOR
from wheeltube.sim.metrics import compute_metrics, switch_mask
from wheeltube.sim.pi import PiController, rise_time, tune_pi
from wheeltube.sim.plant import Plant, PlantState
from wheeltube.sim.runner import make_task, run_task
from wheeltube.sim.tasks import Disturbance, task_a, task_b
from wheeltube.sim.trace import SimTrace, column_names


def test_presets_load_with_numeric_types():
    for name in PRESETS:
        cfg = load_config(name)
        assert isinstance(cfg.mpc.rho, float) and cfg.mpc.rho == 1e7
        assert cfg.task == name[-1]
        assert cfg.mpc.N == 3


def test_config_rejects_unknown_keys_and_bad_values():
    with pytest.raises(ValueError):
        from_dict({"mpc": {"horizon": 3}})
    with pytest.raises(ValueError):
        from_dict({"task": "c"})
    with pytest.raises(FileNotFoundError):
        load_config("no_such_preset")


def test_config_roundtrip(tmp_path):
    cfg = load_config("paper_task_b")
    dump_config(cfg, tmp_path / "c.yaml")
    back = load_config(tmp_path / "c.yaml")
    assert back == cfg
    raw = yaml.safe_load((tmp_path / "c.yaml").read_text())
    raw["mpc"]["rho"] = "2.5e6"  # YAML 1.1 keeps this as a string
    assert from_dict(raw).mpc.rho == 2.5e6


def test_task_a_reference_and_slopes():
    task = task_a()
    np.testing.assert_allclose(task.v_d(0.5), [0.5, 0.5])
    np.testing.assert_allclose(task.v_d(2.0), [1.0, 1.0])
    assert task.slope(4.0) == pytest.approx(5.0)
    assert task.slope(7.5) == pytest.approx(-5.0)
    assert task.slope(3.15) == pytest.approx(2.5)  # halfway through the onset
    assert task.slope(2.0) == 0.0


def test_task_b_admissibility():
    task = task_b()
    assert task.admissible(0.0)
    assert not task.admissible(np.pi / 4)  # 0.5 sin(pi/2) exceeds the 0.2 cap
    np.testing.assert_allclose(task.v_d(np.pi / 4), [-0.5, 0.5])


def test_gravity_disturbance_gives_g_sin_deceleration():
    task = task_a()
    plant = Plant(PAPER_MOTOR, PAPER_BODY, 0.5, 0.6)
    dist = Disturbance(task, plant.M)
    w, slope = dist(4.0)
    acc = plant.M_inv @ w
    np.testing.assert_allclose(acc, 9.81 * np.sin(np.deg2rad(5.0)), rtol=1e-12)


def test_pi_integrates_and_clamps():
    pi = PiController(kp=2.0, ki=10.0, u_max=24.0, Ts=0.01)
    u = pi.step(np.zeros(2), np.ones(2))
    np.testing.assert_allclose(u, 2.0 + 10.0 * 0.01)
    big = PiController(kp=1000.0, ki=1000.0, u_max=24.0, Ts=0.01)
    for _ in range(50):
        u = big.step(np.zeros(2), np.ones(2))
    np.testing.assert_allclose(u, 24.0)
    # anti-windup: the integrator stopped growing while saturated
    assert np.all(big._z <= 0.011)


def test_pi_tuning_bisection_hits_target():
    # first-order plant: rise time = ln(10) / kp
    kp, ki = tune_pi(lambda kp, ki: np.log(10) / kp, target_rise=0.05, ratio=10.0)
    assert kp == pytest.approx(np.log(10) / 0.05, rel=1e-6)
    assert ki == pytest.approx(10 * kp)


def test_rise_time():
    t = np.linspace(0, 1, 101)
    v = np.column_stack([t, 2 * t])
    assert rise_time(t, v, 0.5) == pytest.approx(0.45)
    assert rise_time(t, v, 5.0) == np.inf


def test_switch_mask():
    t = np.arange(0, 1, 0.1)
    adm = np.array([1, 1, 1, 0, 0, 0, 1, 1, 1, 1], dtype=bool)
    m = switch_mask(t, adm, 0.15)
    assert m.tolist() == [True, True, False, True, True, False, True, True, False, False]


def test_trace_csv_roundtrip(tmp_path):
    tr = SimTrace("a", "pi", 0.005)
    tr.append(t=0.0, v=[0.1, 1 / 3], a=[0.0, 0.0], u=[1.0, 2.0])
    tr.append(t=0.005, v=[np.pi, -1e-17], a=[1.0, 2.0], u=[3.0, 4.0])
    tr.to_csv(tmp_path / "t.csv")
    back = SimTrace.from_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(back.data, tr.data)  # full precision, NaN included
    assert len(column_names()) == back.data.shape[1]
    with pytest.raises(ValueError):
        tr.append(v=[1.0])


def test_pi_run_on_flat_step_settles():
    cfg = load_config("paper_task_a")
    cfg.task_overrides = {"reference": "steps", "knots": ((0.0, 0.5),), "slopes": ()}
    task = make_task(cfg)
    tr = run_task(task, "pi", cfg, duration=1.5)
    v = tr.col("v")
    np.testing.assert_allclose(v[-1], 0.5, atol=5e-3)
    m = compute_metrics(tr, task)
    assert m["steps"] == 300 and not m["errors"]


def test_rampc_short_run_is_safe_and_sound():
    cfg = load_config("paper_task_a")
    task = make_task(cfg)
    tr = run_task(task, "rampc", cfg, duration=0.3)
    m = compute_metrics(tr, task, cfg.theta_hat0)
    assert m["fallbacks"] == 0 and m["feasibility_rate"] == 1.0
    assert m["accel_violations"] == 0 and m["speed_violations"] == 0
    assert m["b_theta_monotone"] and m["theta_star_contained"]


def test_cli_run_and_synthesize(tmp_path, capsys):
    art = tmp_path / "art.txt"
    assert main(["synthesize", "--config", "paper_task_b", "--out", str(art)]) == 0
    assert art.exists()
    out = tmp_path / "run"
    assert main(["run", "--task", "b", "--controller", "rampc", "--config", "paper_task_b",
                 "--out", str(out), "--artifact", str(art), "--duration", "0.1"]) == 0
    summary = json.loads((out / "task_b_rampc_summary.json").read_text())
    assert summary["fallbacks"] == 0
    for name in ("task_b_rampc_trace.csv", "task_b_rampc_summary.txt", "speed.csv", "accel_voltage.csv",
                 "parameters.csv", "response.png", "parameters.png", "task_b_rampc_config.yaml"):
        assert (out / name).exists(), name
    assert "accel_safe: PASS" in capsys.readouterr().out


def test_cli_verify_small_suite(capsys):
    assert main(["verify", "--suite", "polytope", "--cases", "20"]) == 0
    assert "PASS" in capsys.readouterr().out
