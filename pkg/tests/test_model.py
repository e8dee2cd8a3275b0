import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from wheeltube.model import (PAPER_BODY, PAPER_MOTOR, BodyParams, MotorParams, SingularModelError,
                             build_model, continuous_matrices, theta_of)
from wheeltube.sim.plant import Plant, PlantState

params = st.floats(-0.8, 0.8)


@settings(max_examples=50, deadline=None)
@given(params, params)
def test_lpv_split_equals_euler_of_continuous_model(beta, gamma):
    m = build_model()
    Ac, Bc, _ = continuous_matrices(PAPER_MOTOR, PAPER_BODY.mass_inv(beta), PAPER_BODY.damping(gamma))
    A, B = m.eval(theta_of(beta, gamma))
    np.testing.assert_allclose(A, np.eye(4) + m.Ts * Ac, atol=1e-12)
    np.testing.assert_allclose(B, m.Ts * Bc, atol=1e-12)


def test_euler_is_first_order_accurate():
    # one-step error against the matrix exponential shrinks as Ts^2
    errs = []
    for Ts in (0.004, 0.002, 0.001):
        m = build_model(Ts=Ts)
        Ac, _, _ = continuous_matrices(PAPER_MOTOR, PAPER_BODY.mass_inv(0.5), PAPER_BODY.damping(0.6))
        A, _ = m.eval(theta_of(0.5, 0.6))
        errs.append(np.abs(A - expm(Ac * Ts)).max())
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)


def test_regressors_reproduce_step(rng):
    m = build_model()
    for _ in range(20):
        x, u, th = rng.normal(size=4), rng.normal(size=2), rng.uniform(-0.8, 0.8, 3)
        Phi, phi = m.regressors(x, u)
        np.testing.assert_allclose(Phi @ th + phi, m.step(x, u, th), atol=1e-12)


def test_disturbance_enters_acceleration_rows():
    m = build_model()
    x = m.step(np.zeros(4), np.zeros(2), np.zeros(3), w=np.array([1.0, -2.0]))
    np.testing.assert_allclose(x, [0, 0, m.Ts, -2 * m.Ts])


def test_parameter_validation():
    with pytest.raises(ValueError):
        MotorParams(0.0, 1, 1, 1, 1, 1, 1, 1)
    with pytest.raises(SingularModelError):
        BodyParams(np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        build_model(Ts=0.0)


def test_plant_rk4_matches_adaptive_integrator():
    plant = Plant(PAPER_MOTOR, PAPER_BODY, 0.5, 0.6)
    u = np.array([6.0, -3.0])
    dist = lambda t: (np.array([0.3 * np.sin(5 * t), 0.1]), 0.0)
    ps = PlantState.rest()
    t = 0.0
    for _ in range(40):
        ps = plant.step(ps, u, 0.005, dist, t0=t)
        t += 0.005

    def rhs(t, y):
        dv, di = plant.derivatives(y[:2], y[2:], u, dist(t)[0])
        return np.concatenate([dv, di])

    ref = solve_ivp(rhs, (0, t), np.zeros(4), rtol=1e-12, atol=1e-14, method="DOP853").y[:, -1]
    np.testing.assert_allclose(np.concatenate([ps.v, ps.i_c]), ref, atol=1e-9)


def test_plant_steady_speed_is_rest_point():
    plant = Plant(PAPER_MOTOR, PAPER_BODY, 0.2, -0.3)
    u, w = np.array([5.0, 4.0]), np.array([0.5, -0.2])
    v = plant.steady_speed(u, w)
    i_c = np.linalg.solve(plant.Kt, plant.D @ v + w)
    dv, di = plant.derivatives(v, i_c, u, w)
    np.testing.assert_allclose(dv, 0, atol=1e-12)
    np.testing.assert_allclose(di, 0, atol=1e-12)


def test_plant_acceleration_tracks_lpv_model():
    # the sampled plant and the Euler model agree to O(Ts^2) from a common state
    m = build_model()
    plant = Plant(PAPER_MOTOR, PAPER_BODY, 0.5, 0.6)
    ps = PlantState.rest()
    u = np.array([8.0, 8.0])
    zero = lambda t: (np.zeros(2), 0.0)
    for _ in range(50):
        ps = plant.step(ps, u, m.Ts, zero)
    x = plant.measure(ps)
    nxt = plant.measure(plant.step(ps, u, m.Ts, zero))
    pred = m.step(x, u, theta_of(0.5, 0.6))
    assert np.abs(nxt[:2] - pred[:2]).max() < 1e-3
    assert np.abs(nxt[2:] - pred[2:]).max() < 0.05
