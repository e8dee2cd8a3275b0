import numpy as np
import pytest
from scipy.optimize import minimize

from wheeltube.governor import (Constraints, InfeasibleSteadySetError, ReferenceGovernor,
                                minimal_invariant_tube, offset_support, steady_input_map, tube_margin)
from wheeltube.polytope import build_vertex_map
from wheeltube.synthesis import box_vertices
from wheeltube.verify import brute_vertices

THETA_HAT = np.array([0.55, 0.1, 0.055])


def oracle_pair(model, cons, v_d, theta):
    A, B = model.eval(theta)
    eq = np.hstack([A - np.eye(4), B])
    res = minimize(lambda z: np.sum((z[:2] - v_d) ** 2), np.zeros(6), method="SLSQP",
                   constraints=[{"type": "eq", "fun": lambda z: eq @ z},
                                {"type": "ineq", "fun": lambda z: cons.b - cons.G @ z[:4] - cons.H @ z[4:]}],
                   options={"ftol": 1e-14, "maxiter": 500})
    return res.x


@pytest.mark.parametrize("v_d", [[0.5, 0.5], [1.5, 1.2], [-2.0, 0.3], [0.0, 0.0]])
def test_steady_pair_matches_nlp_oracle(model, v_d):
    cons = Constraints.symmetric(1.0, 2.0, 24.0)
    gov = ReferenceGovernor(model, cons)
    pair = gov.steady_pair(np.array(v_d), THETA_HAT)
    ref = oracle_pair(model, cons, np.array(v_d), THETA_HAT)
    np.testing.assert_allclose(pair.x_s, ref[:4], atol=1e-6)
    np.testing.assert_allclose(pair.u_s, ref[4:], atol=1e-5)
    assert pair.admissible == bool(np.abs(np.array(v_d)).max() <= 1.0)
    A, B = model.eval(THETA_HAT)
    np.testing.assert_allclose(A @ pair.x_s + B @ pair.u_s, pair.x_s, atol=1e-10)


def test_steady_input_map_gives_rest_points(model):
    U = steady_input_map(model, THETA_HAT)
    A, B = model.eval(THETA_HAT)
    v = np.array([0.3, -0.7])
    x = np.concatenate([v, np.zeros(2)])
    np.testing.assert_allclose(A @ x + B @ (U @ v), x, atol=1e-12)


def test_infeasible_tightening_raises(model):
    cons = Constraints.symmetric(1.0, 2.0, 24.0)
    gov = ReferenceGovernor(model, cons, margin=np.full(12, 2.5))
    with pytest.raises(InfeasibleSteadySetError):
        gov.steady_pair(np.array([0.1, 0.1]), THETA_HAT)


def test_invariant_tube_is_a_fixed_point(model, artifact):
    vm = build_vertex_map(artifact.F_e)
    verts = box_vertices(np.concatenate([[0.8, 0.8, 0.64]] * 2))
    loops = []
    for th in verts:
        A, B = model.eval(th)
        loops.append(A + B @ artifact.K)
    alpha = minimal_invariant_tube(artifact.F_e, vm.S, loops, artifact.w_bar)
    nxt = np.max([artifact.F_e @ Acl @ Sj @ alpha for Acl in loops for Sj in vm.S], axis=0) + artifact.w_bar
    np.testing.assert_allclose(nxt, alpha, rtol=1e-9)
    assert np.all(alpha >= artifact.w_bar)
    # geometric-series bound from the contraction factor
    assert alpha.max() <= artifact.w_bar.max() / (1 - artifact.epsilon) + 1e-12


def test_tube_margin_matches_vertex_enumeration(model, artifact, rng):
    cons = Constraints.symmetric(1.0, 2.0, 24.0)
    vm = build_vertex_map(artifact.F_e)
    alpha = 0.01 * (1 + 0.02 * rng.uniform(-1, 1, artifact.F_e.shape[0]))
    got = tube_margin(cons, artifact.K, vm.S, alpha)
    V = brute_vertices(artifact.F_e, alpha)
    ref = np.max((cons.G + cons.H @ artifact.K) @ V.T, axis=1)
    np.testing.assert_allclose(got, ref, atol=1e-12)


def test_offset_support_bounds_sampled_offsets(model, artifact, rng):
    verts = box_vertices(np.concatenate([[0.8, 0.8, 0.64]] * 2))
    bound = offset_support(model, artifact.F_e, verts, THETA_HAT, 1.0)
    U = steady_input_map(model, THETA_HAT)
    for _ in range(200):
        th = rng.uniform(-1, 1, 3) * [0.8, 0.8, 0.64]
        v = rng.uniform(-1, 1, 2)
        x_s = np.concatenate([v, np.zeros(2)])
        A, B = model.eval(th)
        off = artifact.F_e @ (A @ x_s + B @ (U @ v) - x_s)
        assert np.all(off <= bound + 1e-12)
