import numpy as np
import pytest
from scipy.linalg import solve_discrete_lyapunov

from wheeltube.polytope import build_vertex_map
from wheeltube.synthesis import (SynthesisArtifact, box_vertices, certify_gain, closed_loop_template,
                                 contraction_factor, disturbance_offset, lqr_gain, residual_offset,
                                 solve_lyapunov, terminal_cost, terminal_decrease_margin,
                                 verify_terminal_contractivity)

BOUND = np.array([0.8, 0.8, 0.64])


def test_box_vertices_enumerates_corners():
    V = np.array(box_vertices(np.array([1.0, 2.0, 3.0, 4.0])))
    assert V.shape == (4, 2)
    assert {tuple(v) for v in V} == {(1, 2), (1, -4), (-3, 2), (-3, -4)}


def test_lyapunov_matches_scipy(rng):
    A = rng.normal(size=(4, 4))
    A *= 0.9 / np.abs(np.linalg.eigvals(A)).max()
    W = np.eye(4) + 0.1 * np.ones((4, 4))
    P, res = solve_lyapunov(A, W)
    np.testing.assert_allclose(P, solve_discrete_lyapunov(A.T, W), atol=1e-9)
    assert res <= 1e-10


def test_lp_contraction_matches_vertex_evaluation(model, artifact):
    verts = box_vertices(np.concatenate([BOUND, BOUND]))
    gs = certify_gain(model, artifact.F_e, artifact.K, verts)
    direct = contraction_factor(model, artifact.F_e, artifact.K, verts)
    assert gs.epsilon == pytest.approx(direct, abs=1e-8)
    assert gs.epsilon < 1.0


def test_template_diagonalizes_nominal_loop(model, cfg_a):
    K = lqr_gain(model, cfg_a.theta_hat0, np.diag(cfg_a.synthesis.gain_Q), np.diag(cfg_a.synthesis.gain_R))
    A, B = model.eval(cfg_a.theta_hat0)
    Acl = A + B @ K
    F = closed_loop_template(Acl)
    T = F[:4]
    M = T @ Acl @ np.linalg.inv(T)
    assert np.abs(M - np.diag(np.diag(M))).max() <= 1e-9
    assert np.abs(np.linalg.eigvals(Acl)).max() < 1.0


def test_offsets_are_box_supports(rng):
    F = rng.normal(size=(6, 4))
    E = np.vstack([np.zeros((2, 2)), 0.005 * np.eye(2)])
    w = np.array([3.0, 5.0])
    off = disturbance_offset(F, E, w)
    # brute force over the four corners of the disturbance box
    corners = [np.array([a, b]) * w for a in (-1, 1) for b in (-1, 1)]
    np.testing.assert_allclose(off, np.max([F @ E @ c for c in corners], axis=0))
    full = residual_offset(F, E, w, 1e-3)
    corners4 = [np.concatenate([1e-3 * np.array([a, b]), 0.005 * w * np.array([c, d])])
                for a in (-1, 1) for b in (-1, 1) for c in (-1, 1) for d in (-1, 1)]
    np.testing.assert_allclose(full, np.max([F @ r for r in corners4], axis=0))
    with pytest.raises(ValueError):
        disturbance_offset(F, E, -w)


def test_terminal_certificates(model, artifact, cfg_a):
    verts = box_vertices(np.concatenate([BOUND, BOUND]))
    Q, R = np.diag(cfg_a.mpc.Q), np.diag(cfg_a.mpc.R)
    tc = terminal_cost(model, cfg_a.theta_hat0, artifact.K_f, Q, R)
    A, B = model.eval(cfg_a.theta_hat0)
    Ac = A + B @ artifact.K_f
    ref = solve_discrete_lyapunov(Ac.T, Q + artifact.K_f.T @ R @ artifact.K_f)
    np.testing.assert_allclose(tc.P, ref, rtol=1e-7, atol=1e-6)
    assert tc.residual <= 1e-8
    eps_f = verify_terminal_contractivity(model, artifact.K_f, artifact.P_cert, verts)
    assert eps_f < 1.0
    assert terminal_decrease_margin(model, artifact.K_f, artifact.P_cert, verts, Q, R) >= -1e-9


def test_artifact_roundtrip(tmp_path, artifact):
    path = tmp_path / "art.txt"
    artifact.save(path)
    back = SynthesisArtifact.load(path)
    for name in ("F_e", "K", "K_f", "w_bar", "P_cert"):
        np.testing.assert_array_equal(getattr(back, name), getattr(artifact, name))
    assert back.epsilon == artifact.epsilon


def test_artifact_load_rejects_missing_fields(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("[K] 1 1\n0.0\n")
    with pytest.raises(ValueError):
        SynthesisArtifact.load(path)


def test_template_vertex_map_is_simple(artifact):
    vm = build_vertex_map(artifact.F_e)
    assert vm.p == 16
    for v, Sj in zip(vm.vertices, vm.selectors):
        np.testing.assert_allclose(Sj @ np.ones(artifact.F_e.shape[0]), v, atol=1e-12)
