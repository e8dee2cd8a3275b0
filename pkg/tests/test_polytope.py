import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import ConvexHull

from wheeltube.polytope import (DegenerateVertexError, EmptySetError, Polytope, UnboundedSetError,
                                build_vertex_map, enumerate_vertices, inclusion_certificate, support,
                                verify_certificate)
from wheeltube.verify import brute_vertices, random_pair


def test_rows_are_normalized():
    p = Polytope(np.array([[3.0, 4.0]]), np.array([10.0]))
    np.testing.assert_allclose(p.F, [[0.6, 0.8]])
    np.testing.assert_allclose(p.b, [2.0])


def test_rejects_bad_data():
    with pytest.raises(ValueError):
        Polytope(np.zeros((1, 2)), np.ones(1))
    with pytest.raises(ValueError):
        Polytope(np.eye(2), np.ones(3))
    with pytest.raises(ValueError):
        Polytope(np.eye(2), np.array([1.0, np.inf]))


def test_box_support_is_analytic():
    p = Polytope.box(np.array([1.0, 2.0, 3.0]))
    d = np.array([1.0, -2.0, 0.5])
    assert support(p, d) == pytest.approx(np.abs(d) @ [1.0, 2.0, 3.0], abs=1e-12)


def test_support_unbounded_and_empty():
    half = Polytope(np.array([[1.0, 0.0]]), np.array([1.0]))
    assert support(half, [0.0, 1.0]) == np.inf
    assert not half.is_bounded()
    empty = Polytope(np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0]))
    assert empty.is_empty()
    with pytest.raises(EmptySetError):
        support(empty, [1.0])


def test_vertices_match_convex_hull(rng):
    for _ in range(20):
        p1, _, _ = random_pair(rng, 2)
        V = np.array(enumerate_vertices(p1))
        ref = brute_vertices(p1.F, p1.b)
        hull = ref[ConvexHull(ref).vertices]
        assert len(V) == len(hull)
        for v in hull:
            assert np.abs(V - v).max(axis=1).min() <= 1e-8


def test_enumerate_rejects_unbounded():
    with pytest.raises(UnboundedSetError):
        enumerate_vertices(Polytope(np.array([[1.0, 0.0], [0.0, 1.0]]), np.ones(2)))


def test_inclusion_agrees_with_vertex_check(rng):
    for k in range(100):
        p1, p2, V = random_pair(rng, 2 + k % 2)
        truth = bool(np.all(p2.F @ V.T <= p2.b[:, None] + 1e-9))
        Om = inclusion_certificate(p1, p2)
        assert (Om is not None) == truth
        if Om is not None:
            assert verify_certificate(Om, p1, p2)


def test_scaled_box_inclusion():
    inner = Polytope.box(np.ones(3))
    assert inclusion_certificate(inner, Polytope.box(1.5 * np.ones(3))) is not None
    assert inclusion_certificate(Polytope.box(1.5 * np.ones(3)), inner) is None


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_box_contains_its_vertices(a, b):
    p = Polytope.box(np.array([a, b]))
    V = enumerate_vertices(p)
    assert len(V) == 4
    for v in V:
        assert p.contains(v)
        np.testing.assert_allclose(np.abs(v), [a, b], rtol=1e-12)


def test_vertex_map_reproduces_scaled_vertices(rng):
    F = np.vstack([np.eye(2), -np.eye(2), [[1.0, 1.0]], [[-1.0, -1.0]]])
    vm = build_vertex_map(F)
    # small perturbations keep the combinatorial structure of {F e <= 1}
    alpha = 1.0 + rng.uniform(-0.05, 0.05, F.shape[0])
    ref = brute_vertices(F, alpha)
    hull = ref[ConvexHull(ref).vertices]
    got = vm.vertices_of(alpha)
    assert len(hull) == vm.p
    for v in hull:
        assert np.abs(got - v).max(axis=1).min() <= 1e-9


def test_vertex_map_rejects_degenerate_template():
    # three rows meet at the vertex (1, 1)
    F = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [-1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(DegenerateVertexError):
        build_vertex_map(F)
