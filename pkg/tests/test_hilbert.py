import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from projsplit.hilbert import (
    BlockPoint,
    LinearMap,
    as_vec,
    derived_wn,
    gamma_inner,
    gamma_norm,
    graph_project,
    operator_norm_bound,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def pt(z, *w):
    return BlockPoint(np.array(z, float), tuple(np.array(x, float) for x in w))


def test_as_vec_rejects_nonfinite():
    with pytest.raises(ValueError):
        as_vec([1.0, np.nan])
    with pytest.raises(ValueError):
        as_vec([np.inf])


@pytest.mark.parametrize("gamma,p,q,expected", [
    (2.0, pt([1]), pt([3]), 6.0),
    (1.0, pt([1], [2]), pt([1], [2]), 5.0),
    (0.5, pt([2], [0]), pt([2], [1]), 2.0),
])
def test_gamma_inner_examples(gamma, p, q, expected):
    assert gamma_inner(p, q, gamma) == expected


def test_gamma_inner_dimension_mismatch():
    with pytest.raises(ValueError):
        gamma_inner(pt([1]), pt([1], [2]), 1.0)


@given(arrays(float, 3, elements=finite), arrays(float, 2, elements=finite),
       arrays(float, 3, elements=finite), arrays(float, 2, elements=finite),
       st.floats(0.1, 10))
def test_gamma_inner_symmetric_and_norm(z1, w1, z2, w2, gamma):
    p, q = BlockPoint(z1, (w1,)), BlockPoint(z2, (w2,))
    assert gamma_inner(p, q, gamma) == pytest.approx(gamma_inner(q, p, gamma), abs=1e-12)
    assert gamma_inner(p, p, gamma) >= 0
    assert gamma_norm(p, gamma) == pytest.approx(np.sqrt(gamma * z1 @ z1 + w1 @ w1), rel=1e-12, abs=1e-12)


def test_gamma_norm_zero_only_at_zero():
    assert gamma_norm(pt([0, 0], [0]), 3.0) == 0.0
    assert gamma_norm(pt([0, 1e-8], [0]), 3.0) > 0.0


def test_derived_wn_examples():
    assert np.array_equal(derived_wn(pt([1.0, 2.0]), []), np.zeros(2))
    eye = LinearMap.identity(1)
    assert np.array_equal(derived_wn(pt([0], [3]), [eye]), [-3.0])
    assert np.array_equal(derived_wn(pt([0], [1], [2]), [eye, eye]), [-3.0])


def test_derived_wn_uses_adjoint():
    G = LinearMap(np.array([[1.0, 2.0]]))  # R^2 -> R^1
    out = derived_wn(pt([0, 0], [3]), [G])
    assert np.array_equal(out, [-3.0, -6.0])


@given(arrays(float, 2, elements=finite), arrays(float, 2, elements=finite), st.floats(-3, 3))
def test_derived_wn_linear(w1, w2, c):
    G = LinearMap(np.array([[1.0, -1.0], [0.5, 2.0]]))
    a = derived_wn(BlockPoint(np.zeros(2), (w1,)), [G])
    b = derived_wn(BlockPoint(np.zeros(2), (w2,)), [G])
    ab = derived_wn(BlockPoint(np.zeros(2), (w1 + c * w2,)), [G])
    assert np.allclose(ab, a + c * b, atol=1e-10)


@pytest.mark.parametrize("G,z,w,P,Q", [
    ([[2.0]], [1.0], [2.0], ([1.0], [2.0]), ([0.0], [0.0])),
    ([[2.0]], [1.0], [3.0], ([1.4], [2.8]), ([-0.4], [0.2])),
    ([[1.0]], [1.0], [3.0], ([2.0], [2.0]), ([-1.0], [1.0])),
])
def test_graph_project_examples(G, z, w, P, Q):
    (pz, pw), (qz, qw) = graph_project(z, w, LinearMap(np.array(G)))
    assert np.allclose(pz, P[0], atol=1e-12) and np.allclose(pw, P[1], atol=1e-12)
    assert np.allclose(qz, Q[0], atol=1e-12) and np.allclose(qw, Q[1], atol=1e-12)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_graph_project_identities(d, m, seed):
    r = np.random.default_rng(seed)
    M = r.standard_normal((m, d))
    z, w = r.standard_normal(d), r.standard_normal(m)
    G = LinearMap(M)
    (pz, pw), (qz, qw) = graph_project(z, w, G)
    scale = 1 + np.linalg.norm(z) + np.linalg.norm(w)
    assert np.allclose(pz + qz, z, atol=1e-10 * scale) and np.allclose(pw + qw, w, atol=1e-10 * scale)
    assert np.allclose(M @ pz, pw, atol=1e-10 * scale)
    assert abs(pz @ qz + pw @ qw) <= 1e-10 * scale ** 2
    (ppz, ppw), _ = graph_project(pz, pw, G)
    assert np.allclose(ppz, pz, atol=1e-10 * scale) and np.allclose(ppw, pw, atol=1e-10 * scale)


def test_graph_project_dimension_mismatch():
    with pytest.raises(ValueError):
        graph_project([1.0, 2.0], [1.0], LinearMap.identity(2))


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_adjoint_matches_transpose(m, d, seed):
    r = np.random.default_rng(seed)
    G = LinearMap(r.standard_normal((m, d)))
    x, y = r.standard_normal(d), r.standard_normal(m)
    assert G(x) @ y == pytest.approx(x @ G.adjoint(y), rel=1e-12, abs=1e-12)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_norm_bound_is_upper_bound(m, d, seed):
    M = np.random.default_rng(seed).standard_normal((m, d))
    exact = np.linalg.norm(M, 2)
    bound = operator_norm_bound(M)
    assert exact <= bound <= exact * (1 + 1e-5) + 1e-12


def test_norm_bound_of_rotation_and_zero():
    assert operator_norm_bound(np.array([[0.0, 1.0], [-1.0, 0.0]])) == pytest.approx(1.0, abs=1e-6)
    assert operator_norm_bound(np.zeros((2, 3))) == 0.0


def test_linear_map_is_read_only():
    G = LinearMap(np.eye(2))
    with pytest.raises(ValueError):
        G.matrix[0, 0] = 5.0
    assert G.is_identity and not LinearMap(2 * np.eye(2)).is_identity


def test_blockpoint_arithmetic_and_json():
    p, q = pt([1, 2], [3]), pt([0.5, 0], [1])
    assert np.array_equal((p - q).z, [0.5, 2]) and np.array_equal((p + q).w[0], [4])
    assert np.array_equal(p.scaled(2).flat(), [2, 4, 6])
    back = BlockPoint.from_json(p.to_json())
    assert np.array_equal(back.flat(), p.flat()) and back.n_blocks == p.n_blocks
