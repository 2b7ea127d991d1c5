import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from metlab.grassmannian import (
    DenseEnumeration,
    DimensionCollapse,
    EnumerationExhausted,
    NotComplementary,
    Projection,
    Subspace,
    euclidean_complement,
    first_hit,
    grassmann_extremize,
    hausdorff_distance,
    measurable_basis,
    oblique_projection,
    point_to_subspace_distance,
    push_forward,
    vector_stream,
)
from metlab.normed import L1, L2, LINF, norm


@st.composite
def subspace_pairs(draw, d_max=5):
    d = draw(st.integers(2, d_max))
    k = draw(st.integers(1, d - 1))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return Subspace.span(rng.normal(size=(d, k))), Subspace.span(rng.normal(size=(d, k)))


def test_span_is_independent_of_the_spanning_set():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(4, 2))
    G = rng.normal(size=(2, 2))
    np.testing.assert_allclose(Subspace.span(M).basis, Subspace.span(M @ G).basis, atol=1e-12)
    np.testing.assert_allclose(Subspace.span(M[:, :1]).basis, Subspace.span(-3 * M[:, :1]).basis, atol=1e-15)


def test_span_numerical_rank():
    M = np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]])
    assert Subspace.span(M).dim == 1
    assert Subspace.span(np.zeros((3, 2))).dim == 0


def test_contains_and_coordinate():
    V = Subspace.coordinate(3, [0, 2])
    assert V.contains([1.0, 0.0, -2.0])
    assert not V.contains([0.0, 1.0, 0.0])


@given(subspace_pairs())
def test_l2_distance_matches_principal_angles(pair):
    V, W = pair
    theta = scipy.linalg.subspace_angles(V.basis, W.basis).max()
    assert math.isclose(hausdorff_distance(V, W), 2 * math.sin(theta / 2), rel_tol=1e-9, abs_tol=1e-12)


@given(subspace_pairs())
def test_distance_is_a_symmetric_bounded_metric(pair):
    V, W = pair
    d = hausdorff_distance(V, W)
    assert d == pytest.approx(hausdorff_distance(W, V), abs=1e-12)
    assert 0 <= d <= math.sqrt(2) + 1e-12
    assert hausdorff_distance(V, V) <= 1e-7


@given(st.integers(0, 2**32 - 1))
def test_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    d, k = 4, 2
    U, V, W = (Subspace.span(rng.normal(size=(d, k))) for _ in range(3))
    assert hausdorff_distance(U, W) <= hausdorff_distance(U, V) + hausdorff_distance(V, W) + 1e-12


@pytest.mark.parametrize("n", [L1, LINF])
def test_polyhedral_line_distance_brute_force(n):
    rng = np.random.default_rng(2)
    v, w = rng.normal(size=(2, 3))
    V, W = Subspace.span(v[:, None]), Subspace.span(w[:, None])
    a, b = v / norm(v, n), w / norm(w, n)
    expected = min(norm(a - b, n), norm(a + b, n))
    assert math.isclose(hausdorff_distance(V, W, n), expected, rel_tol=1e-12)


@pytest.mark.parametrize("n", [L1, LINF])
def test_polyhedral_distance_is_equivalent_to_l2(n):
    # norms on R^3 are equivalent within a factor of 3, spheres included
    rng = np.random.default_rng(5)
    V = Subspace.span(rng.normal(size=(3, 2)))
    W = Subspace.span(rng.normal(size=(3, 2)))
    d2, dn = hausdorff_distance(V, W), hausdorff_distance(V, W, n)
    assert d2 / 6 <= dn <= 6 * d2


def _sweep_distance(V, W, n, m=1500):
    th = np.linspace(0, 2 * np.pi, m, endpoint=False)

    def circle(B):
        X = np.column_stack([np.cos(th), np.sin(th)]) @ B.T
        return X / norm(X, n)[:, None]

    A, B = circle(V.basis), circle(W.basis)
    D = norm(A[:, None, :] - B[None, :, :], n)
    return max(D.min(axis=1).max(), D.min(axis=0).max())


@pytest.mark.parametrize("n", [L1, LINF])
@pytest.mark.parametrize("seed", range(3))
def test_polyhedral_plane_distance_brute_force(n, seed):
    rng = np.random.default_rng(seed)
    V = Subspace.span(rng.normal(size=(3, 2)))
    W = Subspace.span(rng.normal(size=(3, 2)))
    exact = hausdorff_distance(V, W, n)
    sweep = _sweep_distance(V, W, n)
    # the sweep resolves each sphere to about 2 pi / 1500 in angle
    assert abs(exact - sweep) <= 5e-3


def test_distance_requires_equal_dimension_and_ambient_space():
    with pytest.raises(ValueError):
        hausdorff_distance(Subspace.coordinate(3, [0]), Subspace.coordinate(3, [0, 1]))
    with pytest.raises(ValueError):
        hausdorff_distance(Subspace.coordinate(3, [0]), Subspace.coordinate(2, [0]))


def test_point_to_subspace_distance():
    W = Subspace.coordinate(3, [0, 1])
    assert point_to_subspace_distance([1.0, 2.0, 3.0], W) == pytest.approx(3.0)
    assert point_to_subspace_distance([1.0, 2.0, 3.0], W, L1) == pytest.approx(3.0, rel=1e-8)


@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_oblique_projection_algebra(seed, d):
    rng = np.random.default_rng(seed)
    k = 1 + seed % (d - 1)
    U = Subspace.span(rng.normal(size=(d, k)))
    V = Subspace.span(rng.normal(size=(d, d - k)))
    P = oblique_projection(U, V)
    scale = max(1.0, np.abs(P.matrix).max()) ** 2
    assert P.idempotency_residual() <= 1e-12 * scale
    np.testing.assert_allclose(P.matrix @ U.basis, U.basis, atol=1e-10 * scale)
    np.testing.assert_allclose(P.matrix @ V.basis, 0.0, atol=1e-10 * scale)
    Q = P.complement()
    np.testing.assert_allclose(P.matrix + Q.matrix, np.eye(d), atol=1e-15)


def test_oblique_projection_rejects_intersecting_pairs():
    U = Subspace.coordinate(3, [0, 1])
    with pytest.raises(NotComplementary):
        oblique_projection(U, Subspace.coordinate(3, [0]))
    with pytest.raises(NotComplementary):
        oblique_projection(U, Subspace.coordinate(3, [0, 2]))


def test_projection_from_matrix():
    P = Projection.from_matrix(np.array([[1.0, 1.0], [0.0, 0.0]]))
    assert P.range == Subspace.coordinate(2, [0])
    assert P.kernel == Subspace.span(np.array([[1.0], [-1.0]]))


def test_euclidean_complement_is_orthogonal():
    V = Subspace.span(np.random.default_rng(1).normal(size=(4, 2)))
    C = euclidean_complement(V)
    assert C.dim == 2
    np.testing.assert_allclose(V.basis.T @ C.basis, 0.0, atol=1e-14)


def test_push_forward_and_collapse():
    T = np.array([[2.0, 0.0], [0.0, 0.0]])
    assert push_forward(T, Subspace.coordinate(2, [0])) == Subspace.coordinate(2, [0])
    with pytest.raises(DimensionCollapse):
        push_forward(T, Subspace.coordinate(2, [1]))


def test_first_hit_is_the_least_index():
    assert first_hit(lambda i: i * i, lambda v: v > 50, 100) == (64, 8)
    assert first_hit([None, 3, 5], lambda v: v > 1, 3) == (3, 2)
    with pytest.raises(EnumerationExhausted):
        first_hit(lambda i: i, lambda v: v > 10, 5)


def test_vector_stream_is_deterministic_and_nonzero():
    for i in range(1, 200):
        v = vector_stream(3, i)
        assert np.any(v != 0)
        np.testing.assert_array_equal(v, vector_stream(3, i))


def test_dense_enumeration_approaches_any_line():
    # density: the stream comes within 0.05 of a fixed irrational direction
    target = Subspace.span(np.array([[1.0], [math.sqrt(2)], [math.pi]]))
    enum = DenseEnumeration(3, 1)
    S, i = first_hit(enum, lambda S: S is not None and hausdorff_distance(S, target) < 0.05, 200000)
    assert S.dim == 1 and i > 1


def test_dense_enumeration_plane_stream():
    enum = DenseEnumeration(3, 2)
    hits = [enum(i) for i in range(1, 60)]
    planes = [S for S in hits if S is not None]
    assert planes and all(S.dim == 2 for S in planes)
    assert len({tuple(np.round(S.basis.ravel(), 12)) for S in planes}) > 10


def test_measurable_basis_is_deterministic_and_unit():
    V = Subspace.span(np.random.default_rng(4).normal(size=(4, 2)))
    for n in (L1, L2, LINF):
        B1, B2 = measurable_basis(V, n), measurable_basis(V, n)
        for a, b in zip(B1, B2):
            np.testing.assert_array_equal(a, b)
            assert norm(a, n) == pytest.approx(1.0, rel=1e-12)
            assert V.contains(a)
        assert Subspace.span(np.column_stack(B1)) == V


def test_grassmann_extremize_ky_fan():
    # max over k-planes of tr(Q^T A Q) is the sum of the top k eigenvalues
    rng = np.random.default_rng(0)
    G = rng.normal(size=(4, 4))
    A = G + G.T

    def f(B):
        Q = np.linalg.qr(B)[0]
        return float(np.trace(Q.T @ A @ Q))

    val, B = grassmann_extremize(f, 4, 2, "max")
    assert math.isclose(val, np.sort(np.linalg.eigvalsh(A))[-2:].sum(), rel_tol=1e-6)
    np.testing.assert_allclose(B.T @ B, np.eye(2), atol=1e-12)
