import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from metlab.cocycle import (
    BasePoint,
    BernoulliShift,
    CatMap,
    CocycleSystem,
    ConjugatedDiagonal,
    Constant,
    Rotation,
    RotationCell,
    Scaled,
    ScaledMatrix,
    SymbolTable,
    base_from_json,
    compound,
    count_inversions,
    generator_from_json,
    integrability_estimate,
    numerical_rank,
    orbit,
)
from metlab.normed import L1, NormSpec, operator_norm


def iid_system(seed=0, d=3, m=4, cache="dyadic"):
    rng = np.random.default_rng(seed)
    return CocycleSystem(BernoulliShift.uniform(m, seed), SymbolTable(rng.normal(size=(m, d, d))), cache=cache)


def dense_product(c, w, a, b):
    out = np.eye(c.dim)
    for i in range(a, b):
        out = c.matrix(orbit(w, i)) @ out
    return out


# -- base systems ----------------------------------------------------------

@given(st.integers(-10**6, 10**6), st.integers(-10**6, 10**6))
def test_rotation_orbit_is_additive(t, n):
    R = Rotation()
    w = BasePoint(12345, t)
    assert R.state(orbit(w, n)) == (R.state(w) + n * R.a) % R.q
    assert orbit(orbit(w, n), -n) == w


def test_small_rotation_state_sequence():
    R = Rotation(7, 3)
    assert [R.state(BasePoint(0, t)) for t in range(8)] == [0, 3, 6, 2, 5, 1, 4, 0]
    with pytest.raises(ValueError):
        Rotation(6, 3)


def test_cat_map_matches_direct_iteration():
    C = CatMap(101)
    x, y = 5, 17
    w = BasePoint((x, y), 0)
    for t in range(1, 30):
        x, y = (2 * x + y) % 101, (x + y) % 101
        assert C.state(orbit(w, t)) == (x, y)
    # negative times invert
    assert C.state(orbit(orbit(w, 29), -29)) == (5, 17)
    assert C.state(BasePoint(C.state(orbit(w, 7)), -7)) == (5, 17)


def test_bernoulli_shift_frequencies():
    probs = np.array([0.5, 0.3, 0.2])
    B = BernoulliShift(probs, seed=4)
    N = 20000
    counts = np.bincount([B.symbol_at(i) for i in range(-N // 2, N // 2)], minlength=3)
    sigma = np.sqrt(N * probs * (1 - probs))
    assert np.all(np.abs(counts - N * probs) <= 5 * sigma)


def test_bernoulli_shift_is_keyed_and_reproducible():
    a, b = BernoulliShift.uniform(4, 1), BernoulliShift.uniform(4, 2)
    sa = [a.symbol_at(i) for i in range(200)]
    assert sa == [BernoulliShift.uniform(4, 1).symbol_at(i) for i in range(200)]
    assert sa != [b.symbol_at(i) for i in range(200)]
    w = BasePoint(10, 5)
    assert a.symbol(w, 3) == a.symbol(orbit(w, 3)) == a.symbol_at(18)


def test_bernoulli_shift_rejects_bad_probabilities():
    with pytest.raises(ValueError):
        BernoulliShift([0.5, 0.6])


@pytest.mark.parametrize("base", [Rotation(), CatMap(), BernoulliShift([0.25, 0.75], 3)])
def test_base_json_round_trip(base):
    other = base_from_json(base.to_json())
    rng = np.random.default_rng(0)
    w = base.sample(rng)
    for t in (-3, 0, 11):
        np.testing.assert_array_equal(base.coords(orbit(w, t)), other.coords(orbit(w, t)))


# -- generators ------------------------------------------------------------

def test_generator_json_round_trip():
    rng = np.random.default_rng(0)
    gens = [Constant(rng.normal(size=(2, 2))), SymbolTable(rng.normal(size=(3, 2, 2))),
            ConjugatedDiagonal(np.eye(2) + 0.1 * rng.normal(size=(2, 2)), rng.normal(size=(3, 2))),
            RotationCell([0.5], rng.normal(size=(2, 2, 2)))]
    gens.append(Scaled(gens[1], 0.5))
    base = BernoulliShift.uniform(3, 0)
    for g in gens:
        h = generator_from_json(g.to_json())
        b = base if not isinstance(g, RotationCell) else Rotation()
        for t in range(5):
            np.testing.assert_array_equal(g(b, BasePoint(0, t)), h(b, BasePoint(0, t)))


def test_conjugated_diagonal_eigenvalues():
    P = np.array([[1.0, 0.3], [0.2, 1.0]])
    g = ConjugatedDiagonal(P, [[2.0, -0.5]])
    A = g(BernoulliShift.uniform(1), BasePoint(0, 0))
    np.testing.assert_allclose(np.sort(np.linalg.eigvals(A).real), [-0.5, 2.0], atol=1e-14)


def test_rotation_cell_selects_arc():
    g = RotationCell([0.25, 0.5], [np.eye(1), 2 * np.eye(1), 3 * np.eye(1)])
    R = Rotation()
    assert g(R, R.point(0.1))[0, 0] == 1.0
    assert g(R, R.point(0.3))[0, 0] == 2.0
    assert g(R, R.point(0.9))[0, 0] == 3.0
    with pytest.raises(ValueError):
        RotationCell([0.5], [np.eye(1)])


# -- products --------------------------------------------------------------

def test_scaled_matrix_is_exact_rescaling():
    A = np.array([[3.0, -1.0], [0.5, 6.0]])
    S = ScaledMatrix.of(A)
    assert np.abs(S.matrix).max() <= 1.0
    np.testing.assert_array_equal(S.dense(), A)
    Z = ScaledMatrix.of(np.zeros((2, 2)))
    assert Z.is_zero and Z.log_norm() == -math.inf
    assert (S @ Z).is_zero
    assert S.log_norm(L1) == pytest.approx(math.log(operator_norm(A, L1)))


@given(st.integers(0, 2**31), st.integers(-20, 20), st.integers(0, 25), st.integers(0, 25))
def test_cocycle_identity(seed, a, m1, m2):
    c = iid_system(seed % 7)
    w = BasePoint(seed, 0)
    b, e = a + m1, a + m1 + m2
    full = c.evaluate_interval(w, a, e).dense()
    left = c.evaluate_interval(w, b, e).dense() @ c.evaluate_interval(w, a, b).dense()
    scale = max(np.abs(full).max(), 1e-300)
    assert np.abs(full - left).max() <= 1e-12 * scale


@given(st.integers(0, 2**31), st.integers(-30, 30), st.integers(0, 30))
def test_cached_product_matches_direct_product(seed, a, m):
    c = iid_system(seed % 5)
    w = BasePoint(seed, 3)
    direct = dense_product(c, w, a, a + m)
    got = c.evaluate_interval(w, a, a + m).dense()
    assert np.abs(got - direct).max() <= 1e-12 * max(np.abs(direct).max(), 1e-300)


def test_stationarity_is_bit_exact():
    c = iid_system(1)
    w = BasePoint(7, 0)
    for a, b in [(3, 40), (-17, 5), (0, 64)]:
        x = c.evaluate_interval(w, a, b)
        y = c.evaluate_interval(orbit(w, a), 0, b - a)
        np.testing.assert_array_equal(x.matrix, y.matrix)
        assert x.log2_scale == y.log2_scale


def test_cache_modes_agree():
    w = BasePoint(2, 0)
    x = iid_system(3).evaluate_interval(w, -5, 37)
    y = iid_system(3, cache="none").evaluate_interval(w, -5, 37)
    np.testing.assert_allclose(x.dense(), y.dense(), rtol=1e-12)
    with pytest.raises(ValueError):
        iid_system(3).evaluate_interval(w, 4, 2)


def test_long_products_do_not_overflow():
    c = CocycleSystem(Rotation(), Constant(np.diag([2.0, 0.5, 0.25])))
    w = BasePoint(0, 0)
    n = 5000
    assert c.evaluate_interval(w, 0, n).log_norm() == pytest.approx(n * math.log(2), rel=1e-14)
    assert c.log_singular_value(w, 0, n, 3) == pytest.approx(n * math.log(0.25), rel=1e-12)
    assert c.log_volume(w, 0, n, 2) == pytest.approx(n * math.log(1.0), abs=1e-9)


@given(st.integers(0, 2**31), st.integers(1, 12))
def test_log_singular_values_match_svd(seed, n):
    c = iid_system(seed % 5)
    w = BasePoint(seed, 0)
    s = np.linalg.svd(dense_product(c, w, 0, n), compute_uv=False)
    # a dense SVD resolves each singular value only to about n * eps * s_1
    for k in range(1, 4):
        got = math.exp(c.log_singular_value(w, 0, n, k))
        assert abs(got - s[k - 1]) <= 1e-9 * s[k - 1] + 64 * n * np.finfo(float).eps * s[0]


def test_weighted_norm_singular_values():
    wts = (1.0, 4.0)
    c = CocycleSystem(Rotation(), Constant([[1.0, 1.0], [0.0, 1.0]]), NormSpec("WeightedLp", 2.0, wts))
    W = np.diag(wts)
    A = W @ np.array([[1.0, 1.0], [0.0, 1.0]]) @ np.linalg.inv(W)
    s = np.linalg.svd(np.linalg.matrix_power(A, 6), compute_uv=False)
    assert c.log_singular_value(BasePoint(0, 0), 0, 6, 1) == pytest.approx(math.log(s[0]), rel=1e-12)


def test_rank_deficient_generator_gives_minus_infinity():
    P = np.array([[1.0, 0.4, 0.0], [0.1, 1.0, 0.2], [0.0, 0.3, 1.0]])
    c = CocycleSystem(BernoulliShift.uniform(1), ConjugatedDiagonal(P, [[2.0, 1.0, 0.0]]))
    w = BasePoint(0, 0)
    assert numerical_rank(c.matrix(w)) == 2
    assert c.log_singular_value(w, 0, 50, 3) == -math.inf
    # A^50 = 2^50 p q^T + r s^T with p, q, r, s eigen-columns and dual rows, so
    # sigma_1 sigma_2 = 2^50 |p ^ r| |q ^ s| exactly and sigma_1 = 2^50 |p| |q| (1 + O(2^-50))
    Pi = np.linalg.inv(P)
    top = np.linalg.norm(P[:, 0]) * np.linalg.norm(Pi[0])
    vol = np.linalg.norm(compound(P[:, :2], 2)) * np.linalg.norm(compound(Pi[:2].T, 2))
    assert c.log_singular_value(w, 0, 50, 2) == pytest.approx(math.log(vol / top), abs=1e-10)


# -- compounds -------------------------------------------------------------

@given(st.integers(0, 2**31), st.integers(1, 4))
def test_cauchy_binet(seed, k):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(2, 4, 4))
    np.testing.assert_allclose(compound(A @ B, k), compound(A, k) @ compound(B, k), atol=1e-9)


def test_compound_singular_values_are_products():
    A = np.random.default_rng(1).normal(size=(4, 4))
    s = np.linalg.svd(A, compute_uv=False)
    top = np.linalg.svd(compound(A, 2), compute_uv=False)[0]
    assert top == pytest.approx(s[0] * s[1], rel=1e-12)
    assert compound(A, 4)[0, 0] == pytest.approx(np.linalg.det(A), rel=1e-12)


def test_rectangular_compound():
    B = np.random.default_rng(2).normal(size=(4, 2))
    C = compound(B, 2)
    assert C.shape == (6, 1)
    # the Gram determinant equals the squared norm of the compound column
    assert (C[:, 0] ** 2).sum() == pytest.approx(np.linalg.det(B.T @ B), rel=1e-12)


# -- integrability and instrumentation -------------------------------------

def test_integrability_estimate_constant():
    c = CocycleSystem(Rotation(), Constant(np.diag([3.0, 0.1])))
    mean, se = integrability_estimate(c, 20)
    assert mean == pytest.approx(math.log(3.0), rel=1e-14) and se <= 1e-15
    with pytest.raises(ValueError):
        integrability_estimate(c, 0)


def test_count_inversions_counts_and_restores():
    inv, solve = np.linalg.inv, np.linalg.solve
    with count_inversions() as ctr:
        np.linalg.inv(np.eye(2))
        scipy.linalg.pinv(np.eye(2))
        np.linalg.solve(np.eye(2), np.ones(2))
        np.linalg.lstsq(np.eye(2), np.ones(2), rcond=None)
    assert ctr.inversions == 2 and ctr.solves == 2
    assert np.linalg.inv is inv and np.linalg.solve is solve


def test_products_perform_no_inversions():
    c = iid_system(0)
    with count_inversions() as ctr:
        c.evaluate_interval(BasePoint(0, 0), -40, 40)
        c.log_singular_value(BasePoint(0, 0), 0, 100, 2)
    assert ctr.inversions == 0 and ctr.solves == 0
