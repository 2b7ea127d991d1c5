import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metlab.grassmannian import Subspace, oblique_projection
from metlab.normed import L1, L2, LINF, NormSpec, operator_norm
from metlab.opstats import (
    PreconditionError,
    bernstein,
    bernstein_numbers,
    check_contraction,
    check_growth_inequalities,
    check_sandwich,
    check_snumber_chain,
    contraction_bound,
    gelfand,
    min_growth,
    snumber_constant,
)
from strategies import gaussian_square


@given(gaussian_square(1, 5), st.data())
def test_closed_form_bernstein_and_gelfand_are_singular_values(T, data):
    s = np.linalg.svd(T, compute_uv=False)
    k = data.draw(st.integers(1, T.shape[0]))
    assert math.isclose(bernstein(T, k, L2).value, s[k - 1], rel_tol=1e-12)
    assert math.isclose(gelfand(T, k, L2), s[k - 1], rel_tol=1e-9, abs_tol=1e-12)


@given(gaussian_square(2, 4), st.data())
def test_optimized_bernstein_matches_closed_form(T, data):
    k = data.draw(st.integers(1, T.shape[0]))
    cf = bernstein(T, k, L2, method="closed_form").value
    opt = bernstein(T, k, L2, method="optimized").value
    assert opt <= cf * (1 + 1e-9)
    assert opt >= cf * (1 - 5e-2)


def test_weighted_euclidean_bernstein_is_svd_of_conjugate():
    w = (1.0, 3.0, 0.5)
    n = NormSpec("WeightedLp", 2.0, w)
    T = np.random.default_rng(0).normal(size=(3, 3))
    W = np.diag(w)
    s = np.linalg.svd(W @ T @ np.linalg.inv(W), compute_uv=False)
    np.testing.assert_allclose(bernstein_numbers(T, n), s, rtol=1e-12)


@pytest.mark.parametrize("n", [L1, LINF])
@pytest.mark.parametrize("seed", range(5))
def test_planar_polyhedral_s_numbers(n, seed):
    # in the plane rho_1 = s_1 = ||T|| and rho_2 = s_2 = 1 / ||T^-1||
    T = np.random.default_rng(seed).normal(size=(2, 2))
    top = operator_norm(T, n)
    bottom = 1.0 / operator_norm(np.linalg.inv(T), n)
    assert math.isclose(bernstein(T, 1, n).value, top, rel_tol=1e-12)
    assert math.isclose(gelfand(T, 1, n), top, rel_tol=1e-12)
    assert math.isclose(bernstein(T, 2, n).value, bottom, rel_tol=1e-9)
    assert math.isclose(gelfand(T, 2, n), bottom, rel_tol=1e-6)


def test_enumerated_bernstein_is_a_lower_bound():
    T = np.random.default_rng(3).normal(size=(3, 3))
    s = np.linalg.svd(T, compute_uv=False)
    rep = bernstein(T, 2, L2, method="enumerated", budget=300)
    assert rep.value <= s[1] * (1 + 1e-12)
    assert rep.value >= 0.8 * s[1]
    assert math.isclose(min_growth(T, rep.witness, L2), rep.value, rel_tol=1e-12)


def test_bernstein_argument_errors():
    T = np.eye(2)
    with pytest.raises(ValueError):
        bernstein(T, 3)
    with pytest.raises(ValueError):
        bernstein(T, 1, L1, method="closed_form")
    with pytest.raises(ValueError):
        bernstein(T, 1, method="guess")


def test_snumber_constants():
    assert snumber_constant(1) == 1.0
    assert snumber_constant(2) == 4.0
    assert math.isclose(snumber_constant(3), 16 * math.sqrt(2))


@given(gaussian_square(2, 4))
def test_snumber_chain_l2(T):
    assert check_snumber_chain(T, min(3, T.shape[0]), L2).passed


@pytest.mark.parametrize("n", [L1, LINF])
@pytest.mark.parametrize("seed", range(4))
def test_snumber_chain_polyhedral(n, seed):
    T = np.random.default_rng([seed, 1]).normal(size=(3, 3))
    rep = check_snumber_chain(T, 3, n, seed=seed)
    assert rep.passed, rep.to_json()
    assert len(rep.rows) == 6


def test_snumber_chain_of_singular_matrix():
    T = np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]])
    rep = check_snumber_chain(T, 3, L1)
    assert rep.passed
    assert rep.info[3]["rho"] == pytest.approx(0.0, abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.sampled_from([L2, L2, L1, LINF]))
def test_growth_inequalities_hold(seed, n):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 4))
    T, S = rng.normal(size=(2, d, d))
    j = int(rng.integers(1, d + 1))
    V = Subspace.span(rng.normal(size=(d, j)), dim=j)
    rep = check_growth_inequalities(T, S, V, int(rng.integers(1, d + 1)), n)
    assert rep.passed, rep.to_json()


def test_literal_product_lower_bound_fails_for_nilpotents():
    N = np.array([[0.0, 1.0], [0.0, 0.0]])
    rep = check_growth_inequalities(N, N, Subspace.coordinate(2, [1]), 1)
    assert rep.passed
    lit = rep.info["literal_product_lower"]
    assert lit["lhs"] == 1.0 and lit["rhs"] == 0.0 and not lit["holds"]


def test_report_rows_serialize():
    rep = check_growth_inequalities(np.eye(2), 2 * np.eye(2), Subspace.coordinate(2, [0]), 1)
    rows = rep.to_json()
    assert {r["name"] for r in rows} >= {"rho_k(ST) <= rho_k(T) ||S||"}
    assert all(r["pass"] for r in rows) and all(r["inputs_digest"] == rep.inputs_digest for r in rows)


def test_contraction_bound_formula():
    assert contraction_bound(1.0, 4.0) == pytest.approx(2 / 0.75 * 0.25)


def test_contraction_on_a_diagonal_map():
    T = np.diag([2.0, 0.5])
    V = Subspace.span(np.array([[1.0], [0.2]]))
    W = Subspace.span(np.array([[1.0], [-0.3]]))
    out = check_contraction(T, V, W, 1.2)
    assert out["pass"] and out["simplified_pass"]
    # images are the lines through (2, 0.1) and (2, -0.15)
    a = np.arctan2(0.1, 2.0) - np.arctan2(-0.15, 2.0)
    assert out["actual"] == pytest.approx(2 * math.sin(a / 2), rel=1e-12)


def test_contraction_preconditions():
    T = np.diag([2.0, 0.5])
    V = Subspace.coordinate(2, [0])
    with pytest.raises(PreconditionError):
        check_contraction(T, V, V, 3.0)
    with pytest.raises(PreconditionError):
        check_contraction(T, V, Subspace.span(np.array([[1.0], [5.0]])), 1.0)


def test_sandwich_on_a_diagonal_map():
    T = np.diag([3.0, 1.0, 0.2])
    proj = oblique_projection(Subspace.coordinate(3, [1, 2]), Subspace.coordinate(3, [0]))
    rep = check_sandwich(T, proj, proj, 1, 1)
    assert rep.passed and rep.info["upper_applies"]
    assert rep.rows[0].lhs == pytest.approx(1.0) and rep.rows[0].rhs == pytest.approx(1.0)


def test_sandwich_rejects_non_equivariant_pairs():
    T = np.diag([3.0, 1.0])
    proj = oblique_projection(Subspace.coordinate(2, [1]), Subspace.coordinate(2, [0]))
    other = oblique_projection(Subspace.coordinate(2, [0]), Subspace.coordinate(2, [1]))
    with pytest.raises(PreconditionError):
        check_sandwich(T, proj, other, 1, 1)
