import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metlab.cocycle import BasePoint, BernoulliShift, CocycleSystem, Constant, Rotation, SymbolTable
from metlab.kingman import (
    MODES,
    additive_process,
    check_subadditivity,
    cluster_exponents,
    default_grid,
    estimate,
    log_norm_process,
    log_rho,
    log_rho_process,
    log_volume_process,
    lyapunov_spectrum,
    mode_interval,
    tail_estimate,
)
from metlab.normed import L1, L2, LINF

W0 = BasePoint(0, 0)


def iid(seed=0, d=3, m=3):
    rng = np.random.default_rng(seed)
    return CocycleSystem(BernoulliShift.uniform(m, seed), SymbolTable(rng.normal(size=(m, d, d))))


def bernoulli_points(rng):
    return BasePoint(int(rng.integers(0, 2**40)), 0)


@pytest.mark.parametrize("mode", MODES)
def test_constant_diagonal_modes_give_log_two(mode):
    c = CocycleSystem(Rotation(), Constant(np.diag([2.0, 0.5])))
    e = estimate(log_norm_process(c), W0, mode, 200)
    assert e.C_hat == pytest.approx(math.log(2.0), rel=1e-12)
    assert all(v == pytest.approx(math.log(2.0), rel=1e-12) for _, v in e.trace)


def test_mode_intervals():
    assert mode_interval("forward", 5) == (0, 5, 5)
    assert mode_interval("backward", 5) == (-5, 0, 5)
    assert mode_interval("window", 5) == (5, 10, 5)
    assert mode_interval("balanced", 5) == (-5, 5, 10)
    with pytest.raises(ValueError):
        mode_interval("sideways", 5)


def test_estimate_needs_enough_steps():
    c = CocycleSystem(Rotation(), Constant(np.eye(2)))
    with pytest.raises(ValueError):
        estimate(log_norm_process(c), W0, "forward", 7)


def test_default_grid():
    g = default_grid(2000)
    assert g[0] == 1 and g[-1] == 2000 and len(g) == 400 and np.all(np.diff(g) > 0)
    np.testing.assert_array_equal(default_grid(10), np.arange(1, 11))


def test_tail_estimate():
    assert tail_estimate([9.0, 9.0, 9.0, 1.0, 2.0, 3.0, 4.0, 5.0]) == 4.5
    assert tail_estimate([1.0, 2.0, -math.inf]) == -math.inf
    assert tail_estimate([3.0]) == 3.0


@pytest.mark.parametrize("n", [L2, L1, LINF])
def test_constant_diagonal_spectrum(n):
    c = CocycleSystem(Rotation(), Constant(np.diag([3.0, 2.0, 1.0])), n)
    s = lyapunov_spectrum(c, W0, n_max=64)
    # for a diagonal map rho_k = |d_k| in every lp norm, so each step is exact
    np.testing.assert_allclose(s.mu, np.log([3.0, 2.0, 1.0]), atol=1e-9)
    assert s.monotone_violation == 0.0
    assert list(s.mult) == [1, 1, 1]


def test_spectrum_sum_is_log_determinant():
    # the exponents of an iid product sum to E log |det A|
    c = iid(4)
    dets = np.log(np.abs(np.linalg.det(c.gen.mats)))
    s = lyapunov_spectrum(c, BasePoint(11, 0), n_max=4000)
    assert s.mu.sum() == pytest.approx(dets.mean(), abs=0.05)
    assert np.all(np.diff(s.mu) <= 0)


def test_singular_generator_has_minus_infinity():
    c = CocycleSystem(Rotation(), Constant(np.diag([2.0, 0.0])))
    s = lyapunov_spectrum(c, W0, n_max=32)
    assert s.mu[0] == pytest.approx(math.log(2.0)) and s.mu[1] == -math.inf
    assert s.finite_levels == 1
    assert s.to_json()["mu"][1] == "-inf"


def test_spectrum_argument_checks():
    c = CocycleSystem(Rotation(), Constant(np.eye(2)))
    with pytest.raises(ValueError):
        lyapunov_spectrum(c, W0, k_max=3, n_max=16)


def test_cluster_exponents():
    lam, mult = cluster_exponents([1.0, 0.97, 0.5, -math.inf, -math.inf])
    assert list(lam) == [1.0, 0.5, -math.inf] and list(mult) == [2, 1, 2]
    lam, mult = cluster_exponents([0.0, -0.05, -0.1, -0.15], gap_threshold=0.1)
    # levels chain through consecutive small gaps
    assert list(mult) == [4]


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8))
def test_cluster_multiplicities_add_up(vals):
    mu = sorted(vals, reverse=True)
    lam, mult = cluster_exponents(mu)
    assert mult.sum() == len(mu)
    assert np.all(np.diff(lam) < 0)


# -- subadditivity ---------------------------------------------------------

@pytest.mark.parametrize("seed", range(3))
def test_log_norm_process_is_subadditive(seed):
    c = iid(seed)
    for n in (L2, L1, LINF):
        assert check_subadditivity(log_norm_process(c, n), 100, seed, bernoulli_points)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_log_volume_process_is_subadditive(k):
    assert check_subadditivity(log_volume_process(iid(1), k), 100, 2, bernoulli_points)


def test_log_rho_process_is_not_subadditive_in_general():
    # in the plane rho_2 = |det| / ||T||; the norm is strictly submultiplicative for
    # A and RA, so log rho_2 is strictly superadditive along mixed words
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    A = np.array([[4.0, 0.0], [0.0, 0.25]])
    c = CocycleSystem(BernoulliShift([0.5, 0.5], 0), SymbolTable([A, R @ A]))
    rep = check_subadditivity(log_rho_process(c, 2), 200, 0, bernoulli_points, span=6)
    lvol = check_subadditivity(log_volume_process(c, 2), 200, 0, bernoulli_points, span=6)
    assert lvol.passed
    assert rep.worst > 0.1


def test_check_subadditivity_flags_a_superadditive_process():
    rep = check_subadditivity(lambda w, a, b: float((b - a) ** 2), 50)
    assert not rep.passed and rep.worst > 0


def test_additive_process_is_exactly_additive():
    proc = additive_process(lambda w, i: math.sin(i))
    assert proc(0, -3, 4) == pytest.approx(sum(math.sin(i) for i in range(-3, 4)), abs=1e-15)
    assert check_subadditivity(proc, 100).worst <= 1e-14


def test_additive_process_estimate_is_the_mean():
    # Birkhoff averages of a periodic sequence converge to the period mean
    proc = additive_process(lambda w, i: float(i % 3))
    for mode in MODES:
        assert estimate(proc, 0, mode, 300).C_hat == pytest.approx(1.0, abs=1e-2)


# -- rho in other norms ----------------------------------------------------

def test_log_rho_polyhedral_matches_plane_formula():
    # in the plane rho_2 = 1 / ||T^-1||
    c = iid(2, d=2)
    w = BasePoint(5, 0)
    M = c.evaluate_interval(w, 0, 3).dense()
    for n in (L1, LINF):
        r = log_rho(c, w, 0, 3, 2, n)
        assert not r.floor_hit
        assert r.value == pytest.approx(-math.log(np.abs(np.linalg.inv(M)).sum(axis=0 if n is L1 else 1).max()),
                                        rel=1e-8)


def test_log_rho_resolution_floor():
    c = CocycleSystem(Rotation(), Constant(np.diag([4.0, 0.25])), L1)
    r = log_rho(c, W0, 0, 40, 2)
    assert r.floor_hit and r.value == pytest.approx(40 * math.log(0.25), rel=1e-12)
