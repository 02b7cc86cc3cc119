import math

import numpy as np
import pytest

from cyclicspec.compression import compress
from cyclicspec.distributions import dirac, theta_vector
from cyclicspec.embedding import norm2
from cyclicspec.errors import InsufficientNError
from cyclicspec.kernelprop import (ApproxOperator, box_vector, builtin_kernel, check_C1,
                                   check_C1_inf, check_C2, check_C2prime_C3prime,
                                   constant_kernel, dirac_propagator, exp_re_kernel,
                                   kernel_estimate, kernel_operator, propagator, xy_conj_kernel)
from cyclicspec.measure import counting_measure, grid_family
from cyclicspec.models import Polynomial, make_bilateral_shift
from oracles import FROZEN, double_sum_propagator


def test_kernel_operator_entries(diag3_data):
    _, sd = diag3_data
    B = kernel_operator(xy_conj_kernel(), sd)
    lam = sd.lam
    for n in range(3):
        for k in range(3):
            assert B.matrix[n, k] == pytest.approx(lam[k] * np.conj(lam[n]) / 3)
    ones = kernel_operator(constant_kernel(1.0), sd).matrix
    np.testing.assert_allclose(ones, np.full((3, 3), 1 / 3))
    assert np.linalg.matrix_rank(ones) == 1
    assert not kernel_operator(constant_kernel(0.0), sd).matrix.any()


def test_builtin_kernel_lookup():
    assert builtin_kernel("exp_re").sup_bound == pytest.approx(math.e)
    assert builtin_kernel("constant", value=2).sup_bound == 2
    with pytest.raises(ValueError):
        builtin_kernel("gaussian")


def test_box_vector_matches_theta(diag3_data, diag3_grids):
    _, sd = diag3_data
    u = box_vector(1, 2, sd, diag3_grids)
    np.testing.assert_array_equal(u.coeffs, theta_vector(dirac(1), sd, diag3_grids[2]).coeffs)
    assert norm2(u) == pytest.approx(math.sqrt(3))
    with pytest.raises(InsufficientNError):
        box_vector(0.5 + 0.5j, 2, sd, diag3_grids)


def test_box_vector_norm_is_inverse_sqrt_mass(shift_data_40):
    _, sd = shift_data_40
    grids = grid_family(2, 3)
    g = grids[3]
    alpha = np.exp(0.4j)
    mu = counting_measure(sd).box_mass(g.rect(*g.box_of(alpha)))
    assert norm2(box_vector(alpha, 3, sd, grids)) == pytest.approx(1 / math.sqrt(mu))


def test_propagator_diag3_exact(diag3_data, diag3_grids):
    _, sd = diag3_data
    B = kernel_operator(xy_conj_kernel(), sd)
    val = propagator(B, 1, 1j, 2, sd, diag3_grids)
    assert val == pytest.approx(FROZEN["diag3_xyconj_1_i"], abs=1e-14)
    c = kernel_operator(constant_kernel(2.5 - 1j), sd)
    assert propagator(c, -1, 1j, 2, sd, diag3_grids) == pytest.approx(2.5 - 1j)
    z = kernel_operator(constant_kernel(0.0), sd)
    assert propagator(z, 1, 1j, 2, sd, diag3_grids) == 0


def test_propagator_double_sum_oracle(shift_data_40):
    _, sd = shift_data_40
    grids = grid_family(2, 3)
    K = exp_re_kernel()
    B = kernel_operator(K, sd)
    alpha, beta = np.exp(0.5j), np.exp(2.1j)
    g = grids[2]
    li, lj, on = g.locate(sd.lam)
    in_a = (~on) & (li == g.box_of(alpha)[0]) & (lj == g.box_of(alpha)[1])
    in_b = (~on) & (li == g.box_of(beta)[0]) & (lj == g.box_of(beta)[1])
    # the propagator pairs beta's box against B applied to alpha's box
    oracle = double_sum_propagator(lambda l, k: complex(K(k, l)), sd.lam, sd.xi, in_b, in_a)
    assert propagator(B, alpha, beta, 2, sd, grids) == pytest.approx(oracle, rel=1e-12)


def test_kernel_estimate_diag3(diag3_data, diag3_grids):
    _, sd = diag3_data
    K = xy_conj_kernel()
    est = kernel_estimate([kernel_operator(K, sd)], 1, 1j, [0, 1, 2, 3], diag3_grids)
    assert abs(est.value - K(1, 1j)) < 1e-14
    assert est.budget <= 1e-12 or abs(est.value - K(1, 1j)) <= est.budget


def test_kernel_estimate_shift_budget():
    _, sd = compress(make_bilateral_shift(602), 300)
    grids = grid_family(2, 4)
    K = exp_re_kernel()
    alpha, beta = np.exp(0.9j), np.exp(-2.0j)
    est = kernel_estimate([kernel_operator(K, sd)], alpha, beta, range(5), grids)
    assert abs(est.value - K(alpha, beta)) <= est.budget
    assert max(p for p, *_ in est.rows) == 4


def test_kernel_estimate_truncates_levels(shift5_data):
    _, sd = shift5_data
    grids = grid_family(2, 5)
    est = kernel_estimate([kernel_operator(exp_re_kernel(), sd)], np.exp(1.0j), np.exp(2.3j),
                          range(6), grids)
    assert max(p for p, *_ in est.rows) < 5


class TestConditions:
    def test_c1(self, shift_data_40):
        _, sd = shift_data_40
        zero = ApproxOperator(np.zeros((sd.D_N, sd.D_N)), sd)
        assert check_C1(zero) == 0.0
        K = exp_re_kernel()
        B = kernel_operator(K, sd)
        dense = np.linalg.norm(B.matrix, 2)
        sampled = check_C1(B)
        assert sampled <= K.sup_bound + 1e-12
        assert sampled == pytest.approx(dense, rel=1e-6)

    def test_c1_inf(self, diag3_data):
        _, sd = diag3_data
        B = kernel_operator(xy_conj_kernel(), sd)
        assert check_C1_inf(B) <= 1 + 1e-12

    def test_c2(self, diag3_data):
        _, sd = diag3_data
        polys = [Polynomial.one(), Polynomial.monomial(1, 0), Polynomial.monomial(0, 2, 1j)]
        K = exp_re_kernel()
        assert check_C2(kernel_operator(K, sd), K, sd, None, polys) <= 1e-8
        assert check_C2(kernel_operator(constant_kernel(0), sd), constant_kernel(0), sd, None,
                        polys) == 0
        bad = ApproxOperator(np.eye(3), sd)
        assert check_C2(bad, K, sd, None, polys) > 0.1

    def test_c2p_c3p(self, diag3_data, diag3_grids):
        _, sd = diag3_data
        K = xy_conj_kernel()
        B = kernel_operator(K, sd)
        c2p, c3p = check_C2prime_C3prime(B, sd, diag3_grids[2], p_grids=diag3_grids[:2])
        assert c2p <= 1e-10
        assert c3p <= 3 * K.sup_bound
        zero = ApproxOperator(np.zeros((3, 3)), sd, kernel=constant_kernel(0))
        assert check_C2prime_C3prime(zero, sd, diag3_grids[2]) == (0.0, 0.0)


def test_dirac_propagator(diag3_data, diag3_grids):
    _, sd = diag3_data
    B = kernel_operator(xy_conj_kernel(), sd)
    val, rep = dirac_propagator(B, dirac(1), dirac(1j), sd, diag3_grids[2])
    assert val == pytest.approx(-1j, abs=1e-14)
    zero = kernel_operator(constant_kernel(0), sd)
    assert dirac_propagator(zero, dirac(1), dirac(1j), sd, diag3_grids[2])[0] == 0
