import math

import numpy as np
import pytest

from cyclicspec.compression import compress
from cyclicspec.embedding import (HNVector, ambient_polynomial_defect, embed_function,
                                  isometry_defect, l1_defect, norm0, norm2, norm_inf,
                                  norm_inf_table, polynomial_consistency, region_mask,
                                  zero_good_defect, zero_vector)
from cyclicspec.measure import (UniformCircleMeasure, box_masses, build_grid, counting_measure,
                                estimate_spectrum)
from cyclicspec.models import Polynomial, make_bilateral_shift


def test_embed_constant_is_phi(diag3_data):
    cs, sd = diag3_data
    v = embed_function(lambda z: 1.0, sd)
    np.testing.assert_allclose(v.coeffs, sd.xi)
    np.testing.assert_allclose(v.to_ambient(cs), cs.model.phi, atol=1e-14)


def test_embed_identity_norm(diag3_data):
    _, sd = diag3_data
    assert norm2(embed_function(lambda z: z, sd)) == pytest.approx(1.0)
    assert norm2(embed_function(lambda z: 0 * z, sd)) == 0.0


def test_vector_algebra(diag3_data):
    _, sd = diag3_data
    f = embed_function(lambda z: z, sd)
    g = embed_function(lambda z: np.conj(z), sd)
    np.testing.assert_allclose((f + g).coeffs, embed_function(lambda z: 2 * z.real, sd).coeffs)
    np.testing.assert_allclose((f - f).coeffs, 0)
    np.testing.assert_allclose((2j * f).coeffs, 2j * f.coeffs)
    np.testing.assert_allclose((-f).coeffs, -f.coeffs)
    with pytest.raises(ValueError):
        HNVector(np.zeros(2), sd)


def test_norms(diag3_data):
    _, sd = diag3_data
    assert norm0(embed_function(lambda z: 1.0, sd)) == pytest.approx(1.0)
    f = lambda z: z**2 + 3
    assert norm_inf(embed_function(f, sd)) == pytest.approx(np.max(np.abs(f(sd.lam))))
    assert norm_inf(zero_vector(sd)) == 0.0


def test_norm_inf_zero_weight(diag3_data):
    _, sd = diag3_data
    from dataclasses import replace

    sd0 = replace(sd, xi=np.array([0.0, sd.xi[1], sd.xi[2]]))
    v = HNVector(np.array([1.0, 0, 0]), sd0)
    assert norm_inf(v) == math.inf
    assert norm_inf(HNVector(np.zeros(3), sd0)) == 0.0


def test_norm_holder_chain(shift_data_40, rng):
    _, sd = shift_data_40
    v = HNVector(sd.xi * (rng.normal(size=sd.D_N) + 1j * rng.normal(size=sd.D_N)), sd)
    assert norm0(v) <= norm2(v) + 1e-12
    assert norm2(v) <= norm_inf(v) + 1e-12


def test_region_mask_forms():
    z = np.array([0.5 + 0.5j, -0.5 - 0.5j])
    assert region_mask(None, z).all()
    assert region_mask(lambda p: p.real > 0, z).tolist() == [True, False]
    assert region_mask([(0, 1, 0, 1)], z).tolist() == [True, False]


def test_isometry_diag3_exact(diag3_data):
    _, sd = diag3_data
    ref = list(zip(np.array([1, 1j, -1]), [1 / 3] * 3))
    for f in (lambda z: z**3 + 1j, lambda z: np.exp(z.real), lambda z: 5.0 + 0 * z):
        assert isometry_defect(f, sd, ref) < 1e-12


def test_isometry_shift_trig(shift_data_40):
    _, sd = shift_data_40
    f = lambda z: z + np.conj(z)
    assert isometry_defect(f, sd, UniformCircleMeasure()) < 1e-10


def test_l1_defect_decreases():
    vals = []
    for N in (10, 40):
        _, sd = compress(make_bilateral_shift(2 * N + 2), N)
        vals.append(l1_defect(lambda z: np.abs(z.real), sd, UniformCircleMeasure()))
    assert vals[1] < vals[0]


def test_polynomial_consistency():
    m = make_bilateral_shift(12)
    cs, sd = compress(m, 5)
    P = Polynomial.random(3, np.random.default_rng(0))
    assert polynomial_consistency(m, cs, sd, Polynomial.one()) < 1e-12
    assert polynomial_consistency(m, cs, sd, P) < 1e-8
    assert ambient_polynomial_defect(m, cs, sd, P) < 1e-8


def test_zero_good(diag3_data, diag3_grids, shift_data_40):
    _, sd = diag3_data
    g = diag3_grids[2]
    est = estimate_spectrum([box_masses(counting_measure(sd), g)], 1e-3)
    v = HNVector(np.array([1.0, 2.0, 3.0]), sd)
    assert zero_good_defect(v, None, est) == 0.0
    assert zero_good_defect(v, None, []) == pytest.approx(norm0(v))
    _, sd40 = shift_data_40
    g2 = build_grid(2, 2)
    circle_est = estimate_spectrum([box_masses(counting_measure(sd40), g2)], 1e-12)
    assert zero_good_defect(embed_function(lambda z: 1.0, sd40), None, circle_est) == 0.0


def test_norm_inf_table(diag3_data, diag3_grids):
    _, sd = diag3_data
    est = estimate_spectrum([box_masses(counting_measure(sd), diag3_grids[2])], 1e-3)
    table = norm_inf_table(embed_function(lambda z: z, sd), est, exponents=[1, 2])
    assert [e for e, _ in table] == [0.5, 0.25]
    assert all(val == pytest.approx(1.0) for _, val in table)
