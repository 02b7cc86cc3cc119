import numpy as np
import pytest

from cyclicspec.compression import compress
from cyclicspec.distributions import (dirac, from_function, good_pair_schedule, norm0_bound_check,
                                      pairing, representation_defect, theta_vector)
from cyclicspec.embedding import HNVector, embed_function, norm0, norm2
from cyclicspec.errors import InsufficientNError
from cyclicspec.measure import AtomicMeasure, UniformCircleMeasure, build_grid, grid_family
from cyclicspec.models import make_bilateral_shift
from oracles import FROZEN


def _zero():
    return 0 * dirac(0.5)


class TestFunctionals:
    def test_dirac_is_antilinear(self):
        assert dirac(1j).eval(lambda z: z) == pytest.approx(-1j)
        assert dirac(0.3).eval(lambda z: z**2) == pytest.approx(0.09)

    def test_dirac_box_coeff(self):
        d = dirac(0.5 + 0.5j)
        assert d.box_coeff((0, 1, 0, 1)) == 1
        assert d.box_coeff((-1, 0, 0, 1)) == 0

    def test_function_distribution_mean(self):
        atoms = AtomicMeasure(np.array([1, 1j, -1]), np.full(3, 1 / 3))
        t = from_function(lambda z: 1.0, atoms)
        f = lambda z: z**2 + 1j * z
        expected = np.mean(np.conj(f(np.array([1, 1j, -1]))))
        assert t.eval(f) == pytest.approx(expected)
        assert from_function(lambda z: 0.0, atoms).eval(f) == 0

    def test_box_coefficients_partition(self):
        atoms = AtomicMeasure(np.array([0.3 + 0.2j, -0.4j, 0.9]), np.array([0.2, 0.3, 0.5]))
        g = lambda z: 1 + z
        t = from_function(g, atoms)
        coeffs = t.box_coefficients(build_grid(2, 2))
        assert coeffs.sum() == pytest.approx(np.sum(g(atoms.points) * atoms.masses))

    def test_linear_combination(self):
        t = 2 * dirac(1) + dirac(1j)
        f = lambda z: z
        assert t.eval(f) == pytest.approx(2 - 1j)
        assert t.bound_K == pytest.approx(3)


class TestThetaVector:
    def test_dirac_i_diag3(self, diag3_data, diag3_grids):
        _, sd = diag3_data
        u = theta_vector(dirac(1j), sd, diag3_grids[2])
        k = int(np.argmin(np.abs(sd.lam - 1j)))
        assert u.coeffs[k] == pytest.approx(FROZEN["diag3_dirac_coeff"])
        assert np.count_nonzero(u.coeffs) == 1
        assert norm0(u) == pytest.approx(1.0)

    def test_zero(self, diag3_data, diag3_grids):
        _, sd = diag3_data
        assert not theta_vector(_zero(), sd, diag3_grids[2]).coeffs.any()

    def test_insufficient_N(self):
        _, sd = compress(make_bilateral_shift(5), 1)
        g = build_grid(2, 4)
        # alpha on the circle, in a box with arc mass but no eigenvalue
        alpha = np.exp(1j * 2.0)
        with pytest.raises(InsufficientNError):
            theta_vector(dirac(alpha), sd, g, reference=UniformCircleMeasure())


class TestPairing:
    def test_diag3_formula(self, diag3_data):
        _, sd = diag3_data
        f = lambda z: z**2 + 1
        g = lambda z: np.conj(z) - 2j
        val, _ = pairing(embed_function(f, sd), embed_function(g, sd))
        expected = np.sum(np.conj(f(sd.lam)) * g(sd.lam)) / 3
        assert val == pytest.approx(expected)

    def test_self_and_orthogonal(self, diag3_data, rng):
        _, sd = diag3_data
        v = HNVector(rng.normal(size=3) + 1j * rng.normal(size=3), sd)
        assert pairing(v, v)[0] == pytest.approx(norm2(v) ** 2)
        e0 = HNVector(np.array([1, 0, 0]), sd)
        e1 = HNVector(np.array([0, 1, 0]), sd)
        assert pairing(e0, e1)[0] == 0

    def test_report_bounds(self, shift_data_40, rng):
        _, sd = shift_data_40
        x = embed_function(lambda z: z**3, sd)
        y = HNVector(sd.xi * rng.normal(size=sd.D_N), sd)
        val, rep = pairing(x, y, near_region=lambda z: z.real > 0)
        assert abs(rep["near_value"]) <= rep["near_bound"] + 1e-12
        assert abs(rep["far_value"]) <= rep["far_bound"] + 1e-12
        assert rep["near_value"] + rep["far_value"] == pytest.approx(val)


class TestRepresentation:
    def test_diag3_dirac_exact(self, diag3_data, diag3_grids):
        _, sd = diag3_data
        d, budget = representation_defect(dirac(1j), lambda z: z, sd, diag3_grids[2])
        assert d <= 1e-10
        assert d <= budget

    def test_constant_function(self, shift_data_40):
        _, sd = shift_data_40
        t = from_function(lambda z: z.real**2, UniformCircleMeasure(quadrature_nodes=512))
        d, _ = representation_defect(t, lambda z: 2.5 + 0 * z, sd, build_grid(2, 2),
                                     reference=UniformCircleMeasure())
        assert d < 1e-10

    def test_zero(self, diag3_data, diag3_grids):
        _, sd = diag3_data
        assert representation_defect(_zero(), lambda z: z, sd, diag3_grids[2])[0] == 0

    def test_within_budget_shift(self, shift_data_40):
        _, sd = shift_data_40
        g = grid_family(2, 3)[3]
        d, budget = representation_defect(dirac(np.exp(0.7j)), lambda z: np.exp(z.real), sd, g)
        assert d <= budget


class TestSchedule:
    def test_diag3_valid(self, diag3_data, diag3_grids):
        _, sd = diag3_data
        sch = good_pair_schedule(dirac(1), [sd], diag3_grids[:3], n_max=2)
        e = sch.entry(1)
        assert e.valid and e.n == 2
        assert e.delta == pytest.approx(e.delta_prime / 2 ** (3 * 4))

    def test_zero_distribution_always_valid(self, diag3_data, diag3_grids):
        _, sd = diag3_data
        assert good_pair_schedule(_zero(), [sd], diag3_grids, n_max=3).entry(1).valid

    def test_nmax_zero_is_degenerate(self, diag3_data, diag3_grids):
        _, sd = diag3_data
        sch = good_pair_schedule(dirac(1), [sd], diag3_grids, n_max=0)
        assert [(e.n, e.valid) for e in sch.entries] == [(0, False)]

    def test_levels_monotone(self):
        sds = [compress(make_bilateral_shift(2 * N + 2), N)[1] for N in (10, 20, 40)]
        sch = good_pair_schedule(dirac(np.exp(0.3j)), sds, grid_family(2, 3), n_max=3,
                                 reference=UniformCircleMeasure())
        levels = [e.n for e in sch.entries if e.valid]
        assert levels == sorted(levels)
        assert len(sch.csv_rows()) == 3


class TestNorm0Bound:
    def test_dirac(self, diag3_grids):
        assert norm0_bound_check(dirac(1j), None, diag3_grids[2]) == (1.0, 16.0)

    def test_zero(self, diag3_grids):
        assert norm0_bound_check(_zero(), None, diag3_grids[2]) == (0.0, 0.0)

    def test_function(self, diag3_grids):
        atoms = AtomicMeasure(np.array([0.3 + 0.2j, -0.4j, 0.9]), np.array([0.2, 0.3, 0.5]))
        g = lambda z: np.exp(1j * z.real)
        lhs, rhs = norm0_bound_check(from_function(g, atoms), None, diag3_grids[2])
        assert lhs == pytest.approx(np.sum(np.abs(g(atoms.points)) * atoms.masses))
        assert rhs == pytest.approx(16 * np.sum(np.abs(g(atoms.points)) * atoms.masses))
        assert lhs <= rhs
