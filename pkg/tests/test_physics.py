import math

import numpy as np
import pytest

from chieq.physics import (DomainError, PhysParams, ShiftTooSmall, free_energy,
                           free_energy_deriv, free_energy_second_deriv,
                           h_factor, mobility, validate_shift)

P = PhysParams()


class TestParams:
    def test_defaults(self):
        assert (P.epsilon, P.sigma, P.theta, P.B) == (0.05, 0.005, 2.5, 3.5)

    @pytest.mark.parametrize("kw", [dict(epsilon=0.0), dict(epsilon=-1.0),
                                    dict(sigma=0.0), dict(sigma=0.5),
                                    dict(theta=1.0), dict(B=-0.1)])
    def test_rejects_bad_values(self, kw):
        with pytest.raises(ValueError):
            PhysParams(**kw)

    def test_zero_shift_constructs(self):
        # B = 0 must be constructible so validate_shift can report it
        PhysParams(B=0.0)


class TestMobility:
    def test_peak_value(self):
        assert mobility(0.5) == pytest.approx(0.25, abs=0.0)

    def test_continuity_at_zero(self):
        # both branches give sigma/4 at the boundary of [0, 1]
        assert mobility(0.0) == pytest.approx(0.00125, rel=1e-14)
        assert mobility(1.0) == pytest.approx(0.00125, rel=1e-14)

    def test_far_field_floor(self):
        # exponent -2(1-sigma)((2x-1)^2-1)/sigma = -3184 at x=2: underflows
        assert mobility(2.0) == 0.005 / 8.0

    def test_bounds_on_scan(self):
        x = np.arange(-10.0, 11.0, 1e-3)
        m = mobility(x)
        assert np.all(m >= 0.005 / 8.0)
        assert np.all(m <= 0.25)

    def test_symmetry(self):
        x = np.linspace(-10.0, 11.0, 10001)
        a, b = mobility(x), mobility(1.0 - x)
        assert np.max(np.abs(a - b) / np.abs(b)) <= 1e-15


class TestFreeEnergy:
    def test_middle_branch_value(self):
        # phi = 1/2: both log terms give ln(1/2)/..., bulk theta/4
        assert free_energy(0.5, P) == pytest.approx(math.log(0.5) + 0.625,
                                                    rel=1e-15)

    def test_lower_branch_at_zero(self):
        # only the -sigma/2 constant survives at phi = 0
        assert free_energy(0.0, P) == pytest.approx(-0.0025, rel=1e-14)

    @pytest.mark.parametrize("x0", [0.005, 0.995])
    def test_stitch_continuity(self, x0):
        for fn in (free_energy, free_energy_deriv, free_energy_second_deriv):
            below = fn(np.nextafter(x0, -np.inf), P)
            above = fn(np.nextafter(x0, np.inf), P)
            assert abs(above - below) <= 1e-12 * abs(below)

    def test_deriv_value_at_stitch(self):
        want = math.log(0.005 / 0.995) + 2.5 * (1 - 2 * 0.005)
        assert free_energy_deriv(0.005, P) == pytest.approx(want, rel=1e-14)

    def test_deriv_is_odd_symmetric_at_half(self):
        assert free_energy_deriv(0.5, P) == 0.0

    def test_deriv_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        x = rng.uniform(-2.0, 3.0, 10000)
        h = 1e-6
        fd = (free_energy(x + h, P) - free_energy(x - h, P)) / (2 * h)
        f = free_energy_deriv(x, P)
        assert np.max(np.abs(fd - f) / np.maximum(np.abs(f), 1.0)) <= 1e-6

    def test_defined_on_all_reals(self):
        x = np.array([-1e4, -10.0, 0.0, 0.5, 1.0, 11.0, 1e4])
        assert np.all(np.isfinite(free_energy(x, P)))
        assert np.all(np.isfinite(free_energy_deriv(x, P)))


class TestHFactor:
    def test_zero_at_half(self):
        assert h_factor(0.5, P) == 0.0

    def test_quadratization_identity(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-3.0, 4.0, 20000)
        lhs = h_factor(x, P) ** 2 * (free_energy(x, P) + P.B)
        rhs = free_energy_deriv(x, P) ** 2
        mask = rhs > 1e-8
        assert np.max(np.abs(lhs[mask] - rhs[mask]) / rhs[mask]) <= 1e-12

    def test_value_at_zero(self):
        want = free_energy_deriv(0.0, P) / math.sqrt(free_energy(0.0, P) + P.B)
        assert h_factor(0.0, P) == pytest.approx(want, rel=1e-15)
        assert h_factor(0.0, P) == pytest.approx(-2.031011523955948, rel=1e-12)

    def test_domain_error_when_shift_too_small(self):
        bad = PhysParams(B=0.0)
        with pytest.raises(DomainError):
            h_factor(0.5, bad)


class TestValidateShift:
    def test_defaults_pass(self):
        validate_shift(P)

    def test_huge_shift_passes(self):
        validate_shift(PhysParams(B=1e6))

    def test_zero_shift_fails_inside_well(self):
        with pytest.raises(ShiftTooSmall) as err:
            validate_shift(PhysParams(B=0.0))
        # the scan minimum is the well bottom, inside (0, 1)
        assert 0.0 < err.value.argmin < 1.0
        assert err.value.min_value < 0.0
        assert err.value.min_value == pytest.approx(-0.104, abs=5e-3)
