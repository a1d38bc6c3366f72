import math
import warnings

import numpy as np
import pytest

from helios.error_bounds import (
    SingleSourceSetup,
    aperture_distances,
    prior_edge_slope,
    bound_report,
    g_cross,
    g_prime,
    posterior_root,
    prior_bound,
)
from helios.errors import ContractViolation, InvalidInputError

EX = SingleSourceSetup(k=4.0, xi=6.0, theta_dist=7 - 2 * math.sqrt(2), lam=5.0)


class TestGPrime:
    def test_positive_at_zero(self):
        assert g_prime(0.0, EX) > 0

    def test_negative_at_prior_radius(self):
        for lam in (0.5, 1.0, 5.0, 7.0):
            s = SingleSourceSetup(4.0, 6.0, 4.0, lam)
            assert g_prime(1 / 60, s) < 0

    def test_sign_independent_of_lambda(self):
        y = np.random.default_rng(1).uniform(0, 0.5, 50)
        a = g_prime(y, SingleSourceSetup(4.0, 6.0, 4.0, 1.0))
        b = g_prime(y, SingleSourceSetup(4.0, 6.0, 4.0, 7.0))
        np.testing.assert_array_equal(np.sign(a), np.sign(b))

    def test_value_at_zero_is_g_over_modulus_cubed(self):
        t = 24.0
        mod = math.hypot(*_j0y0(t))
        assert g_prime(0.0, EX) == pytest.approx(5.0 * g_cross(t) / mod ** 3, rel=1e-13)

    def test_sweep(self):
        for k in np.linspace(2.0, 12.0, 20):
            for z in np.linspace(15.0, 120.0, 20):
                s = SingleSourceSetup(k, z / k, z / k)
                assert g_prime(0.0, s) > 0
                assert g_prime(1 / (15 * k), s) < 0


def _j0y0(t):
    from helios.special_fn import bessel_j0, bessel_y0
    return bessel_j0(t), bessel_y0(t)


class TestPriorEdgeSlope:
    def test_value_at_15(self):
        assert prior_edge_slope(15.0) == pytest.approx(-0.000982197, abs=1e-6)

    def test_homogeneous(self):
        assert prior_edge_slope(20.0, 2.0) == pytest.approx(2 * prior_edge_slope(20.0, 1.0), rel=1e-12)

    def test_decreasing(self):
        a = prior_edge_slope(np.linspace(15.0, 100.0, 1000))
        assert np.all(np.diff(a) < 0)

    def test_matches_g_prime(self):
        # A(z) is g'(1/(15k)) written with z = k xi
        s = SingleSourceSetup(3.0, 7.0, 7.0)
        assert prior_edge_slope(21.0) == pytest.approx(g_prime(1 / 45, s), rel=1e-12)

    def test_warns_below_contract(self):
        with pytest.warns(RuntimeWarning):
            prior_edge_slope(10.0)


class TestPriorBound:
    def test_example(self):
        assert prior_bound(4.0) == pytest.approx(1 / 60)
        assert abs(prior_bound(4.0) - 1.66e-2) < 1e-4

    def test_formula(self):
        assert prior_bound(15.0) == 1 / 225
        ks = np.linspace(0.5, 20, 40)
        assert all(prior_bound(a) > prior_bound(b) for a, b in zip(ks, ks[1:]))

    def test_precondition(self):
        with pytest.raises(ContractViolation):
            prior_bound(1.0, theta_dist=4.0)


class TestPosteriorRoot:
    def test_example_value(self):
        # the formula as written puts the root at 1.0392e-2 for k=4, xi=6
        assert posterior_root(EX, 1e-7) == pytest.approx(1.0392e-2, abs=5e-6)

    def test_below_prior(self):
        for k, xi in [(4, 6), (5, 4), (10, 3), (3, 9)]:
            s = SingleSourceSetup(k, xi, xi)
            assert posterior_root(s) < prior_bound(k)

    def test_local_sign_change(self):
        tol = 1e-7
        x0 = posterior_root(EX, tol)
        assert g_prime(x0 - tol, EX) > 0
        assert g_prime(x0 + tol, EX) < 0

    def test_lambda_invariant(self):
        a = posterior_root(SingleSourceSetup(4, 6, 4, 1.0), 1e-10)
        b = posterior_root(SingleSourceSetup(4, 6, 4, 6.5), 1e-10)
        assert a == b

    def test_no_sign_change(self):
        with pytest.raises(ContractViolation):
            posterior_root(SingleSourceSetup(1.0, 2.0, 2.0))

    def test_setup_validation(self):
        with pytest.raises(InvalidInputError):
            SingleSourceSetup(4.0, 3.0, 4.0)


class TestGeometry:
    def test_example_distances(self):
        theta, xi = aperture_distances(7.0, math.pi / 4, (1.0, 0.0))
        assert theta == pytest.approx(7 - 2 * math.sqrt(2))
        assert xi == pytest.approx(6.0)

    def test_report(self):
        r = bound_report(4.0, 6.0, 4.1715)
        assert r["k*Theta >= 15"] and r["prior_bound"] == pytest.approx(1 / 60)
