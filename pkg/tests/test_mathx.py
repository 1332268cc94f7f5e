"""Special functions, quadrature, tabulated grids and random streams."""

import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from lmsacm.mathx import (
    DomainError,
    Grid1D,
    QuadratureError,
    RngStream,
    bessel_i0,
    gaussian_q,
    integrate_semiinf,
    marcum_q1,
)


def rician_tail(a, b):
    """Independent oracle: integrate the Rician density from b to infinity."""
    f = lambda r: r * math.exp(-0.5 * (r - a) ** 2) * special.i0e(a * r)
    return integrate.quad(f, b, math.inf, epsabs=1e-15, epsrel=1e-13, limit=400)[0]


class TestMarcumQ:
    def test_rayleigh_limit(self):
        b = np.linspace(0, 8, 17)
        npt.assert_allclose(marcum_q1(0.0, b), np.exp(-b**2 / 2), rtol=1e-14, atol=1e-300)

    def test_b_zero_is_one(self):
        npt.assert_array_equal(marcum_q1(np.array([0.0, 1.0, 50.0]), 0.0), 1.0)

    def test_against_quadrature(self):
        a = np.linspace(0, 12, 9)
        b = np.linspace(0.05, 14, 9)
        A, B = np.meshgrid(a, b)
        ref = np.vectorize(rician_tail)(A, B)
        npt.assert_allclose(marcum_q1(A, B), ref, atol=1e-12)

    def test_against_noncentral_chi2(self):
        # Q1(a, b) = P[chi'^2_2(a^2) > b^2]; scipy's ncx2 is an unrelated implementation
        a = np.array([0.3, 2.0, 7.5, 20.0, 40.0])
        b = np.array([1.0, 2.5, 7.0, 21.0, 38.0])
        npt.assert_allclose(marcum_q1(a, b), stats.ncx2.sf(b**2, 2, a**2), rtol=1e-7)

    @given(st.floats(0, 30), st.floats(0, 30))
    @settings(max_examples=200, deadline=None)
    def test_symmetry_identity(self, a, b):
        # Q1(a,b) + Q1(b,a) = 1 + exp(-(a^2+b^2)/2) I0(ab)
        lhs = marcum_q1(a, b) + marcum_q1(b, a)
        rhs = 1.0 + math.exp(-(a - b) ** 2 / 2) * special.i0e(a * b)
        assert lhs == pytest.approx(rhs, abs=1e-12)

    @given(st.floats(0, 25), st.lists(st.floats(0, 40), min_size=2, max_size=8))
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_b(self, a, bs):
        q = marcum_q1(a, np.sort(np.array(bs)))
        assert np.all(np.diff(q) <= 1e-15)
        assert np.all((q >= 0) & (q <= 1))

    def test_large_arguments_switch_branch_smoothly(self):
        # ab straddles the series / mixture boundary
        a = 6.0
        b = np.array([4.99, 5.0, 5.01]) * 1.0
        npt.assert_allclose(marcum_q1(a, b), [rician_tail(a, x) for x in b], atol=1e-13)

    @pytest.mark.parametrize("a, b", [(-1.0, 1.0), (1.0, -0.5), (math.nan, 1.0), (1.0, math.inf)])
    def test_domain_errors(self, a, b):
        with pytest.raises(DomainError):
            marcum_q1(a, b)


class TestElementary:
    def test_bessel_i0_matches_series(self):
        x = np.array([0.0, 0.5, 3.0, 20.0])
        series = sum((x / 2) ** (2 * k) / math.factorial(k) ** 2 for k in range(80))
        npt.assert_allclose(bessel_i0(x), series, rtol=1e-13)

    def test_bessel_i0_large_is_finite(self):
        assert np.isfinite(bessel_i0(700.0))

    def test_gaussian_q(self):
        assert gaussian_q(0.0) == 0.5
        npt.assert_allclose(gaussian_q(1.959963984540054), 0.025, rtol=1e-12)
        npt.assert_allclose(gaussian_q(-3.0) + gaussian_q(3.0), 1.0, rtol=1e-15)


class TestIntegrateSemiinf:
    def test_exponential(self):
        assert integrate_semiinf(lambda x: math.exp(-x)) == pytest.approx(1.0, rel=1e-12)

    def test_breakpoints_resolve_narrow_peak(self):
        f = lambda x: math.exp(-0.5 * ((x - 500.0) / 0.01) ** 2)
        val = integrate_semiinf(f, points=(499.9, 500.0, 500.1))
        assert val == pytest.approx(0.01 * math.sqrt(2 * math.pi), rel=1e-9)

    def test_log_singularity(self):
        # int_0^inf log(x) e^{-x} dx = -Euler gamma
        val = integrate_semiinf(lambda x: math.log(x) * math.exp(-x) if x > 0 else 0.0, points=(1.0,))
        assert val == pytest.approx(-np.euler_gamma, rel=1e-9)

    def test_failure_reports_estimate(self):
        with pytest.raises(QuadratureError) as info:
            integrate_semiinf(lambda x: 1.0 / x if x > 0 else 0.0, limit=5)
        assert hasattr(info.value, "estimate")


class TestGrid1D:
    def test_interpolates_monotone_data_monotonically(self):
        x = np.linspace(0, 10, 11)
        g = Grid1D(x, np.tanh(x - 5))
        fine = np.linspace(0, 10, 1001)
        assert np.all(np.diff(g(fine)) >= 0)

    def test_clamps_outside(self):
        g = Grid1D([0.0, 1.0, 2.0], [0.0, 1.0, 4.0])
        assert g(-5.0) == 0.0 and g(10.0) == 4.0

    def test_invert_round_trip(self):
        x = np.linspace(-3, 3, 61)
        g = Grid1D(x, x**3 + x)
        y = np.array([-20.0, -1.0, 0.0, 2.5, 20.0])
        npt.assert_allclose(g(g.invert(y, tol=1e-13)), y, atol=1e-9)

    def test_invert_decreasing(self):
        x = np.linspace(0, 5, 51)
        g = Grid1D(x, np.exp(-x))
        assert g.invert(math.exp(-2.0), tol=1e-13, increasing=False) == pytest.approx(2.0, abs=1e-6)

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            Grid1D([0.0, 2.0, 1.0], [0.0, 1.0, 2.0])


class TestRngStream:
    def test_same_key_same_draws(self):
        npt.assert_array_equal(RngStream(7, 3).normal(50), RngStream(7, 3).normal(50))

    def test_distinct_streams_differ(self):
        assert not np.array_equal(RngStream(7, 3).normal(50), RngStream(7, 4).normal(50))
        assert not np.array_equal(RngStream(7, 3).normal(50), RngStream(8, 3).normal(50))

    def test_complex_normal_unit_power(self):
        z = RngStream(1, 0).complex_normal(400_000)
        assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, abs=0.01)
        assert abs(np.mean(z)) < 0.01
        assert abs(np.mean(z * z)) < 0.01  # circular

    def test_rejects_out_of_range_ids(self):
        with pytest.raises(ValueError):
            RngStream(-1)
        with pytest.raises(ValueError):
            RngStream(1, 2**64)
