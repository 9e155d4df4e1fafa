import math

import numpy as np
import pytest
from scipy import integrate, special

from src.models.series import SeriesControl
from src.services.errors import DomainError, SeriesConvergenceError
from src.services.special_functions import (
    bessel_i0,
    exp1_scaled,
    exp_integral_ei,
    gaussian_q,
    gaussian_q_inv,
    hyp2f1,
    log_hyp2f1,
    marcum_q1,
    upper_incomplete_gamma,
)


def _marcum_by_quadrature(a, b):
    # Q1(a, b) = int_b^inf x exp(-(x - a)^2 / 2) i0e(a x) dx
    value, _ = integrate.quad(lambda x: x * math.exp(-0.5 * (x - a) ** 2) * special.i0e(a * x),
                              b, np.inf, epsabs=0.0, epsrel=1e-13, limit=400)
    return value


class TestGaussianQ:

    def test_q_at_zero(self):
        assert gaussian_q(0.0) == pytest.approx(0.5)

    @pytest.mark.parametrize('p', [1e-9, 0.01, 0.15, 0.5, 0.85, 0.999])
    def test_inverse(self, p):
        assert gaussian_q(gaussian_q_inv(p)) == pytest.approx(p, rel=1e-10)

    @pytest.mark.parametrize('p', [0.0, 1.0, -0.1, 1.5])
    def test_inverse_domain(self, p):
        with pytest.raises(DomainError):
            gaussian_q_inv(p)


class TestBessel:

    def test_i0_at_zero(self):
        assert bessel_i0(0.0) == 1.0

    @pytest.mark.parametrize('x', [0.1, 3.0, 40.0])
    def test_scaled_matches_unscaled(self, x):
        assert bessel_i0(x, scaled=True) == pytest.approx(math.exp(-x) * bessel_i0(x), rel=1e-13)

    def test_overflow_needs_scaled_variant(self):
        with pytest.raises(OverflowError):
            bessel_i0(1000.0)
        assert math.isfinite(bessel_i0(1000.0, scaled=True))

    def test_negative_argument(self):
        with pytest.raises(DomainError):
            bessel_i0(-1.0)


class TestMarcumQ:

    def test_zero_threshold(self):
        assert marcum_q1(2.0, 0.0) == 1.0

    @pytest.mark.parametrize('b', [0.3, 1.0, 4.0])
    def test_zero_noncentrality(self, b):
        assert marcum_q1(0.0, b) == pytest.approx(math.exp(-b * b / 2.0), rel=1e-15)

    @pytest.mark.parametrize('a', [0.5, 1.0, 3.0, 7.0])
    @pytest.mark.parametrize('b', [0.2, 1.0, 4.0, 8.0])
    def test_against_quadrature(self, a, b):
        assert marcum_q1(a, b) == pytest.approx(_marcum_by_quadrature(a, b), rel=1e-8, abs=1e-300)

    def test_large_noncentrality(self):
        # window around a Poisson mode far beyond max_terms
        a, b = 150.0, 149.0
        assert marcum_q1(a, b) == pytest.approx(_marcum_by_quadrature(a, b), rel=1e-8)

    def test_far_tail_underflows_to_zero(self):
        assert marcum_q1(1.0, 60.0) == 0.0

    def test_domain(self):
        with pytest.raises(DomainError):
            marcum_q1(-1.0, 1.0)


class TestExponentialIntegrals:

    @pytest.mark.parametrize('x', [1e-3, 0.3, 1.0, 1.5, 7.0, 120.0])
    def test_scaled_e1(self, x):
        assert exp1_scaled(x) == pytest.approx(math.exp(x) * special.exp1(x), rel=1e-10)

    @pytest.mark.parametrize('x', [-40.0, -2.0, -0.1, 0.5, 3.0])
    def test_ei(self, x):
        assert exp_integral_ei(x) == pytest.approx(special.expi(x), rel=1e-10)

    def test_ei_singularity(self):
        with pytest.raises(DomainError):
            exp_integral_ei(0.0)

    def test_e1_domain(self):
        with pytest.raises(DomainError):
            exp1_scaled(0.0)

    def test_upper_incomplete_gamma_integer_order(self):
        # Gamma(3, 2) = e^-2 (2^2 + 2*2 + 2)
        assert upper_incomplete_gamma(3, 2.0) == pytest.approx(10.0 * math.exp(-2.0), rel=1e-13)
        assert upper_incomplete_gamma(0.5, 0.0) == pytest.approx(math.sqrt(math.pi), rel=1e-14)


class TestHypergeometric:

    @pytest.mark.parametrize('a, b, c, z', [
        (1.0, 2.0, 3.0, -0.5),
        (2.0, 4.0, 3.0, -3.0),
        (0.5, 1.5, 2.5, 0.4),
        (3.0, 6.0, 4.0, -0.9),
        (5.0, 10.0, 6.0, -1.0),
        (1.0, 1.0, 2.0, 0.0),
    ])
    def test_against_scipy(self, a, b, c, z):
        assert hyp2f1(a, b, c, z) == pytest.approx(special.hyp2f1(a, b, c, z), rel=1e-9)

    def test_log_form(self):
        log_abs, sign = log_hyp2f1(2.0, 4.0, 3.0, -3.0)
        assert sign == 1.0
        assert log_abs == pytest.approx(math.log(special.hyp2f1(2.0, 4.0, 3.0, -3.0)), rel=1e-9)

    def test_divergent_argument(self):
        with pytest.raises(SeriesConvergenceError):
            hyp2f1(1.0, 1.0, 2.0, 1.0)

    def test_undefined_lower_parameter(self):
        with pytest.raises(DomainError):
            hyp2f1(1.0, 1.0, -2.0, 0.5)

    def test_term_cap(self):
        with pytest.raises(SeriesConvergenceError):
            hyp2f1(1.0, 1.0, 2.0, 0.9, SeriesControl(max_terms=5))
