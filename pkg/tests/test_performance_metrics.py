import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import gamma

from src.models.channel import BeamChannelModel
from src.models.scenario import ModulationSpec
from src.services.beam_selection import selected_gain_cdf
from src.services.capacity_optimizer import build_policy
from src.services.errors import DomainError
from src.services.experiment_service import build_scenario
from src.services.performance_metrics import (
    j_func,
    outage_probability,
    symbol_error_probability,
    symbol_error_probability_quadrature,
)


def test_outage_is_selected_gain_cdf(beams):
    for zeta in (0.1, 0.7, 2.0):
        assert outage_probability(beams, zeta) == selected_gain_cdf(beams, zeta)
    assert outage_probability(beams, 0.0) == 0.0
    with pytest.raises(DomainError):
        outage_probability(beams, -1.0)


def test_outage_grows_with_threshold(beams):
    values = [outage_probability(beams, z) for z in (0.2, 0.5, 1.0, 3.0)]
    assert all(a < b for a, b in zip(values, values[1:]))


def test_j_unit_case():
    assert j_func(0, 3.0, 4.0, 0.0, 0.0) == pytest.approx(math.sqrt(2.0 * math.pi), rel=1e-13)


@pytest.mark.parametrize('k, s, psi, omega', [(0, 1.0, 4.0, 1.0), (1, 2.5, 2.0, 0.3), (4, 0.5, 4.0, 3.0)])
def test_j_at_zero_threshold(k, s, psi, omega):
    a = s * psi / 2.0 + omega
    expected = math.sqrt(s) * psi ** (k + 0.5) * gamma(k + 0.5) / a ** (k + 0.5)
    assert j_func(k, s, psi, omega, 0.0) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize('k, s, psi, omega, zeta', [
    (0, 1.0, 4.0, 1.0, 0.5), (2, 2.5, 2.0, 0.3, 1.2), (5, 0.5, 4.0, 3.0, 0.2),
])
def test_j_against_integral(k, s, psi, omega, zeta):
    a = s * psi / 2.0 + omega
    integral, _ = integrate.quad(lambda x: x ** (k - 0.5) * math.exp(-a * x), zeta, np.inf,
                                 epsabs=0.0, epsrel=1e-12)
    expected = math.sqrt(s) * psi ** (k + 0.5) * integral
    assert j_func(k, s, psi, omega, zeta) == pytest.approx(expected, rel=1e-9)


def test_j_domain():
    with pytest.raises(DomainError):
        j_func(0, 0.0, 4.0, 1.0, 0.0)


@pytest.mark.parametrize('zeta', [0.0, 0.5, 1.5])
def test_sep_matches_quadrature(scenario, zeta):
    pol = build_policy(scenario, zeta, 1.28e-3)
    closed = symbol_error_probability(scenario, pol)
    quad = symbol_error_probability_quadrature(scenario, pol)
    assert closed.method in ('closed_form', 'quadrature')
    assert quad.method == 'quadrature'
    assert closed.unconditioned == pytest.approx(quad.unconditioned, rel=1e-6)


def test_sep_matches_quadrature_correlated_beams(settings):
    scn = build_scenario(settings.evolve(phi_sr=math.radians(12.0), rho=0.7))
    pol = build_policy(scn, 0.4, 2.0e-3)
    closed = symbol_error_probability(scn, pol, ModulationSpec(psi=2.0))
    quad = symbol_error_probability_quadrature(scn, pol, ModulationSpec(psi=2.0))
    assert closed.unconditioned == pytest.approx(quad.unconditioned, rel=1e-6)


def test_silent_policy_reports_no_transmission(scenario):
    pol = build_policy(scenario, 0.5, 1.28e-3, phi=0.0)
    for report in (symbol_error_probability(scenario, pol), symbol_error_probability_quadrature(scenario, pol)):
        assert report.method == 'no_transmission'
        assert report.unconditioned == 0.0
        assert report.conditioned == 0.0


def test_conditioned_divides_by_carried_fraction(scenario):
    pol = build_policy(scenario, 0.5, 1.28e-3)
    report = symbol_error_probability(scenario, pol)
    carried = pol.pi_hat0 * pol.transmit_probability
    assert report.conditioned == pytest.approx(report.unconditioned / carried, rel=1e-12)
    assert 0.0 < report.unconditioned < report.conditioned < 1.0


def test_sep_falls_with_power(scenario):
    values = [symbol_error_probability(scenario, build_policy(scenario, 0.3, 1.28e-3, phi=p)).unconditioned
              for p in (0.5, 2.0, 8.0, 32.0)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_sep_falls_with_psi(scenario):
    pol = build_policy(scenario, 0.3, 1.28e-3)
    bpsk = symbol_error_probability(scenario, pol, ModulationSpec(psi=4.0)).unconditioned
    qpsk = symbol_error_probability(scenario, pol, ModulationSpec(psi=2.0)).unconditioned
    assert bpsk < qpsk


def test_uncorrelated_sep_matches_rayleigh_averages(scenario):
    # with rho = 0 the density of nu* is a signed sum of three exponentials
    model = BeamChannelModel(delta1=1.0, delta2=2.0, rho=0.0)
    scn = scenario.evolve(beams=model)
    pol = build_policy(scn, 0.0, 1.28e-3, phi=3.0)
    psi = 4.0
    omega = 1.0 / model.delta1 + 1.0 / model.delta2

    def rayleigh(mean, snr):
        g = psi * snr * mean / 2.0
        return 0.5 * (1.0 - math.sqrt(g / (1.0 + g)))

    def branch(snr):
        return rayleigh(model.delta1, snr) + rayleigh(model.delta2, snr) - rayleigh(1.0 / omega, snr)

    expected = pol.alpha0 * branch(pol.snr0) + pol.beta0 * branch(pol.snr1)
    report = symbol_error_probability(scn, pol, ModulationSpec(psi=psi))
    assert report.method == 'closed_form'
    assert report.unconditioned == pytest.approx(expected, rel=1e-9)
