"""
Outage and symbol error probability of a transmission policy
"""

import math
import logging
from typing import Optional

import numpy as np
from scipy import integrate

from src.models.channel import BeamChannelModel, SeriesCoefficients
from src.models.scenario import ScenarioParams, TransmissionPolicy, ModulationSpec, SepReport
from src.models.series import SeriesControl, DEFAULT_SERIES
from src.services import beam_selection
from src.services.errors import DomainError, QuadratureError, SeriesConvergenceError
from src.services.special_functions import gaussian_q, log_upper_incomplete_gamma

logger = logging.getLogger(__name__)

_SEP_PREFACTOR = 1.0 / (2.0 * math.sqrt(2.0 * math.pi))
_MAX_SEP_J = 1200


def outage_probability(model: BeamChannelModel, zeta: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """P_out = F_nu*(zeta)"""
    if zeta < 0:
        raise DomainError(f"zeta must be >= 0, got {zeta}")
    return beam_selection.selected_gain_cdf(model, zeta, ctl)


def log_j_func(k, s: float, psi: float, omega: float, zeta: float):
    """log J(k, S, Psi, omega, zeta); k may be an integer array"""
    k = np.asarray(k, dtype=float)
    return (-k * math.log(s) - (k + 0.5) * math.log(omega / (s * psi) + 0.5)
            + log_upper_incomplete_gamma(k + 0.5, (s * psi / 2.0 + omega) * zeta))


def j_func(k: int, s: float, psi: float, omega: float, zeta: float) -> float:
    """
    J(k, S, Psi, omega, zeta) = S^{-k} (omega/(S Psi) + 1/2)^{-k-1/2} Gamma(k + 1/2, (S Psi/2 + omega) zeta)

    Equivalently sqrt(S) Psi^{k+1/2} int_zeta^inf x^{k-1/2} e^{-(S Psi/2 + omega) x} dx.
    """
    if k < 0 or s <= 0 or psi <= 0 or omega < 0 or zeta < 0:
        raise DomainError(f"j_func needs k >= 0, S > 0, Psi > 0, omega >= 0, zeta >= 0")
    return float(np.exp(log_j_func(k, s, psi, omega, zeta)))


def _branch_sep(model: BeamChannelModel, coeffs: SeriesCoefficients, s: float, psi: float, zeta: float,
                survival: float, ctl: SeriesControl) -> float:
    """
    E{Q(sqrt(Psi S nu*)) 1{nu* >= zeta}} for one SNR branch

    Integration by parts against 1 - F(x) = e^{-x/delta_2} - sum_{i<=j} E_ij x^{i+j} e^{-omega x}.
    Only orders n = i + j <= j_max are complete, so the series is cut there.
    """
    if s == 0.0:
        return 0.0
    leading = j_func(0, s, psi, 0.0, zeta) * survival - j_func(0, s, psi, 1.0 / model.delta2, zeta)
    log_e = coeffs.log_e_by_order()[:coeffs.j_max + 1]
    n = np.arange(coeffs.j_max + 1)
    with np.errstate(divide='ignore', invalid='ignore'):
        log_terms = log_e - n * math.log(psi) + log_j_func(n, s, psi, model.omega, zeta)
    terms = np.where(np.isfinite(log_terms), np.exp(log_terms), 0.0)
    series = float(np.sum(terms))
    scale = max(abs(leading), series, 1e-300)
    tail = terms[-1]
    if coeffs.j_max > 0 and tail > ctl.rel_tol * scale:
        raise SeriesConvergenceError(f"SEP series truncated at order {coeffs.j_max} (last term {tail:.3e})",
                                     terms=coeffs.j_max)
    # E_ij <= 0, so the series enters with its sign
    return _SEP_PREFACTOR * (leading - series)


def symbol_error_probability(scn: ScenarioParams, pol: TransmissionPolicy, mod: ModulationSpec = ModulationSpec(),
                             coeffs: Optional[SeriesCoefficients] = None,
                             ctl: SeriesControl = DEFAULT_SERIES) -> SepReport:
    """
    Closed-form symbol error probability

    The E_ij series converges geometrically but slowly at low SNR, so the
    truncation order is doubled until the last retained order is below
    tolerance. If that fails, the value comes from quadrature and the report
    says so.
    """
    model = scn.beams
    transmit = pol.transmit_probability
    if pol.phi_power == 0.0 or transmit == 0.0:
        return SepReport(unconditioned=0.0, conditioned=0.0, method='no_transmission')

    j_max = coeffs.j_max if coeffs is not None else beam_selection.required_j_max(model, ctl)
    while True:
        if coeffs is None or coeffs.j_max != j_max:
            coeffs = beam_selection.build_coefficients(model, j_max)
        try:
            total = (pol.alpha0 * _branch_sep(model, coeffs, pol.snr0, mod.psi, pol.zeta, transmit, ctl)
                     + pol.beta0 * _branch_sep(model, coeffs, pol.snr1, mod.psi, pol.zeta, transmit, ctl))
            method = 'closed_form'
            break
        except SeriesConvergenceError as e:
            if 2 * j_max > _MAX_SEP_J:
                logger.warning(f"SEP series did not converge ({str(e)}); falling back to quadrature")
                return symbol_error_probability_quadrature(scn, pol, mod, ctl)
            j_max *= 2

    total = min(1.0, max(0.0, total))
    return SepReport(unconditioned=total, conditioned=_conditioned(total, pol), method=method, j_max=j_max)


def _conditioned(unconditioned: float, pol: TransmissionPolicy) -> float:
    carried = pol.pi_hat0 * pol.transmit_probability
    return min(1.0, unconditioned / carried) if carried > 0 else 0.0


def branch_sep_quadrature(model: BeamChannelModel, s: float, psi: float, zeta: float,
                          ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """E{Q(sqrt(Psi S nu*)) 1{nu* >= zeta}} for one SNR branch by quadrature"""
    if s < 0 or psi <= 0 or zeta < 0:
        raise DomainError(f"branch SEP needs S >= 0, Psi > 0, zeta >= 0, got ({s}, {psi}, {zeta})")
    if s == 0.0:
        return 0.0

    def integrand(x):
        return gaussian_q(math.sqrt(psi * s * x)) * beam_selection.selected_gain_pdf(model, x, ctl)

    split = zeta + 5.0 * max(model.delta1, model.delta2)
    near, err_near = integrate.quad(integrand, zeta, split, epsabs=1e-15, epsrel=1e-10, limit=200)
    far, err_far = integrate.quad(integrand, split, np.inf, epsabs=1e-15, epsrel=1e-10, limit=200)
    total = near + far
    if err_near + err_far > 1e-7 * total + 1e-13:
        raise QuadratureError(f"SEP quadrature did not converge (value {total}, error {err_near + err_far})")
    return total


def symbol_error_probability_quadrature(scn: ScenarioParams, pol: TransmissionPolicy,
                                        mod: ModulationSpec = ModulationSpec(),
                                        ctl: SeriesControl = DEFAULT_SERIES) -> SepReport:
    """alpha0 E{Q(sqrt(Psi S0 nu*)); nu* >= zeta} + beta0 E{Q(sqrt(Psi S1 nu*)); nu* >= zeta} by quadrature"""
    if pol.phi_power == 0.0 or pol.transmit_probability == 0.0:
        return SepReport(unconditioned=0.0, conditioned=0.0, method='no_transmission')
    total = (pol.alpha0 * branch_sep_quadrature(scn.beams, pol.snr0, mod.psi, pol.zeta, ctl)
             + pol.beta0 * branch_sep_quadrature(scn.beams, pol.snr1, mod.psi, pol.zeta, ctl))
    total = min(1.0, max(0.0, total))
    return SepReport(unconditioned=total, conditioned=_conditioned(total, pol), method='quadrature')
