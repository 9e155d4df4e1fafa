"""
Distribution of the two candidate beam gains and of the selected gain

The pair (nu_1, nu_2) is bivariate exponential with means delta_1, delta_2 and
amplitude correlation rho. The receiver feeds back the larger gain
nu* = max(nu_1, nu_2) and the index of the beam that produced it.
"""

import math
import logging
from typing import Tuple

import numpy as np
from scipy import integrate, special

from src.models.channel import BeamChannelModel, SeriesCoefficients
from src.models.pattern import RadiationPattern
from src.models.series import SeriesControl, DEFAULT_SERIES
from src.services.antenna_pattern import pattern_gain
from src.services.errors import DomainError, QuadratureError, SeriesConvergenceError
from src.services.special_functions import marcum_q1, log_hyp2f1

logger = logging.getLogger(__name__)

DEFAULT_J_MAX = 80


def beam_model_from_geometry(pat: RadiationPattern, phi_sr: float, gamma_ss: float = 1.0,
                             rho: float = 0.5) -> BeamChannelModel:
    """delta_m = gamma_ss * p_m(phi_SR) for the first two sectors"""
    if pat.m_sectors < 2:
        raise DomainError("beam selection needs at least two sectors")
    return BeamChannelModel(delta1=gamma_ss * pattern_gain(pat, 1, phi_sr),
                            delta2=gamma_ss * pattern_gain(pat, 2, phi_sr),
                            rho=rho)


def joint_pdf(model: BeamChannelModel, y1, y2):
    """Bivariate exponential density; the prefactor alpha_1/delta_2 equals 1/(delta_1 delta_2 (1 - rho^2))"""
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if np.any(y1 < 0) or np.any(y2 < 0):
        raise DomainError("joint_pdf needs nonnegative gains")
    a1, a2 = model.alpha1, model.alpha2
    z = 2.0 * model.rho * np.sqrt(a1 * a2 * y1 * y2)
    # I0(z) = i0e(z) e^z keeps the exponent combined
    density = (a1 / model.delta2) * np.exp(z - a1 * y1 - a2 * y2) * special.i0e(z)
    if density.ndim == 0:
        return float(density)
    return density


def joint_cdf(model: BeamChannelModel, y1: float, y2: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """P(nu_1 <= y1, nu_2 <= y2)"""
    if y1 < 0 or y2 < 0:
        raise DomainError("joint_cdf needs nonnegative gains")
    if y1 == 0 or y2 == 0:
        return 0.0
    a1, a2, r2 = model.alpha1, model.alpha2, model.rho ** 2
    first = math.exp(-y1 / model.delta1) * marcum_q1(math.sqrt(2 * a2 * y2), math.sqrt(2 * r2 * a1 * y1), ctl)
    second = math.exp(-y2 / model.delta2) * (
        1.0 - marcum_q1(math.sqrt(2 * r2 * a2 * y2), math.sqrt(2 * a1 * y1), ctl))
    return float(min(1.0, max(0.0, 1.0 - first - second)))


def selected_gain_cdf(model: BeamChannelModel, x: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    return joint_cdf(model, x, x, ctl)


def selected_gain_sf(model: BeamChannelModel, x: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """1 - F_nu*(x), evaluated without the leading cancellation"""
    if x < 0:
        raise DomainError("selected_gain_sf needs x >= 0")
    if x == 0:
        return 1.0
    a1, a2, r2 = model.alpha1, model.alpha2, model.rho ** 2
    first = math.exp(-x / model.delta1) * marcum_q1(math.sqrt(2 * a2 * x), math.sqrt(2 * r2 * a1 * x), ctl)
    second = math.exp(-x / model.delta2) * (
        1.0 - marcum_q1(math.sqrt(2 * r2 * a2 * x), math.sqrt(2 * a1 * x), ctl))
    return float(min(1.0, max(0.0, first + second)))


def _selected_density_part(model: BeamChannelModel, x: float, ctl: SeriesControl) -> float:
    """Density of nu* at x restricted to beam 1 being selected"""
    if x <= 0:
        return 0.0
    survive = 1.0 - marcum_q1(math.sqrt(2 * model.rho ** 2 * model.alpha1 * x), math.sqrt(2 * model.alpha2 * x), ctl)
    return math.exp(-x / model.delta1) / model.delta1 * survive


def selected_gain_pdf(model: BeamChannelModel, x: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    if x < 0:
        raise DomainError("selected_gain_pdf needs x >= 0")
    return _selected_density_part(model, x, ctl) + _selected_density_part(model.swapped(), x, ctl)


def build_coefficients(model: BeamChannelModel, j_max: int = DEFAULT_J_MAX) -> SeriesCoefficients:
    """
    D_ij and E_ij for 0 <= i <= j <= j_max, accumulated in the log domain

    D_ij = rho^{2j} / (j! i!) (alpha_1^j alpha_2^i / delta_1 + alpha_1^i alpha_2^j / delta_2)
    E_ij = alpha_1^i alpha_2^j / (i! j!) (rho^{2j} - rho^{2i})
    """
    if j_max < 0:
        raise DomainError(f"j_max must be >= 0, got {j_max}")
    idx = np.arange(j_max + 1, dtype=float)
    i = idx[:, None]
    j = idx[None, :]
    upper = i <= j
    la1, la2 = math.log(model.alpha1), math.log(model.alpha2)
    log_fact = special.gammaln(idx + 1.0)
    log_fact_sum = log_fact[:, None] + log_fact[None, :]

    with np.errstate(divide='ignore', invalid='ignore'):
        log_rho2 = math.log(model.rho ** 2) if model.rho > 0 else -np.inf
        rho_j = np.where(j == 0, 0.0, 2.0 * j * math.log(model.rho) if model.rho > 0 else -np.inf)
        rho_j = np.broadcast_to(rho_j, (j_max + 1, j_max + 1))
        mix = np.logaddexp(j * la1 + i * la2 - math.log(model.delta1),
                           i * la1 + j * la2 - math.log(model.delta2))
        log_d = np.where(upper, rho_j + mix - log_fact_sum, -np.inf)

        # rho^{2i} - rho^{2j} = rho^{2i} (1 - rho^{2(j-i)}) for j > i
        rho_i = np.where(i == 0, 0.0, i * log_rho2)
        gap = np.where(j > i, np.log1p(-np.exp((j - i) * log_rho2)) if model.rho > 0 else 0.0, -np.inf)
        log_e = i * la1 + j * la2 - log_fact_sum + rho_i + gap
        log_e_abs = np.where((j > i) & np.isfinite(log_e), log_e, -np.inf)

    return SeriesCoefficients(j_max=j_max, log_d=log_d, log_e_abs=log_e_abs)


def required_j_max(model: BeamChannelModel, ctl: SeriesControl = DEFAULT_SERIES,
                   floor: int = DEFAULT_J_MAX) -> int:
    """Smallest j_max with rho^{2 j_max} below rel_tol, never less than floor"""
    if model.rho == 0:
        return floor
    needed = int(math.ceil(math.log(ctl.rel_tol) / math.log(model.rho ** 2))) + 1
    if needed > ctl.max_terms:
        raise SeriesConvergenceError(
            f"rho={model.rho} needs {needed} series terms, cap is {ctl.max_terms}", terms=needed)
    return max(floor, needed)


def selected_gain_pdf_series(model: BeamChannelModel, coeffs: SeriesCoefficients, x: float,
                             ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """
    f_nu*(x) = sum_m e^{-x/delta_m}/delta_m - sum_{i<=j} D_ij x^{i+j} e^{-omega x}

    Raises SeriesConvergenceError when the outermost retained row j = j_max
    still contributes more than rel_tol of the result.
    """
    if x < 0:
        raise DomainError("selected_gain_pdf_series needs x >= 0")
    head = math.exp(-x / model.delta1) / model.delta1 + math.exp(-x / model.delta2) / model.delta2
    orders = coeffs.orders()
    with np.errstate(divide='ignore', invalid='ignore'):
        log_x = math.log(x) if x > 0 else -np.inf
        log_pow = np.where(orders == 0, 0.0, orders * log_x)
    log_terms = coeffs.log_d + log_pow - model.omega * x
    terms = np.exp(log_terms)
    series = float(np.sum(terms))
    value = head - series
    last_row = float(np.sum(terms[:, -1]))
    if coeffs.j_max > 0 and last_row > ctl.rel_tol * max(abs(value), abs(series)):
        raise SeriesConvergenceError(
            f"j_max={coeffs.j_max} insufficient at x={x}: last row contributes {last_row:.3e}",
            terms=coeffs.j_max)
    return value


def beam1_selection_prob(model: BeamChannelModel, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """
    Delta_1 = P(nu_1 > nu_2)

    Sum over k of (1 - rho^2) rho^{2k} [1 - r^{k+1} Gamma(2k+2)/((k+1) k!^2) 2F1(k+1, 2k+2; k+2; -r)]
    with r = alpha_1/alpha_2. For r > 1 the beams are relabelled so the
    hypergeometric argument stays in [-1, 0).
    """
    if model.delta1 == model.delta2:
        return 0.5
    ratio = model.alpha1 / model.alpha2
    if ratio > 1.0:
        return 1.0 - beam1_selection_prob(model.swapped(), ctl)

    rho2 = model.rho ** 2
    log_r = math.log(ratio)
    total = 0.0
    for k in range(ctl.max_terms):
        log_coeff = ((k + 1) * log_r + special.gammaln(2 * k + 2) - math.log(k + 1)
                     - 2.0 * special.gammaln(k + 1))
        log_f, sign = log_hyp2f1(k + 1, 2 * k + 2, k + 2, -ratio, ctl)
        bracket = 1.0 - sign * math.exp(log_coeff + log_f)
        total += rho2 ** k * bracket
        if rho2 ** (k + 1) <= ctl.rel_tol:
            return float((1.0 - rho2) * total)
    raise SeriesConvergenceError(
        f"Delta_1 series did not converge in {ctl.max_terms} terms (rho={model.rho})", terms=ctl.max_terms)


def beam1_selection_prob_mixture(model: BeamChannelModel, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """Delta_1 from the geometric-mixture representation: sum_k (1-rho^2) rho^{2k} I_p(k+1, k+1)"""
    rho2 = model.rho ** 2
    p = model.alpha2 / model.omega
    total = 0.0
    for k in range(ctl.max_terms):
        total += rho2 ** k * special.betainc(k + 1, k + 1, p)
        if rho2 ** (k + 1) <= ctl.rel_tol:
            return float((1.0 - rho2) * total)
    raise SeriesConvergenceError(
        f"mixture series did not converge in {ctl.max_terms} terms (rho={model.rho})", terms=ctl.max_terms)


def beam1_selection_prob_quadrature(model: BeamChannelModel) -> float:
    """Delta_1 as the double integral of the joint density over y_2 < y_1 < 40 delta_1"""
    value, abserr = integrate.dblquad(lambda y2, y1: joint_pdf(model, y1, y2), 0.0, 40.0 * model.delta1,
                                      0.0, lambda y1: y1, epsabs=1e-10, epsrel=1e-8)
    if abserr > 1e-7:
        raise QuadratureError(f"selection double integral did not converge (value {value}, error {abserr})")
    return value


def selection_given_transmission(model: BeamChannelModel, zeta: float,
                                 ctl: SeriesControl = DEFAULT_SERIES) -> Tuple[float, float]:
    """P(m* = m | nu* >= zeta) for m = 1, 2; equals (Delta_1, Delta_2) at zeta = 0"""
    if zeta < 0:
        raise DomainError("zeta must be >= 0")
    if zeta == 0:
        delta_1 = beam1_selection_prob(model, ctl)
        return delta_1, 1.0 - delta_1
    tails = []
    for part in (model, model.swapped()):
        value, abserr = integrate.quad(lambda x, part=part: _selected_density_part(part, x, ctl),
                                       zeta, np.inf, epsabs=0.0, epsrel=1e-10, limit=200)
        if abserr > 1e-6 * max(value, 1e-300):
            raise QuadratureError(f"selection tail integral did not converge (value {value}, error {abserr})")
        tails.append(value)
    mass = tails[0] + tails[1]
    if mass <= 0.0:
        raise DomainError(f"no transmission mass beyond zeta={zeta}")
    return tails[0] / mass, tails[1] / mass


def sample_gains(model: BeamChannelModel, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draw n pairs (nu_1, nu_2)

    h_1 ~ CN(0, delta_1), e ~ CN(0, delta_2), h_2 = rho sqrt(delta_2/delta_1) h_1 + sqrt(1 - rho^2) e.
    """
    std = rng.standard_normal((4, n))
    h1 = math.sqrt(model.delta1 / 2.0) * (std[0] + 1j * std[1])
    e = math.sqrt(model.delta2 / 2.0) * (std[2] + 1j * std[3])
    h2 = model.rho * math.sqrt(model.delta2 / model.delta1) * h1 + math.sqrt(1.0 - model.rho ** 2) * e
    return np.abs(h1) ** 2, np.abs(h2) ** 2
