"""
Pattern evaluation and the circle averages consumed by the sensing and
interference formulas
"""

import math
import logging

import numpy as np
from scipy import integrate
from scipy.linalg import circulant

from src.models.pattern import RadiationPattern, PatternIntegrals
from src.services.errors import QuadratureError

logger = logging.getLogger(__name__)

QUAD_REL_TOL = 1e-10
TWO_PI = 2.0 * math.pi


def wrap_angle(phi):
    """Map an angle into [-pi, pi)"""
    wrapped = np.mod(np.asarray(phi, dtype=float) + math.pi, TWO_PI) - math.pi
    # mod can round up to exactly 2*pi for tiny negative inputs
    wrapped = np.where(wrapped >= math.pi, wrapped - TWO_PI, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def pattern_gain(pat: RadiationPattern, m: int, phi):
    """Linear gain of sector m (1-based) towards phi"""
    if not 1 <= m <= pat.m_sectors:
        raise IndexError(f"sector {m} out of range 1..{pat.m_sectors}")
    if pat.omni:
        return np.ones_like(np.asarray(phi, dtype=float)) if np.ndim(phi) else 1.0
    offset = wrap_angle(np.asarray(phi, dtype=float) - pat.axis(m)) / pat.phi_3db
    gain = pat.a1 + pat.a0 * np.exp(-pat.b_const * offset * offset)
    if np.ndim(gain) == 0:
        return float(gain)
    return gain


def sector_gains(pat: RadiationPattern, phi: float) -> np.ndarray:
    """Vector of p_m(phi) for m = 1..M"""
    return np.array([pattern_gain(pat, m, phi) for m in range(1, pat.m_sectors + 1)])


def boresight_gain(pat: RadiationPattern) -> float:
    return pat.a1 + (0.0 if pat.omni else pat.a0)


def _circle_mean(func, pat: RadiationPattern, label: str) -> float:
    # sector peaks and the wrap kinks opposite them
    candidates = {round(wrap_angle(pat.axis(m) + shift), 12)
                  for m in range(1, pat.m_sectors + 1) for shift in (0.0, math.pi)}
    breakpoints = sorted(b for b in candidates if -math.pi < b < math.pi)
    value, abserr = integrate.quad(func, -math.pi, math.pi, points=breakpoints or None,
                                   epsabs=0.0, epsrel=QUAD_REL_TOL, limit=400)
    if abserr > 1e-8 * max(abs(value), 1e-300):
        raise QuadratureError(f"quadrature of {label} did not converge (estimate {value}, error {abserr})")
    return value / TWO_PI


def mean_gain(pat: RadiationPattern) -> float:
    """E_A, the pattern gain averaged over the circle"""
    if pat.omni:
        return 1.0
    return _circle_mean(lambda t: pattern_gain(pat, 1, t), pat, 'E_A')


def normalize_for_unit_ea(pat: RadiationPattern) -> RadiationPattern:
    """Rescale a0 (and with it a1) so that E_A = 1; the shape is unchanged"""
    if pat.omni:
        return pat
    e_a = mean_gain(pat)
    normalized = pat.scaled(1.0 / e_a)
    logger.debug(f"Normalized pattern phi_3db={math.degrees(pat.phi_3db):.2f} deg: a0 {pat.a0:.6g} -> {normalized.a0:.6g}")
    return normalized


def compute_integrals(pat: RadiationPattern) -> PatternIntegrals:
    """
    E_A, E_B and the M x M matrix of E_mm'

    The pattern is rotation invariant, so E_mm' depends only on (m' - m) mod M.
    Only the first M//2 + 1 lags are integrated; the rest follow by symmetry.
    """
    m_sectors = pat.m_sectors
    if pat.omni:
        return PatternIntegrals(e_a=1.0, e_b=1.0, e_cross=np.ones((m_sectors, m_sectors)))

    e_a = mean_gain(pat)
    lags = np.empty(m_sectors)
    for k in range(m_sectors // 2 + 1):
        value = _circle_mean(lambda t, k=k: pattern_gain(pat, 1, t) * pattern_gain(pat, 1 + k, t),
                             pat, f'E_1{1 + k}')
        lags[k] = value
        lags[(m_sectors - k) % m_sectors] = value
    e_cross = circulant(lags)
    return PatternIntegrals(e_a=e_a, e_b=float(lags[0]), e_cross=e_cross)
