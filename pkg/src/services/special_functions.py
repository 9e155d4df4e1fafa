"""
Scalar special-function kernels used by the closed forms

Q-function, Bessel I0, Marcum Q1, exponential integrals, incomplete gamma
and the Gauss hypergeometric function. Library kernels from scipy are used
where they exist; the series based ones take a SeriesControl and raise
SeriesConvergenceError when the term cap is reached.
"""

import math
import logging
import sys
from typing import Tuple

import numpy as np
from scipy import special
from scipy.stats import norm

from src.models.series import SeriesControl, DEFAULT_SERIES
from src.services.errors import DomainError, SeriesConvergenceError

logger = logging.getLogger(__name__)

EULER_GAMMA = 0.5772156649015329
# Q1(a, b) <= exp(-(b - a)^2 / 2) for b > a; beyond this gap the value underflows
_MARCUM_UNDERFLOW_GAP = 38.6


def gaussian_q(x):
    """Tail probability of the standard normal, Q(x) = P(Z > x)"""
    return norm.sf(x)


def gaussian_q_inv(p: float) -> float:
    """Inverse of the Q-function on (0, 1)"""
    if not 0.0 < p < 1.0:
        raise DomainError(f"gaussian_q_inv needs 0 < p < 1, got {p}")
    return float(norm.isf(p))


def bessel_i0(x: float, scaled: bool = False) -> float:
    """
    Modified Bessel function of the first kind, order zero

    Args:
        x: nonnegative argument
        scaled: return exp(-x) * I0(x) instead, finite for every x

    Returns:
        I0(x) or its exponentially scaled variant
    """
    if x < 0:
        raise DomainError(f"bessel_i0 needs x >= 0, got {x}")
    if scaled:
        return float(special.i0e(x))
    value = float(special.i0(x))
    if not math.isfinite(value):
        raise OverflowError(f"I0({x}) overflows; request the scaled variant")
    return value


def marcum_q1(a: float, b: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """
    First-order Marcum Q-function

    Summed as a Poisson mixture, Q1(a, b) = sum_j Pois(j; a^2/2) P(Gamma(j+1) > b^2/2).
    Summation starts just below the Poisson mode (lower terms are smaller in
    both factors) and stops once the Poisson tail beyond j is below
    rel_tol times the partial sum.

    Args:
        a: noncentrality, a >= 0
        b: threshold, b >= 0
        ctl: truncation settings

    Returns:
        Q1(a, b) in [0, 1]
    """
    if a < 0 or b < 0:
        raise DomainError(f"marcum_q1 needs a, b >= 0, got ({a}, {b})")
    if b == 0:
        return 1.0
    y = 0.5 * b * b
    if a == 0:
        return math.exp(-y)
    if b - a > _MARCUM_UNDERFLOW_GAP:
        return 0.0

    mu = 0.5 * a * a
    lo = max(0, int(math.floor(mu - 12.0 * math.sqrt(mu) - 12.0)))
    # the window always reaches max_terms past the upper edge of the Poisson bulk
    hi = int(math.ceil(mu + 12.0 * math.sqrt(mu) + 12.0))
    j = lo + np.arange(hi - lo + ctl.max_terms, dtype=float)
    log_pmf = j * math.log(mu) - mu - special.gammaln(j + 1.0)
    terms = np.exp(log_pmf) * special.gammaincc(j + 1.0, y)
    partial = np.cumsum(terms)
    tail = special.pdtrc(j, mu)

    done = (j >= mu) & (tail <= ctl.rel_tol * partial)
    if done.any():
        return float(min(1.0, partial[np.argmax(done)]))
    if partial[-1] == 0.0 and tail[-1] < 1e-300:
        return 0.0
    raise SeriesConvergenceError(
        f"marcum_q1({a}, {b}) did not converge in {ctl.max_terms} terms", terms=ctl.max_terms)


def exp1_scaled(x: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """exp(x) * E1(x) for x > 0; power series up to x = 1, continued fraction above"""
    if x <= 0:
        raise DomainError(f"exp1_scaled needs x > 0, got {x}")

    if x <= 1.0:
        total = 0.0
        term = 1.0
        for k in range(1, ctl.max_terms + 1):
            term *= -x / k
            contribution = term / k
            total += contribution
            if abs(contribution) < ctl.rel_tol * abs(total):
                return math.exp(x) * (-EULER_GAMMA - math.log(x) - total)
        raise SeriesConvergenceError(f"E1 series at x={x} did not converge", terms=ctl.max_terms)

    # modified Lentz
    tiny = sys.float_info.min / sys.float_info.epsilon
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, ctl.max_terms + 1):
        an = -float(i * i)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < ctl.rel_tol:
            return h
    raise SeriesConvergenceError(f"E1 continued fraction at x={x} did not converge", terms=ctl.max_terms)


def exp_integral_ei(x: float) -> float:
    """
    Exponential integral Ei(x), x != 0

    Negative arguments go through E1 (Ei(x) = -E1(-x)), which is the only
    half-line the capacity formulas use.
    """
    if x == 0:
        raise DomainError("Ei has a logarithmic singularity at 0")
    if x < 0:
        return -math.exp(x) * exp1_scaled(-x)
    return float(special.expi(x))


def upper_incomplete_gamma(s: float, x: float) -> float:
    """Non-regularized upper incomplete gamma Gamma(s, x)"""
    if s <= 0 or x < 0:
        raise DomainError(f"upper_incomplete_gamma needs s > 0, x >= 0, got ({s}, {x})")
    if x == 0:
        return float(special.gamma(s))
    return float(special.gammaincc(s, x) * special.gamma(s))


def log_upper_incomplete_gamma(s, x):
    """log Gamma(s, x); -inf where the regularized value underflows"""
    with np.errstate(divide='ignore'):
        return np.log(special.gammaincc(s, x)) + special.gammaln(s)


def hyp2f1(a: float, b: float, c: float, z: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """
    Gauss hypergeometric function 2F1(a, b; c; z) for real z < 1

    For z < 0 a Pfaff transformation maps the argument to z/(z-1) in (0, 1);
    the variant whose transformed series has nonnegative terms is preferred.
    """
    if c <= 0 and float(c).is_integer():
        raise DomainError(f"2F1 undefined for c = {c}")
    log_abs, sign = log_hyp2f1(a, b, c, z, ctl)
    if sign == 0:
        return 0.0
    return sign * math.exp(log_abs)


def log_hyp2f1(a, b, c, z, ctl: SeriesControl = DEFAULT_SERIES) -> Tuple[float, float]:
    """(log|2F1|, sign), for callers that combine it with large prefactors"""
    if z == 0:
        return 0.0, 1.0
    if z >= 1:
        raise SeriesConvergenceError(f"2F1 series diverges at z={z} and no transformation applies")
    if z > 0:
        return _hypergeometric_series(a, b, c, z, ctl)

    w = z / (z - 1.0)
    log_one_minus_z = math.log1p(-z)
    # (1-z)^{-b} 2F1(c-a, b; c; w)  and  (1-z)^{-a} 2F1(a, c-b; c; w)
    variants = [(c - a, b, b), (a, c - b, a)]
    for top1, top2, power in variants:
        if top1 >= 0 and top2 >= 0:
            log_abs, sign = _hypergeometric_series(top1, top2, c, w, ctl)
            return log_abs - power * log_one_minus_z, sign
    if z > -1:
        return _hypergeometric_series(a, b, c, z, ctl)
    top1, top2, power = variants[0]
    log_abs, sign = _hypergeometric_series(top1, top2, c, w, ctl)
    return log_abs - power * log_one_minus_z, sign


def _hypergeometric_series(a, b, c, x, ctl) -> Tuple[float, float]:
    """Sum of (a)_n (b)_n / ((c)_n n!) x^n, returned as (log|sum|, sign)"""
    n = np.arange(ctl.max_terms - 1, dtype=float)
    factors = (a + n) * (b + n) / ((c + n) * (n + 1.0)) * x
    with np.errstate(divide='ignore'):
        log_ratio = np.log(np.abs(factors))
    log_terms = np.concatenate(([0.0], np.cumsum(log_ratio)))
    signs = np.concatenate(([1.0], np.cumprod(np.sign(factors))))

    finite = np.isfinite(log_terms)
    peak = log_terms[finite].max()
    scaled = np.where(finite, signs * np.exp(np.where(finite, log_terms - peak, 0.0)), 0.0)
    partial = np.cumsum(scaled)

    # a zero factor terminates the series
    zero = np.flatnonzero(factors == 0.0)
    if zero.size:
        total = partial[zero[0]]
        return _log_signed(total, peak)

    geometric = max(1.0 - abs(x), 1e-300)
    abs_terms = np.abs(scaled)
    ratio_ok = np.concatenate((np.abs(factors) < 1.0, [False]))
    done = ratio_ok & (abs_terms <= ctl.rel_tol * geometric * np.abs(partial))
    if done.any():
        return _log_signed(partial[np.argmax(done)], peak)
    raise SeriesConvergenceError(
        f"2F1({a}, {b}; {c}; {x}) series did not converge in {ctl.max_terms} terms", terms=ctl.max_terms)


def _log_signed(value: float, shift: float) -> Tuple[float, float]:
    if value == 0.0:
        return -math.inf, 0.0
    return math.log(abs(value)) + shift, math.copysign(1.0, value)
