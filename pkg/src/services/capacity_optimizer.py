"""
Capacity lower bound of the truncated constant-power policy and its optimization

The Jensen lower bound averages the PU interference gain inside the log, so
the ergodic capacity reduces to integrals of ln(1 + S x) against the density
of the selected gain nu*. Those integrals have closed forms in terms of G
and V; V is carried in a normalized form that stays positive and bounded.
"""

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy import integrate, optimize, special, stats

from src.models.channel import BeamChannelModel, SeriesCoefficients
from src.models.pattern import RadiationPattern, PatternIntegrals
from src.models.scenario import (ScenarioParams, TransmissionPolicy, CapacityReport,
                                 SearchControl, OptimizationResult)
from src.models.series import SeriesControl, DEFAULT_SERIES
from src.models.sensing import DetectorStats
from src.services import beam_selection
from src.services.antenna_pattern import compute_integrals, pattern_gain
from src.services.errors import DomainError, InfeasiblePolicyError, QuadratureError, SeriesConvergenceError
from src.services.special_functions import exp1_scaled, exp_integral_ei, upper_incomplete_gamma
from src.services.spectrum_sensing import detector_stats, sample_count

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
# 1 - F(zeta) below this makes the truncation boost meaningless
_MIN_TRANSMIT_PROB = 1e-300


@lru_cache(maxsize=128)
def pattern_integrals(pat: RadiationPattern) -> PatternIntegrals:
    return compute_integrals(pat)


@lru_cache(maxsize=128)
def series_coefficients(model: BeamChannelModel, ctl: SeriesControl = DEFAULT_SERIES) -> SeriesCoefficients:
    return beam_selection.build_coefficients(model, beam_selection.required_j_max(model, ctl))


@lru_cache(maxsize=256)
def selection_probability(model: BeamChannelModel, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    return beam_selection.beam1_selection_prob(model, ctl)


@lru_cache(maxsize=1024)
def conditional_selection(model: BeamChannelModel, zeta: float, ctl: SeriesControl = DEFAULT_SERIES) -> Tuple[float, float]:
    return beam_selection.selection_given_transmission(model, zeta, ctl)


def sensing_stats(scn: ScenarioParams, t_sense: float) -> DetectorStats:
    cfg = scn.sensing.with_sense_time(t_sense)
    return detector_stats(cfg, pattern_integrals(scn.pattern), scn.m_sectors)


def interference_weight(scn: ScenarioParams, zeta: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """Beam-weighted pattern gain towards the PU, sum_m w_m p(kappa_m - phi_PU)"""
    if scn.aic_model == 'conditional':
        w1, w2 = conditional_selection(scn.beams, zeta, ctl)
    else:
        w1 = selection_probability(scn.beams, ctl)
        w2 = 1.0 - w1
    return w1 * pattern_gain(scn.pattern, 1, scn.phi_pu) + w2 * pattern_gain(scn.pattern, 2, scn.phi_pu)


def optimal_phi(scn: ScenarioParams, zeta: float, t_sense: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """Largest power meeting both average constraints, boosted by the truncation at zeta"""
    return build_policy(scn, zeta, t_sense, ctl=ctl).phi_power


def build_policy(scn: ScenarioParams, zeta: float, t_sense: float, phi: Optional[float] = None,
                 ctl: SeriesControl = DEFAULT_SERIES) -> TransmissionPolicy:
    """
    Derive every policy quantity for (zeta, T_sen)

    Args:
        scn: scenario
        zeta: gain threshold below which the link stays silent
        t_sense: sensing time in seconds
        phi: transmit power; when omitted the constrained optimum is used
        ctl: series settings

    Returns:
        TransmissionPolicy
    """
    if zeta < 0:
        raise DomainError(f"zeta must be >= 0, got {zeta}")
    cfg = scn.sensing.with_sense_time(t_sense)
    stats = sensing_stats(scn, t_sense)
    d_t = cfg.data_fraction
    alpha0 = cfg.pi0 * (1.0 - stats.p_fa)
    beta0 = cfg.pi1 * (1.0 - cfg.pd_target)
    b0 = beta0 * scn.gamma_sp * interference_weight(scn, zeta, ctl)
    transmit = beam_selection.selected_gain_sf(scn.beams, zeta, ctl)

    if phi is None:
        if transmit < _MIN_TRANSMIT_PROB:
            raise InfeasiblePolicyError(f"1 - F(zeta) underflows at zeta={zeta}")
        power_cap = scn.p_bar / (d_t * stats.pi_hat0)
        interference_cap = scn.i_bar / (d_t * b0) if b0 > 0 else math.inf
        phi = min(power_cap, interference_cap) / transmit

    return TransmissionPolicy(
        phi_power=phi, zeta=zeta, t_sense=t_sense, d_t=d_t,
        alpha0=alpha0, beta0=beta0, b0=b0, pi_hat0=stats.pi_hat0, p_fa=stats.p_fa,
        snr0=phi / cfg.sigma_w2, snr1=phi / (cfg.sigma_w2 + scn.sigma_p2),
        outage=1.0 - transmit, n_samples=stats.n_samples,
    )


def g_func(delta: float, s: float, zeta: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """G(delta, S, zeta) = int_zeta^inf ln(1 + S x) e^{-x/delta}/delta dx"""
    if delta <= 0 or s < 0 or zeta < 0:
        raise DomainError(f"g_func needs delta > 0, S >= 0, zeta >= 0, got ({delta}, {s}, {zeta})")
    if s == 0:
        return 0.0
    # e^{1/(delta S)} Ei(-(1 + S zeta)/(delta S)) = -e^{-zeta/delta} E1s((1 + S zeta)/(delta S))
    return math.exp(-zeta / delta) * (math.log1p(s * zeta) + exp1_scaled((1.0 + s * zeta) / (delta * s), ctl))


def h_func(k: int, omega: float, s: float, zeta: float) -> float:
    """Finite sum H(k, omega, S, zeta) of the V recursion, evaluated term by term"""
    if k < 0 or omega <= 0 or s <= 0 or zeta < 0:
        raise DomainError(f"h_func needs k >= 0, omega > 0, S > 0, zeta >= 0, got ({k}, {omega}, {s}, {zeta})")
    c = omega * zeta + omega / s
    ei = exp_integral_ei(-c)
    total = 0.0
    for j in range(k + 1):
        bracket = c ** (j + 1) * ei + upper_incomplete_gamma(j + 1, c)
        total += math.comb(k, j) * (-s) ** (j - k) / ((j + 1) * omega ** (j + 1)) * bracket
    return total


def _gamma_expectation(func, shape: float, rate: float, lower: float) -> float:
    """E[func(X) 1{X >= lower}] for X ~ Gamma(shape, rate)"""
    dist = stats.gamma(shape, scale=1.0 / rate)
    upper = float(dist.isf(1e-18))
    if lower >= upper:
        value, abserr = integrate.quad(lambda x: func(x) * dist.pdf(x), lower, np.inf, epsabs=0.0, epsrel=1e-11)
    else:
        mode = (shape - 1.0) / rate
        points = [mode] if lower < mode < upper else None
        value, abserr = integrate.quad(lambda x: func(x) * dist.pdf(x), lower, upper, points=points,
                                       epsabs=0.0, epsrel=1e-11, limit=200)
    if abserr > 1e-8 * max(abs(value), 1e-300):
        raise QuadratureError(f"gamma expectation did not converge (value {value}, error {abserr})")
    return value


def _normalized_w(n_max: int, omega: float, s: float, zeta: float) -> np.ndarray:
    """
    Wn(n) = omega^n/n! int_zeta^inf x^n e^{-omega x}/(1 + S x) dx for n = 0..n_max

    Forward recursion is stable for n >= omega/S and backward below it, so both
    run outward from the pivot n0 = floor(omega/S).
    """
    w = np.zeros(n_max + 1)
    pivot = min(n_max, int(math.floor(omega / s)))
    oz = omega * zeta
    if pivot == 0:
        # S Wn(0) = e^{-omega zeta} E1s(omega (zeta + 1/S))
        w[0] = math.exp(-oz) * exp1_scaled(omega * (zeta + 1.0 / s)) / s
    else:
        w[pivot] = _gamma_expectation(lambda x: 1.0 / (1.0 + s * x), pivot + 1, omega, zeta) / omega
    for n in range(pivot, 0, -1):
        w[n - 1] = (special.gammaincc(n, oz) - n * s * w[n]) / omega
    for n in range(pivot + 1, n_max + 1):
        w[n] = (special.gammaincc(n, oz) - omega * w[n - 1]) / (n * s)
    return w


def normalized_v(n_max: int, omega: float, s: float, zeta: float) -> np.ndarray:
    """Vn(n) = V(n) omega^{n+1}/n! for n = 0..n_max; zero when S = 0"""
    if n_max < 0 or omega <= 0 or s < 0 or zeta < 0:
        raise DomainError(f"normalized_v needs n >= 0, omega > 0, S >= 0, zeta >= 0")
    if s == 0:
        return np.zeros(n_max + 1)
    w = _normalized_w(n_max, omega, s, zeta)
    n = np.arange(n_max + 1)
    boundary = stats.poisson.pmf(n, omega * zeta) * math.log1p(s * zeta)
    increments = boundary + s * w
    increments[0] = g_func(1.0 / omega, s, zeta)
    return np.cumsum(increments)


def v_func(n: int, omega: float, s: float, zeta: float) -> float:
    """V(n, omega, S, zeta) = int_zeta^inf x^n e^{-omega x} ln(1 + S x) dx"""
    vn = normalized_v(n, omega, s, zeta)[n]
    if vn == 0.0:
        return 0.0
    return float(math.exp(math.log(vn) + special.gammaln(n + 1) - (n + 1) * math.log(omega)))


def _check_coefficients(model: BeamChannelModel, coeffs: SeriesCoefficients, ctl: SeriesControl):
    needed = beam_selection.required_j_max(model, ctl, floor=0)
    if coeffs.j_max < needed:
        raise SeriesConvergenceError(
            f"coefficients truncated at j_max={coeffs.j_max}, rho={model.rho} needs {needed}",
            terms=coeffs.j_max)


def _series_integral(model: BeamChannelModel, coeffs: SeriesCoefficients, alpha0: float, beta0: float,
                     snr0: float, snr1: float, zeta: float) -> float:
    """sum_{i<=j} D_ij (alpha0 V(i+j, S0) + beta0 V(i+j, S1)), summed per order n = i + j"""
    log_c = coeffs.log_d_by_order()
    n_max = len(log_c) - 1
    omega = model.omega
    weighted = alpha0 * normalized_v(n_max, omega, snr0, zeta) + beta0 * normalized_v(n_max, omega, snr1, zeta)
    n = np.arange(n_max + 1)
    with np.errstate(divide='ignore'):
        log_terms = log_c + special.gammaln(n + 1) - (n + 1) * math.log(omega) + np.log(weighted)
    finite = np.isfinite(log_terms)
    if not finite.any():
        return 0.0
    return float(np.exp(special.logsumexp(log_terms[finite])))


def _constraint_report(scn: ScenarioParams, pol: TransmissionPolicy, c_lb: float, method: str,
                       j_max: Optional[int]) -> CapacityReport:
    transmit = pol.transmit_probability
    apc_slack = scn.p_bar - pol.d_t * pol.pi_hat0 * pol.phi_power * transmit
    aic_slack = scn.i_bar - pol.d_t * pol.b0 * pol.phi_power * transmit
    active = 'power' if apc_slack / scn.p_bar <= aic_slack / scn.i_bar else 'interference'
    return CapacityReport(c_lb=c_lb, apc_slack=apc_slack, aic_slack=aic_slack,
                          active_constraint=active, method=method, j_max=j_max)


def capacity_lb(scn: ScenarioParams, pol: TransmissionPolicy, coeffs: Optional[SeriesCoefficients] = None,
                ctl: SeriesControl = DEFAULT_SERIES) -> CapacityReport:
    """
    Closed-form capacity lower bound in bits/s/Hz

    C = D_t/ln2 [ sum_m (a0 G(delta_m, S0) + b0 G(delta_m, S1)) - sum_{i<=j} D_ij (a0 V(i+j, S0) + b0 V(i+j, S1)) ]
    """
    model = scn.beams
    if coeffs is None:
        coeffs = series_coefficients(model, ctl)
    else:
        _check_coefficients(model, coeffs, ctl)
    if pol.phi_power == 0.0:
        return _constraint_report(scn, pol, 0.0, 'closed_form', coeffs.j_max)

    head = sum(pol.alpha0 * g_func(delta, pol.snr0, pol.zeta, ctl) + pol.beta0 * g_func(delta, pol.snr1, pol.zeta, ctl)
               for delta in (model.delta1, model.delta2))
    overlap = _series_integral(model, coeffs, pol.alpha0, pol.beta0, pol.snr0, pol.snr1, pol.zeta)
    c_lb = max(0.0, pol.d_t / LN2 * (head - overlap))
    return _constraint_report(scn, pol, c_lb, 'closed_form', coeffs.j_max)


def capacity_lb_quadrature(scn: ScenarioParams, pol: TransmissionPolicy,
                           ctl: SeriesControl = DEFAULT_SERIES) -> CapacityReport:
    """Same bound by direct quadrature of log2(1 + S x) against f_nu*"""
    if pol.phi_power == 0.0:
        return _constraint_report(scn, pol, 0.0, 'quadrature', None)
    model = scn.beams

    def integrand(x):
        rate = pol.alpha0 * math.log1p(pol.snr0 * x) + pol.beta0 * math.log1p(pol.snr1 * x)
        return rate * beam_selection.selected_gain_pdf(model, x, ctl)

    scale = max(model.delta1, model.delta2)
    split = pol.zeta + 5.0 * scale
    near, err_near = integrate.quad(integrand, pol.zeta, split, epsabs=0.0, epsrel=1e-11, limit=200)
    far, err_far = integrate.quad(integrand, split, np.inf, epsabs=1e-14, epsrel=1e-11, limit=200)
    value = near + far
    if err_near + err_far > 1e-8 * max(abs(value), 1e-300):
        raise QuadratureError(f"capacity quadrature did not converge (value {value}, error {err_near + err_far})")
    return _constraint_report(scn, pol, pol.d_t / LN2 * value, 'quadrature', None)


def g_quadrature(delta: float, s: float, zeta: float) -> float:
    """G(delta, S, zeta) by direct quadrature"""
    value, abserr = integrate.quad(lambda x: math.log1p(s * x) * math.exp(-x / delta) / delta, zeta, np.inf,
                                   epsabs=0.0, epsrel=1e-12, limit=200)
    if abserr > 1e-10 * max(abs(value), 1e-300):
        raise QuadratureError(f"G quadrature did not converge (value {value}, error {abserr})")
    return value


def v_quadrature(n: int, omega: float, s: float, zeta: float) -> float:
    """V(n, omega, S, zeta) by direct quadrature over [zeta, zeta + (n + 80)/omega]"""
    upper = zeta + (n + 80.0) / omega
    peak = n / omega
    points = [peak] if zeta < peak < upper else None
    value, abserr = integrate.quad(lambda x: x ** n * math.exp(-omega * x) * math.log1p(s * x), zeta, upper,
                                   points=points, epsabs=0.0, epsrel=1e-12, limit=400)
    if abserr > 1e-10 * max(abs(value), 1e-300):
        raise QuadratureError(f"V quadrature did not converge (value {value}, error {abserr})")
    return value


def sense_time_grid(scn: ScenarioParams, points: int) -> np.ndarray:
    """Candidate T_sen values, multiples of M T_s inside (0, T_f - T_train)"""
    cfg = scn.sensing
    step = scn.m_sectors * cfg.t_sample
    n_max = int(math.floor((cfg.t_frame - cfg.t_train) / step - 1e-9))
    if n_max < 1:
        raise InfeasiblePolicyError("frame leaves no room for a single sensing sample per sector")
    counts = np.unique(np.round(np.linspace(1, n_max, min(points, n_max))).astype(int))
    return counts * step


def _evaluate(scn: ScenarioParams, zeta: float, t_sense: float, ctl: SeriesControl) -> Tuple[float, Optional[TransmissionPolicy]]:
    try:
        pol = build_policy(scn, zeta, t_sense, ctl=ctl)
        return capacity_lb(scn, pol, ctl=ctl).c_lb, pol
    except InfeasiblePolicyError as e:
        logger.debug(f"Skipping infeasible point zeta={zeta}, t_sense={t_sense}: {str(e)}")
        return -math.inf, None


def optimize_policy(scn: ScenarioParams, search: SearchControl = SearchControl(),
                    ctl: SeriesControl = DEFAULT_SERIES) -> OptimizationResult:
    """
    Maximize the capacity lower bound over (zeta, T_sen)

    A coarse grid is evaluated first (concurrently when search.workers > 1,
    results kept in grid order). The best cell is then refined: golden-section
    search on zeta between its grid neighbours, and an exhaustive scan of the
    admissible sample counts between the neighbouring T_sen grid values.
    """
    model = scn.beams
    series_coefficients(model, ctl)
    pattern_integrals(scn.pattern)

    zeta_max = search.zeta_max_factor * max(model.delta1, model.delta2)
    zetas = np.linspace(0.0, zeta_max, search.zeta_points)
    t_grid = sense_time_grid(scn, search.t_sense_points)
    points = [(float(z), float(t)) for t in t_grid for z in zetas]

    def run(point):
        return _evaluate(scn, point[0], point[1], ctl)

    if search.workers > 1:
        with ThreadPoolExecutor(max_workers=search.workers) as pool:
            results = list(pool.map(run, points))
    else:
        results = [run(p) for p in points]

    grid = pd.DataFrame({
        't_sense': [p[1] for p in points],
        'zeta': [p[0] for p in points],
        'c_lb': [r[0] for r in results],
        'phi': [r[1].phi_power if r[1] is not None else np.nan for r in results],
    })
    if not np.isfinite(grid['c_lb']).any() or grid['c_lb'].max() <= 0.0:
        raise InfeasiblePolicyError("constraints force zero power on every grid point")

    best = int(np.argmax(grid['c_lb'].to_numpy()))
    best_zeta, best_t = points[best]
    best_c = results[best][0]
    zi = int(np.searchsorted(zetas, best_zeta))
    ti = int(np.searchsorted(t_grid, best_t))
    zeta_edge = zi == len(zetas) - 1
    t_edge = ti in (0, len(t_grid) - 1) and len(t_grid) > 1

    if search.refine:
        step = scn.m_sectors * scn.sensing.t_sample
        lo_n = sample_count(scn.sensing.with_sense_time(t_grid[max(ti - 1, 0)]), scn.m_sectors)
        hi_n = sample_count(scn.sensing.with_sense_time(t_grid[min(ti + 1, len(t_grid) - 1)]), scn.m_sectors)
        for n in range(lo_n, hi_n + 1):
            c, _ = _evaluate(scn, best_zeta, n * step, ctl)
            if c > best_c:
                best_c, best_t = c, n * step

        if 0 < zi < len(zetas) - 1:
            left, right = float(zetas[zi - 1]), float(zetas[zi + 1])
            objective = lambda z: -_evaluate(scn, float(z), best_t, ctl)[0]
            try:
                res = optimize.minimize_scalar(objective, bracket=(left, best_zeta, right), method='golden',
                                               options={'xtol': 1e-6})
                if left <= res.x <= right and -res.fun > best_c:
                    best_zeta, best_c = float(res.x), float(-res.fun)
            except ValueError as e:
                logger.warning(f"Golden-section refinement skipped: {str(e)}")

    if zeta_edge:
        logger.warning(f"Optimal zeta sits on the grid edge ({best_zeta:.4g}); widen zeta_max_factor")
    if t_edge:
        logger.warning(f"Optimal sensing time sits on the grid edge ({best_t * 1e3:.4g} ms)")

    policy = build_policy(scn, best_zeta, best_t, ctl=ctl)
    report = capacity_lb(scn, policy, ctl=ctl)
    logger.info(f"Optimized policy: zeta={best_zeta:.4g}, t_sense={best_t * 1e3:.4g} ms, "
                f"phi={policy.phi_power:.4g}, C_LB={report.c_lb:.5g} bit/s/Hz ({report.active_constraint} bound)")
    return OptimizationResult(policy=policy, report=report, grid=grid,
                              zeta_at_edge=zeta_edge, t_sense_at_edge=t_edge)
