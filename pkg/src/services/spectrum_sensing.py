"""
Energy-detector statistics over M sectors

The statistic T averages |y_m(n)|^2 over N samples in each of the M sectors.
For large N it is treated as Gaussian under both hypotheses, and the
threshold is set so that the detection probability equals the target.
"""

import math
import logging
from typing import Tuple

from src.models.pattern import PatternIntegrals
from src.models.sensing import SensingConfig, DetectorStats
from src.services.errors import DomainError, SensingModelError
from src.services.special_functions import gaussian_q, gaussian_q_inv

logger = logging.getLogger(__name__)

# guards floor(T_sen / (M T_s)) against representation error in T_sen
_COUNT_SLACK = 1e-9


def sample_count(cfg: SensingConfig, m_sectors: int) -> int:
    """N = floor(T_sen / (M T_s)), at least one sample per sector"""
    n = int(math.floor(cfg.t_sense / (m_sectors * cfg.t_sample) + _COUNT_SLACK))
    if n < 1:
        raise DomainError(
            f"t_sense={cfg.t_sense} gives no sample per sector (M={m_sectors}, t_sample={cfg.t_sample})")
    return n


def mean_h1(cfg: SensingConfig, ints: PatternIntegrals) -> float:
    """mu = P_p gamma E_A + sigma_w^2"""
    return cfg.p_pu * cfg.gamma_pu * ints.e_a + cfg.sigma_w2


def variance_h0(cfg: SensingConfig, m_sectors: int) -> float:
    n = sample_count(cfg, m_sectors)
    return cfg.sigma_w2 ** 2 / (m_sectors * n)


def variance_h1(cfg: SensingConfig, ints: PatternIntegrals, m_sectors: int) -> float:
    """
    Variance of T with the PU active

    Args:
        cfg: frame and signal parameters
        ints: pattern integrals (E_A, E_B, E_mm')
        m_sectors: number of sectors M

    Returns:
        sigma^2_{T|H1}; raises SensingModelError if the expression is not positive
    """
    n = sample_count(cfg, m_sectors)
    mn = m_sectors * n
    gp = cfg.gamma_pu * cfg.p_pu
    s2 = cfg.sigma_w2
    bracket = s2 * s2 + 2.0 * gp * ints.e_a * s2 + gp * gp * (3.0 * ints.e_b - mn * ints.e_a ** 2)
    variance = bracket / mn + gp * gp * ints.cross_sum / m_sectors ** 2
    if not variance > 0.0:
        raise SensingModelError(
            f"sigma^2_T|H1 = {variance} is not positive (N={n}, M={m_sectors}, E_A={ints.e_a}, E_B={ints.e_b})")
    return variance


def false_alarm_at_pd(cfg: SensingConfig, mu1: float, var_h0: float, var_h1: float) -> float:
    """P_fa when the threshold is placed so that P_d equals cfg.pd_target"""
    if not (var_h0 > 0.0 and var_h1 > 0.0):
        raise SensingModelError(f"detector variances must be positive, got ({var_h0}, {var_h1})")
    arg = (math.sqrt(var_h1) * gaussian_q_inv(cfg.pd_target) + mu1 - cfg.sigma_w2) / math.sqrt(var_h0)
    return float(gaussian_q(arg))


def outcome_probabilities(cfg: SensingConfig, p_fa: float) -> Tuple[float, float]:
    """(pi_hat0, pi_hat1): probabilities that the detector declares H0 / H1"""
    pi_hat0 = cfg.pi1 * (1.0 - cfg.pd_target) + cfg.pi0 * (1.0 - p_fa)
    return pi_hat0, 1.0 - pi_hat0


def detector_stats(cfg: SensingConfig, ints: PatternIntegrals, m_sectors: int) -> DetectorStats:
    """Assemble every sensing-phase quantity for one sensing time"""
    n = sample_count(cfg, m_sectors)
    mu1 = mean_h1(cfg, ints)
    var0 = variance_h0(cfg, m_sectors)
    var1 = variance_h1(cfg, ints, m_sectors)
    p_fa = false_alarm_at_pd(cfg, mu1, var0, var1)
    pi_hat0, pi_hat1 = outcome_probabilities(cfg, p_fa)
    return DetectorStats(n_samples=n, mu0=cfg.sigma_w2, mu1=mu1, var_h0=var0, var_h1=var1,
                         p_fa=p_fa, p_d=cfg.pd_target, pi_hat0=pi_hat0, pi_hat1=pi_hat1)


def detection_threshold(stats: DetectorStats, pd_target: float) -> float:
    """eta = mu + sigma_T|H1 Q^-1(P_d)"""
    return stats.mu1 + math.sqrt(stats.var_h1) * gaussian_q_inv(pd_target)


def detection_at_threshold(stats: DetectorStats, eta: float) -> Tuple[float, float]:
    """(P_fa, P_d) for an explicit threshold eta"""
    p_fa = float(gaussian_q((eta - stats.mu0) / math.sqrt(stats.var_h0)))
    p_d = float(gaussian_q((eta - stats.mu1) / math.sqrt(stats.var_h1)))
    return p_fa, p_d
