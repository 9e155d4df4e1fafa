"""
Frame-by-frame simulation of the sensing and transmission process

Every closed form in the engine has an empirical counterpart here. Frames are
simulated in shards; shard k draws from stream (seed, base_id + k), and
per-shard moment sums are merged in shard order so that a run is
reproducible bit for bit from (seed, chunk_size).
"""

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.models.scenario import ScenarioParams, TransmissionPolicy, ModulationSpec
from src.models.simulation import (RandomStream, FrameSample, Moments, Estimate, EmpiricalReport,
                                   Expectation, AuditRow)
from src.services import capacity_optimizer, performance_metrics
from src.services.antenna_pattern import pattern_gain
from src.services.beam_selection import sample_gains
from src.services.errors import AuditFailure, DomainError
from src.services.special_functions import gaussian_q, gaussian_q_inv
from src.services.spectrum_sensing import detection_threshold

logger = logging.getLogger(__name__)

DECISION_MODELS = ('energy', 'analytic')
DEFAULT_CHUNK = 10_000
# residual bias allowed on quantities that rest on the Gaussian approximation of T
CLT_SLACK = 0.02
_SAMPLES_PER_BLOCK = 1_000_000


def detector_threshold_from_pd(scn: ScenarioParams, t_sense: Optional[float] = None) -> float:
    """eta = mu + sigma_T|H1 Q^-1(P_d target)"""
    stats = capacity_optimizer.sensing_stats(scn, scn.sensing.t_sense if t_sense is None else t_sense)
    return detection_threshold(stats, scn.sensing.pd_target)


def _energy_statistic(scn: ScenarioParams, pu_active: np.ndarray, n_samples: int,
                      rng: np.random.Generator) -> np.ndarray:
    """T = (1/MN) sum_m sum_n |y_m(n)|^2 with a fresh PU orientation per frame"""
    cfg = scn.sensing
    m = scn.m_sectors
    block = max(1, _SAMPLES_PER_BLOCK // (m * n_samples))
    out = np.empty(pu_active.size)
    for start in range(0, pu_active.size, block):
        active = pu_active[start:start + block]
        shape = (active.size, m, n_samples)
        noise = math.sqrt(cfg.sigma_w2 / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        fading = math.sqrt(cfg.gamma_pu / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        symbols = math.sqrt(cfg.p_pu / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        orientation = rng.uniform(0.0, 2.0 * math.pi, active.size)
        gains = np.stack([pattern_gain(scn.pattern, k, orientation) for k in range(1, m + 1)], axis=1)
        signal = fading * np.sqrt(gains)[:, :, None] * symbols
        received = noise + active[:, None, None] * signal
        out[start:start + block] = np.mean(np.abs(received) ** 2, axis=(1, 2))
    return out


def branch_seps(scn: ScenarioParams, pol: TransmissionPolicy,
                mod: ModulationSpec = ModulationSpec()) -> Tuple[float, float]:
    """
    Channel-averaged SEP of a frame sent while the PU is idle and while it is active

    Frames carry these conditional means in place of a raw Q(sqrt(Psi S nu*))
    draw. The mean is unchanged and only the PU state and the sensing
    decision remain random.
    """
    if pol.phi_power == 0.0 or pol.transmit_probability == 0.0:
        return 0.0, 0.0
    return (performance_metrics.branch_sep_quadrature(scn.beams, pol.snr0, mod.psi, pol.zeta),
            performance_metrics.branch_sep_quadrature(scn.beams, pol.snr1, mod.psi, pol.zeta))


def simulate_batch(scn: ScenarioParams, pol: TransmissionPolicy, n_frames: int, rng: np.random.Generator,
                   decision_model: str = 'energy', mod: ModulationSpec = ModulationSpec(),
                   seps: Optional[Tuple[float, float]] = None) -> FrameSample:
    """Simulate n_frames frames with one generator; seps are the branch_seps of the policy"""
    if seps is None:
        seps = branch_seps(scn, pol, mod)
    cfg = scn.sensing.with_sense_time(pol.t_sense)
    pu_active = rng.random(n_frames) < cfg.pi1

    if decision_model == 'energy':
        eta = detector_threshold_from_pd(scn, pol.t_sense)
        statistic = _energy_statistic(scn.evolve(sensing=cfg), pu_active, pol.n_samples, rng)
        declared_idle = statistic < eta
    else:
        statistic = np.full(n_frames, np.nan)
        draw = rng.random(n_frames)
        declared_idle = np.where(pu_active, draw < 1.0 - cfg.pd_target, draw < 1.0 - pol.p_fa)

    nu1, nu2 = sample_gains(scn.beams, n_frames, rng)
    nu_star = np.maximum(nu1, nu2)
    beam = np.where(nu1 >= nu2, 1, 2)
    g_sp = rng.exponential(scn.gamma_sp, n_frames)

    transmit = declared_idle & (nu_star >= pol.zeta)
    power = pol.phi_power * transmit
    true_noise = cfg.sigma_w2 + pu_active * cfg.p_pu * g_sp
    bound_noise = cfg.sigma_w2 + pu_active * scn.sigma_p2
    rate = pol.d_t * np.log2(1.0 + power * nu_star / true_noise)
    rate_lb = pol.d_t * np.log2(1.0 + power * nu_star / bound_noise)

    toward_pu = np.where(beam == 1, pattern_gain(scn.pattern, 1, scn.phi_pu), pattern_gain(scn.pattern, 2, scn.phi_pu))
    interference = pol.d_t * pu_active * g_sp * toward_pu * power
    sep = np.where(declared_idle, np.where(pu_active, seps[1], seps[0]), 0.0)

    return FrameSample(pu_active=pu_active, statistic=statistic, declared_idle=declared_idle,
                       nu1=nu1, nu2=nu2, nu_star=nu_star, beam=beam, g_sp=g_sp, power=power,
                       rate=rate, rate_lb=rate_lb, interference=interference, sep=sep)


def _shard_moments(scn: ScenarioParams, pol: TransmissionPolicy, frames: FrameSample) -> Dict[str, Moments]:
    cfg = scn.sensing
    idle = ~frames.pu_active
    busy = frames.pu_active
    transmit = frames.power > 0
    moments = {
        'p_fa': Moments.of(~frames.declared_idle[idle]),
        'p_d': Moments.of(~frames.declared_idle[busy]),
        'pi_hat0': Moments.of(frames.declared_idle),
        'delta1': Moments.of(frames.beam == 1),
        'capacity': Moments.of(frames.rate),
        'capacity_lb': Moments.of(frames.rate_lb),
        'aic_lhs': Moments.of(frames.interference),
        'apc_lhs': Moments.of(pol.d_t * frames.power),
        'p_out': Moments.of(frames.nu_star < pol.zeta),
        'transmit': Moments.of(transmit),
        'sep': Moments.of(frames.sep),
    }
    if np.isfinite(frames.statistic).all():
        mu1 = cfg.p_pu * cfg.gamma_pu * capacity_optimizer.pattern_integrals(scn.pattern).e_a + cfg.sigma_w2
        moments['t_h0'] = Moments.of(frames.statistic[idle], ref=cfg.sigma_w2)
        moments['t_h1'] = Moments.of(frames.statistic[busy], ref=mu1)
    return moments


def simulate_frames(scn: ScenarioParams, pol: TransmissionPolicy, n_frames: int, stream: RandomStream,
                    decision_model: str = 'energy', mod: ModulationSpec = ModulationSpec(),
                    chunk_size: int = DEFAULT_CHUNK, workers: int = 1) -> EmpiricalReport:
    """
    Empirical report over n_frames simulated frames

    Args:
        scn: scenario
        pol: policy under test
        n_frames: number of frames, >= 1
        stream: base random stream; shard k uses stream_id + k
        decision_model: 'energy' simulates the detector, 'analytic' draws decisions with the closed-form P_fa, P_d
        mod: modulation constant for the symbol error accounting
        chunk_size: frames per shard
        workers: shards simulated concurrently

    Returns:
        EmpiricalReport with an Estimate (value and standard error) per quantity
    """
    if n_frames < 1:
        raise DomainError(f"n_frames must be >= 1, got {n_frames}")
    if decision_model not in DECISION_MODELS:
        raise DomainError(f"decision_model must be one of {DECISION_MODELS}, got '{decision_model}'")
    if chunk_size < 1:
        raise DomainError(f"chunk_size must be >= 1, got {chunk_size}")

    sizes = [chunk_size] * (n_frames // chunk_size)
    if n_frames % chunk_size:
        sizes.append(n_frames % chunk_size)

    seps = branch_seps(scn, pol, mod)

    def run(indexed):
        shard, size = indexed
        rng = stream.child(shard).generator()
        frames = simulate_batch(scn, pol, size, rng, decision_model, mod, seps)
        return _shard_moments(scn, pol, frames)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            shards = list(pool.map(run, enumerate(sizes)))
    else:
        shards = [run(item) for item in enumerate(sizes)]

    merged = shards[0]
    for shard in shards[1:]:
        merged = {k: merged[k].merge(shard[k]) for k in merged}

    estimates = {k: m.mean_estimate() for k, m in merged.items() if k not in ('t_h0', 't_h1')}
    if 't_h0' in merged:
        estimates['t_mean_h0'] = merged['t_h0'].mean_estimate()
        estimates['t_var_h0'] = merged['t_h0'].variance_estimate()
        estimates['t_mean_h1'] = merged['t_h1'].mean_estimate()
        estimates['t_var_h1'] = merged['t_h1'].variance_estimate()

    sep, transmit = estimates['sep'], estimates['transmit']
    if transmit.value > 0:
        estimates['sep_conditioned'] = Estimate(value=sep.value / transmit.value, se=sep.se / transmit.value, n=sep.n)

    logger.info(f"Simulated {n_frames} frames in {len(sizes)} shards (seed={stream.seed}, model={decision_model})")
    return EmpiricalReport(n_frames=n_frames, seed=stream.seed, decision_model=decision_model, estimates=estimates)


def closed_form_expectations(scn: ScenarioParams, pol: TransmissionPolicy, mod: ModulationSpec = ModulationSpec(),
                             decision_model: str = 'energy') -> List[Expectation]:
    """Closed-form values paired with the empirical quantity that audits each"""
    stats = capacity_optimizer.sensing_stats(scn, pol.t_sense)
    clt = CLT_SLACK if decision_model == 'energy' else 0.0
    c_lb = capacity_optimizer.capacity_lb(scn, pol).c_lb
    sep = performance_metrics.symbol_error_probability(scn, pol, mod)
    expectations = [
        Expectation('p_fa', stats.p_fa, 'eq', clt),
        Expectation('p_d', scn.sensing.pd_target, 'eq', clt),
        Expectation('pi_hat0', stats.pi_hat0, 'eq', clt),
        Expectation('delta1', capacity_optimizer.selection_probability(scn.beams)),
        Expectation('p_out', pol.outage),
        Expectation('capacity_lb', c_lb, 'eq', clt * c_lb),
        Expectation('capacity', c_lb, 'ge'),
        Expectation('apc_lhs', scn.p_bar, 'le', clt * scn.p_bar),
        Expectation('aic_lhs', scn.i_bar, 'le', clt * scn.i_bar),
        Expectation('sep', sep.unconditioned, 'eq', clt * sep.unconditioned),
    ]
    if decision_model == 'energy':
        expectations += [
            Expectation('t_mean_h0', stats.mu0),
            Expectation('t_var_h0', stats.var_h0),
            Expectation('t_mean_h1', stats.mu1),
            Expectation('t_var_h1', stats.var_h1),
        ]
    return expectations


def audit(report: EmpiricalReport, expectations: Sequence[Expectation], n_se: float = 3.0,
          raise_on_failure: bool = False) -> List[AuditRow]:
    """
    Compare closed-form values with the simulation

    'eq' passes when |empirical - analytic| <= n_se * se + slack, 'le' when
    empirical <= analytic + n_se * se + slack, 'ge' symmetrically.
    """
    rows = []
    for exp in expectations:
        if exp.quantity not in report.estimates:
            continue
        est = report[exp.quantity]
        bound = n_se * (est.se if math.isfinite(est.se) else 0.0) + exp.slack
        if not math.isfinite(est.value):
            passed = False
        elif exp.relation == 'le':
            passed = est.value <= exp.value + bound
        elif exp.relation == 'ge':
            passed = est.value >= exp.value - bound
        else:
            passed = abs(est.value - exp.value) <= bound
        rows.append(AuditRow(quantity=exp.quantity, analytic=exp.value, empirical=est.value,
                             se=est.se, relation=exp.relation, passed=bool(passed)))
        if not passed:
            logger.warning(f"Audit: {exp.quantity} empirical {est.value:.6g} +/- {est.se:.2g} "
                           f"vs analytic {exp.value:.6g} ({exp.relation}) outside {n_se} SE")
    failed = [r.quantity for r in rows if not r.passed]
    if failed and raise_on_failure:
        raise AuditFailure(f"closed form and simulation disagree on: {', '.join(failed)}")
    return rows


def family_n_se(count: int, n_se: float = 3.0) -> float:
    """
    SE multiplier for each of `count` comparisons so that the chance of any
    false failure across all of them matches that of a single n_se comparison
    """
    if count <= 1:
        return n_se
    return gaussian_q_inv(gaussian_q(n_se) / count)


def pool_reports(reports: Sequence[EmpiricalReport],
                 expectations: Sequence[Sequence[Expectation]]) -> Tuple[EmpiricalReport, List[Expectation]]:
    """
    Average independent cells into one report and one expectation list

    Values and slacks are averaged; standard errors combine as
    sqrt(sum se^2) / K. Only quantities present in every cell are kept.
    """
    if not reports or len(reports) != len(expectations):
        raise DomainError(f"need one expectation list per report, got {len(reports)} and {len(expectations)}")
    k = len(reports)
    names = [name for name in reports[0].estimates if all(name in r.estimates for r in reports)]
    estimates = {}
    for name in names:
        cells = [r[name] for r in reports]
        estimates[name] = Estimate(value=math.fsum(e.value for e in cells) / k,
                                   se=math.sqrt(math.fsum(e.se ** 2 for e in cells)) / k,
                                   n=sum(e.n for e in cells))
    pooled = EmpiricalReport(n_frames=sum(r.n_frames for r in reports), seed=reports[0].seed,
                             decision_model=reports[0].decision_model, estimates=estimates)

    first = list(expectations[0])
    for other in expectations[1:]:
        if [(e.quantity, e.relation) for e in other] != [(e.quantity, e.relation) for e in first]:
            raise DomainError("cells to pool must audit the same quantities")
    averaged = [Expectation(quantity=exp.quantity,
                            value=math.fsum(cell[i].value for cell in expectations) / k,
                            relation=exp.relation,
                            slack=math.fsum(cell[i].slack for cell in expectations) / k)
                for i, exp in enumerate(first)]
    return pooled, averaged
