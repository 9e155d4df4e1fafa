"""
Experiment sweeps: ROC, beam selection, optimized capacity and reliability,
and the closed-form versus simulation validation suite

Each sweep builds scenarios from an ExperimentConfig, runs the analytic
pipeline and the frame simulator side by side and returns a pandas table with
the analytic value, the simulated value and its standard error on every row.
"""

import os
import json
import math
import hashlib
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from functools import lru_cache
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import integrate

from src.models.channel import BeamChannelModel
from src.models.experiment import DEFAULT_SWEEPS, ExperimentConfig, ScenarioSettings, SweepSpec, db_to_linear
from src.models.pattern import RadiationPattern
from src.models.scenario import ScenarioParams, ModulationSpec
from src.models.sensing import SensingConfig
from src.models.simulation import EmpiricalReport, Expectation, Moments, RandomStream
from src.services import capacity_optimizer, monte_carlo_oracle, performance_metrics
from src.services.antenna_pattern import normalize_for_unit_ea
from src.services.beam_selection import (beam_model_from_geometry, beam1_selection_prob,
                                         beam1_selection_prob_mixture, beam1_selection_prob_quadrature,
                                         build_coefficients, joint_pdf, required_j_max, sample_gains,
                                         selected_gain_pdf, selected_gain_pdf_series)
from src.services.errors import AuditFailure, ConfigError, InfeasiblePolicyError, SeriesConvergenceError
from src.services.performance_metrics import outage_probability

logger = logging.getLogger(__name__)

# shard ids of one sweep point never reach the next point's range
STREAM_STRIDE = 1 << 20
ORIENTATION_STREAM = 0
VALIDATION_GRID_DELTA = (0.25, 0.5, 1.0, 2.0, 4.0)
VALIDATION_GRID_RHO = (0.0, 0.3, 0.6, 0.9)
VALIDATION_PDF_POINTS = 200
VALIDATION_PDF_SPAN = 20.0
VALIDATION_GRID_OMEGA = (0.5, 2.0, 5.0)
VALIDATION_GRID_SNR = (0.1, 1.0, 10.0)
VALIDATION_GRID_ZETA = (0.0, 0.5, 2.0)
VALIDATION_MAX_ORDER = 10
VALIDATION_POINTS = 10
OPERATING_POINT_STREAM = 1
_MAX_VALIDATION_J = 2560
# audited quantity -> suite, for the simulation rows of the operating points
SIMULATION_SUITES = {'apc_lhs': 6, 'aic_lhs': 6, 'p_out': 7, 'sep': 7}
TREND_BEAMWIDTHS_DEG = (20.0, 25.0, 30.0)
TREND_CAPACITY_DEG = (20.0, 30.0)
TREND_PHI_SR_DEG = 15.0
TREND_TOLERANCE = 1e-12


@lru_cache(maxsize=64)
def unit_pattern(m_sectors: int, phi_3db: float, side_lobe_l: float) -> RadiationPattern:
    return normalize_for_unit_ea(RadiationPattern(m_sectors=m_sectors, phi_3db=phi_3db,
                                                  side_lobe_l=side_lobe_l, a0=1.0))


def build_scenario(settings: ScenarioSettings, phi_3db: Optional[float] = None, omni: bool = False) -> ScenarioParams:
    """ScenarioParams for a settings block, with an optional beamwidth override or the omni baseline"""
    if omni:
        pattern = RadiationPattern.omnidirectional(settings.m_sectors)
    else:
        pattern = unit_pattern(settings.m_sectors, settings.phi_3db if phi_3db is None else phi_3db,
                               settings.side_lobe_l)
    sensing = SensingConfig(t_frame=settings.t_frame, t_train=settings.t_train, t_sample=settings.t_sample,
                            t_sense=settings.t_sense, p_pu=settings.p_pu, sigma_w2=settings.sigma_w2,
                            gamma_pu=settings.gamma_pu, pi1=settings.pi1, pd_target=settings.pd_target)
    phi_sr = settings.phi_sr_absolute
    beams = beam_model_from_geometry(pattern, phi_sr, settings.gamma_ss, settings.rho)
    return ScenarioParams(sensing=sensing, pattern=pattern, beams=beams, gamma_sp=settings.gamma_sp,
                          phi_pu=settings.phi_pu, phi_sr=phi_sr, i_bar=settings.i_bar, p_bar=settings.p_bar,
                          aic_model=settings.aic_model)


class ExperimentService:
    """Runs experiment sweeps and writes their tables"""

    def __init__(self, workers: Optional[int] = None):
        if workers is None:
            workers = int(os.getenv('CRBEAM_WORKERS', '1'))
        if workers < 1:
            raise ConfigError("workers must be >= 1", field='CRBEAM_WORKERS')
        self.workers = workers

    def _map(self, func: Callable, items: List) -> List:
        """Apply func to every item; results keep item order"""
        if self.workers > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                return list(pool.map(func, items))
        return [func(item) for item in items]

    def run(self, kind: str, cfg: ExperimentConfig) -> pd.DataFrame:
        runners = {
            'roc': self.run_roc,
            'beams': self.run_beam_selection_sweep,
            'capacity': self.run_capacity_sweep,
            'reliability': self.run_reliability_sweep,
            'validate': self.run_validation,
        }
        if kind not in runners:
            raise ConfigError(f"unknown experiment '{kind}', expected one of {sorted(runners)}", field='experiment')
        logger.info(f"Running '{kind}' experiment (seed={cfg.mc.seed}, frames={cfg.mc.frames})")
        return runners[kind](cfg)

    def run_roc(self, cfg: ExperimentConfig) -> pd.DataFrame:
        """
        (P_fa, P_d) pairs per beamwidth along the sweep axis

        The simulated column always uses the physical energy detector; the
        analytic pair relies on the Gaussian approximation of T.
        """
        sweep = cfg.sweep_for('roc')
        widths = [None] if sweep.axis == 'phi_3db_deg' else list(cfg.figures.beamwidths)
        tasks = [(k, width, value, si) for k, (width, (value, si)) in
                 enumerate((w, p) for w in widths for p in zip(sweep.values, sweep.si_values))]
        n_se = monte_carlo_oracle.family_n_se(2 * len(tasks))

        def point(task):
            index, width, value, si = task
            settings = cfg.scenario.at(sweep.axis, si)
            scn = build_scenario(settings, phi_3db=width)
            stats = capacity_optimizer.sensing_stats(scn, settings.t_sense)
            pol = capacity_optimizer.build_policy(scn, 0.0, settings.t_sense)
            report = monte_carlo_oracle.simulate_frames(
                scn, pol, cfg.mc.frames, RandomStream(cfg.mc.seed, (index + 1) * STREAM_STRIDE),
                decision_model='energy', chunk_size=cfg.mc.chunk_size)
            audit = monte_carlo_oracle.audit(report, [
                Expectation('p_fa', stats.p_fa, 'eq', monte_carlo_oracle.CLT_SLACK),
                Expectation('p_d', stats.p_d, 'eq', monte_carlo_oracle.CLT_SLACK),
            ], n_se=n_se)
            return {
                'phi_3db_deg': math.degrees(width if width is not None else settings.phi_3db),
                sweep.axis: value,
                'n_samples': stats.n_samples,
                'p_fa': stats.p_fa,
                'p_d': stats.p_d,
                'mc_p_fa': report['p_fa'].value,
                'mc_p_fa_se': report['p_fa'].se,
                'mc_p_d': report['p_d'].value,
                'mc_p_d_se': report['p_d'].se,
                'passed': all(row.passed for row in audit),
            }

        return self._table('roc', self._map(point, tasks))

    def run_beam_selection_sweep(self, cfg: ExperimentConfig) -> pd.DataFrame:
        """Delta_1 per SU-Rx offset along the sweep axis, with the rho = 0 reference column"""
        sweep = cfg.sweep_for('beams')
        offsets = [None] if sweep.axis == 'phi_sr_deg' else list(cfg.figures.phi_sr_offsets)
        tasks = [(k, offset, value, si) for k, (offset, (value, si)) in
                 enumerate((o, p) for o in offsets for p in zip(sweep.values, sweep.si_values))]
        n_se = monte_carlo_oracle.family_n_se(len(tasks))

        def point(task):
            index, offset, value, si = task
            settings = cfg.scenario.at(sweep.axis, si)
            if offset is not None:
                settings = settings.evolve(phi_sr=offset)
            model = build_scenario(settings).beams
            closed = beam1_selection_prob(model)
            rng = RandomStream(cfg.mc.seed, (index + 1) * STREAM_STRIDE).generator()
            nu1, nu2 = sample_gains(model, cfg.mc.frames, rng)
            empirical = Moments.of(nu1 >= nu2).mean_estimate()
            return {
                'phi_sr_deg': math.degrees(settings.phi_sr),
                sweep.axis: value,
                'delta1': model.delta1,
                'delta2': model.delta2,
                'selection_prob': closed,
                'selection_prob_mixture': beam1_selection_prob_mixture(model),
                'selection_prob_rho0': model.delta1 / (model.delta1 + model.delta2),
                'mc_selection_prob': empirical.value,
                'mc_selection_prob_se': empirical.se,
                'passed': abs(empirical.value - closed) <= n_se * empirical.se + 1e-12,
            }

        return self._table('beams', self._map(point, tasks))

    def _orientation_draws(self, cfg: ExperimentConfig) -> Tuple[np.ndarray, np.ndarray]:
        """K draws of (phi_PU, SU-Rx offset inside the sector pair), fixed by the seed"""
        rng = RandomStream(cfg.mc.seed, ORIENTATION_STREAM).generator()
        k = cfg.figures.orientations
        half_sector = math.pi / cfg.scenario.m_sectors
        return rng.uniform(0.0, 2.0 * math.pi, k), rng.uniform(-half_sector, half_sector, k)

    def _curves(self, cfg: ExperimentConfig, sweep: SweepSpec) -> List[Tuple[str, Optional[float], bool]]:
        if sweep.axis == 'phi_3db_deg':
            curves = [('ra', None, False)]
        else:
            curves = [(f"ra_{math.degrees(w):g}deg", w, False) for w in cfg.figures.beamwidths]
        if cfg.figures.include_omni:
            curves.append(('omni', None, True))
        return curves

    def _optimized_sweep(self, cfg: ExperimentConfig, kind: str, stream_base: int = 0) -> List[Dict[str, Any]]:
        """
        Optimized policy per (sweep point, curve), averaged over orientation draws

        Every (point, curve, orientation) cell is optimized and simulated on
        its own stream. Cells are averaged in draw order, and the simulation is
        audited once per row on the pooled cells, with the SE multiplier
        widened for the number of comparisons in the table.
        """
        sweep = cfg.sweep_for(kind)
        curves = self._curves(cfg, sweep)
        phi_pu, offsets = self._orientation_draws(cfg)
        k_draws = len(phi_pu)
        frames = max(1, cfg.mc.frames // k_draws)
        mod = ModulationSpec(psi=cfg.scenario.psi)
        cells = [(p, c, k) for p in range(len(sweep.values)) for c in range(len(curves)) for k in range(k_draws)]
        tasks = list(enumerate(cells))

        def cell(task):
            index, (p, c, k) = task
            _, width, omni = curves[c]
            settings = cfg.scenario.at(sweep.axis, sweep.si_values[p]).evolve(phi_pu=float(phi_pu[k]))
            if sweep.axis != 'phi_sr_deg':
                settings = settings.evolve(phi_sr=float(offsets[k]))
            scn = build_scenario(settings, phi_3db=width, omni=omni)
            result = capacity_optimizer.optimize_policy(scn, cfg.search)
            sep = performance_metrics.symbol_error_probability(scn, result.policy, mod)
            report = monte_carlo_oracle.simulate_frames(
                scn, result.policy, frames, RandomStream(cfg.mc.seed, (stream_base + index + 1) * STREAM_STRIDE),
                decision_model=cfg.mc.decision_model, mod=mod, chunk_size=cfg.mc.chunk_size)
            expected = monte_carlo_oracle.closed_form_expectations(scn, result.policy, mod, cfg.mc.decision_model)
            return result, sep, report, expected

        outcomes = self._map(cell, tasks)
        groups = []
        for p, value in enumerate(sweep.values):
            for c, curve in enumerate(curves):
                group = [outcomes[(p * len(curves) + c) * k_draws + k] for k in range(k_draws)]
                pooled, expected = monte_carlo_oracle.pool_reports([g[2] for g in group], [g[3] for g in group])
                groups.append((value, curve, group, pooled, expected))
        n_se = monte_carlo_oracle.family_n_se(sum(len(g[4]) for g in groups))

        rows = []
        for value, (label, width, omni), group, pooled, expected in groups:
            results = [g[0] for g in group]
            seps = [g[1] for g in group]
            passed = all(row.passed for row in monte_carlo_oracle.audit(pooled, expected, n_se=n_se))
            row = {
                'curve': label,
                'phi_3db_deg': math.nan if omni else math.degrees(width if width is not None
                                                                 else cfg.scenario.phi_3db),
                sweep.axis: value,
                'zeta': float(np.mean([r.policy.zeta for r in results])),
                't_sense_ms': float(np.mean([r.policy.t_sense for r in results])) * 1e3,
                'phi': float(np.mean([r.policy.phi_power for r in results])),
                'c_lb': float(np.mean([r.report.c_lb for r in results])),
                'mc_c_lb': pooled['capacity_lb'].value,
                'mc_c_lb_se': pooled['capacity_lb'].se,
                'mc_capacity': pooled['capacity'].value,
                'mc_capacity_se': pooled['capacity'].se,
                'p_out': float(np.mean([r.policy.outage for r in results])),
                'mc_p_out': pooled['p_out'].value,
                'mc_p_out_se': pooled['p_out'].se,
                'sep': float(np.mean([s.unconditioned for s in seps])),
                'sep_conditioned': float(np.mean([s.conditioned for s in seps])),
                'mc_sep': pooled['sep'].value,
                'mc_sep_se': pooled['sep'].se,
                'passed': passed,
            }
            if not passed:
                logger.warning(f"Audit flagged {label} at {sweep.axis}={value:g}")
            rows.append(row)
        return rows

    def run_capacity_sweep(self, cfg: ExperimentConfig) -> pd.DataFrame:
        columns = ['curve', 'phi_3db_deg', cfg.sweep_for('capacity').axis, 'zeta', 't_sense_ms', 'phi',
                   'c_lb', 'mc_c_lb', 'mc_c_lb_se', 'mc_capacity', 'mc_capacity_se', 'passed']
        return self._table('capacity', self._optimized_sweep(cfg, 'capacity'))[columns]

    def run_reliability_sweep(self, cfg: ExperimentConfig) -> pd.DataFrame:
        columns = ['curve', 'phi_3db_deg', cfg.sweep_for('reliability').axis, 'zeta', 't_sense_ms', 'phi',
                   'p_out', 'mc_p_out', 'mc_p_out_se', 'sep', 'sep_conditioned', 'mc_sep', 'mc_sep_se', 'passed']
        return self._table('reliability', self._optimized_sweep(cfg, 'reliability'))[columns]

    def run_validation(self, cfg: ExperimentConfig) -> pd.DataFrame:
        """
        Every closed form against its quadrature, series and simulation oracles

        Suites: (1) Delta_1 against double integration, the mixture form and
        sampled gains over the (delta_1, delta_2, rho) grid; (2) f_nu* mass,
        series against direct form, joint density mass; (3) detector moments
        and P_d; (4) V and G against quadrature; (5) capacity at randomized
        optimized operating points; (6) the power and interference budgets
        there; (7) outage and SEP there; (8) the figure trends. Simulation
        rows share one SE multiplier widened for their total count.
        """
        rows: List[Dict[str, Any]] = []
        simulated: List[Tuple[int, str, EmpiricalReport, List[Expectation]]] = []
        grid = [(d1, d2, rho) for d1 in VALIDATION_GRID_DELTA for d2 in VALIDATION_GRID_DELTA
                for rho in VALIDATION_GRID_RHO]

        def grid_cell(task):
            index, (d1, d2, rho) = task
            model = BeamChannelModel(delta1=d1, delta2=d2, rho=rho)
            label = f"delta=({d1:g},{d2:g}) rho={rho:g}"
            closed = beam1_selection_prob(model)
            rng = RandomStream(cfg.mc.seed, (index + 1) * STREAM_STRIDE).generator()
            nu1, nu2 = sample_gains(model, cfg.mc.frames, rng)
            report = EmpiricalReport(n_frames=cfg.mc.frames, seed=cfg.mc.seed, decision_model='gains',
                                     estimates={'delta1': Moments.of(nu1 > nu2).mean_estimate()})
            density_mass, _ = integrate.quad(lambda x: selected_gain_pdf(model, x), 0.0, np.inf,
                                             epsabs=1e-12, epsrel=1e-10, limit=200)
            deviation, scale = _series_deviation(model)
            checks = [
                _check(1, 'selection_double_integral', label, closed, beam1_selection_prob_quadrature(model), 1e-6),
                _check(1, 'selection_mixture', label, closed, beam1_selection_prob_mixture(model), 1e-6),
                _check(2, 'density_mass', label, density_mass, 1.0, 1e-6),
                _check(2, 'series_pdf', label, deviation, 0.0, 1e-8 * scale),
            ]
            return checks, (1, label, report, [Expectation('delta1', closed)])

        for checks, sim in self._map(grid_cell, list(enumerate(grid))):
            rows.extend(checks)
            simulated.append(sim)
        slot = len(grid) + 1

        for rho in VALIDATION_GRID_RHO:
            model = BeamChannelModel(delta1=2.0, delta2=0.5, rho=rho)
            mass, _ = integrate.dblquad(lambda y2, y1: joint_pdf(model, y1, y2), 0.0, 40.0 * model.delta1,
                                        0.0, 40.0 * model.delta2, epsabs=1e-10, epsrel=1e-8)
            rows.append(_check(2, 'joint_mass', f"delta=(2,0.5) rho={rho:g}", mass, 1.0, 1e-6))

        scn = build_scenario(cfg.scenario)
        t_sense = cfg.scenario.t_sense
        stats = capacity_optimizer.sensing_stats(scn, t_sense)
        report = monte_carlo_oracle.simulate_frames(
            scn, capacity_optimizer.build_policy(scn, 0.0, t_sense), cfg.mc.frames,
            RandomStream(cfg.mc.seed, slot * STREAM_STRIDE), decision_model='energy',
            chunk_size=cfg.mc.chunk_size, workers=self.workers)
        simulated.append((3, f"N={stats.n_samples} M={scn.m_sectors}", report, [
            Expectation('t_mean_h0', stats.mu0),
            Expectation('t_var_h0', stats.var_h0),
            Expectation('t_mean_h1', stats.mu1),
            Expectation('t_var_h1', stats.var_h1),
            Expectation('p_d', cfg.scenario.pd_target, 'eq', monte_carlo_oracle.CLT_SLACK),
        ]))
        slot += 1

        for omega, s, zeta in itertools.product(VALIDATION_GRID_OMEGA, VALIDATION_GRID_SNR, VALIDATION_GRID_ZETA):
            label = f"omega={omega:g} S={s:g} zeta={zeta:g}"
            worst = 0.0
            for n in range(VALIDATION_MAX_ORDER + 1):
                value = capacity_optimizer.v_func(n, omega, s, zeta)
                reference = capacity_optimizer.v_quadrature(n, omega, s, zeta)
                worst = max(worst, abs(value - reference) / reference)
            rows.append(_check(4, 'v_recursion', label, worst, 0.0, 1e-8))
            g_closed = capacity_optimizer.g_func(1.0 / omega, s, zeta)
            g_quad = capacity_optimizer.g_quadrature(1.0 / omega, s, zeta)
            rows.append(_check(4, 'g_closed_form', label, abs(g_closed - g_quad) / g_quad, 0.0, 1e-9))

        mod = ModulationSpec(psi=cfg.scenario.psi)
        points = self._operating_points(cfg)

        def operating_point(task):
            index, settings = task
            label = f"point {index}"
            point_scn = build_scenario(settings)
            try:
                result = capacity_optimizer.optimize_policy(point_scn, cfg.search)
            except InfeasiblePolicyError as e:
                logger.warning(f"Validation {label} has no feasible policy: {str(e)}")
                return [_check(5, 'feasible', label, 0.0, 1.0, 0.0)], None
            pol = result.policy
            closed_c = result.report.c_lb
            quad_c = capacity_optimizer.capacity_lb_quadrature(point_scn, pol).c_lb
            closed_sep = performance_metrics.symbol_error_probability(point_scn, pol, mod)
            quad_sep = performance_metrics.symbol_error_probability_quadrature(point_scn, pol, mod)
            if pol.zeta > 0:
                below, _ = integrate.quad(lambda x: selected_gain_pdf(point_scn.beams, x), 0.0, pol.zeta,
                                          epsabs=1e-13, epsrel=1e-10, limit=200)
            else:
                below = 0.0
            rep = result.report
            tightest = min(rep.apc_slack / point_scn.p_bar, rep.aic_slack / point_scn.i_bar)
            checks = [
                _check(5, 'capacity_quadrature', label, closed_c, quad_c, 1e-6 * max(quad_c, 1e-12)),
                _check(6, 'constraint_tight', f"{label} ({rep.active_constraint})", tightest, 0.0, 0.01),
                _check(7, 'outage_identity', label, outage_probability(point_scn.beams, pol.zeta), below, 1e-8),
                _check(7, 'outage_policy', label, pol.outage, below, 1e-8),
                _check(7, 'sep_quadrature', f"{label} ({closed_sep.method})", closed_sep.unconditioned,
                       quad_sep.unconditioned, 1e-6 * max(quad_sep.unconditioned, 1e-12)),
            ]
            report = monte_carlo_oracle.simulate_frames(
                point_scn, pol, cfg.mc.frames, RandomStream(cfg.mc.seed, (slot + index) * STREAM_STRIDE),
                decision_model=cfg.mc.decision_model, mod=mod, chunk_size=cfg.mc.chunk_size)
            expected = monte_carlo_oracle.closed_form_expectations(point_scn, pol, mod, cfg.mc.decision_model)
            return checks, (5, label, report, expected)

        for checks, sim in self._map(operating_point, list(enumerate(points))):
            rows.extend(checks)
            if sim is not None:
                simulated.append(sim)

        n_se = monte_carlo_oracle.family_n_se(sum(len(sim[3]) for sim in simulated))
        for suite, label, report, expected in simulated:
            for row in monte_carlo_oracle.audit(report, expected, n_se=n_se):
                rows.append({
                    'suite': SIMULATION_SUITES.get(row.quantity, suite),
                    'check': 'jensen' if row.quantity == 'capacity' else 'monte_carlo',
                    'case': f"{label}: {row.quantity} ({row.relation})",
                    'value': row.analytic,
                    'reference': row.empirical,
                    'tolerance': n_se * row.se,
                    'passed': row.passed,
                })

        rows.extend(self._trend_rows(cfg, stream_base=slot + len(points)))
        return self._table('validate', rows)

    def _operating_points(self, cfg: ExperimentConfig) -> List[ScenarioSettings]:
        """Randomized operating points around the configured scenario, fixed by the seed"""
        rng = RandomStream(cfg.mc.seed, OPERATING_POINT_STREAM).generator()
        half_sector = math.pi / cfg.scenario.m_sectors
        points = []
        for _ in range(VALIDATION_POINTS):
            points.append(cfg.scenario.evolve(
                p_bar=db_to_linear(rng.uniform(-5.0, 15.0)),
                i_bar=db_to_linear(rng.uniform(-5.0, 5.0)),
                pd_target=rng.uniform(0.75, 0.95),
                pi1=rng.uniform(0.2, 0.6),
                rho=rng.uniform(0.0, 0.8),
                phi_3db=math.radians(rng.uniform(20.0, 30.0)),
                phi_pu=rng.uniform(0.0, 2.0 * math.pi),
                phi_sr=rng.uniform(-half_sector, half_sector),
            ))
        return points

    def _trend_rows(self, cfg: ExperimentConfig, stream_base: int = 0) -> List[Dict[str, Any]]:
        """Orderings the figures show, asserted pointwise on their sweep grids"""
        rows = []
        roc_values = [v for v in DEFAULT_SWEEPS['roc'][1] if v > 0.5]
        for pd_target in roc_values:
            settings = cfg.scenario.evolve(pd_target=pd_target)
            p_fa = [capacity_optimizer.sensing_stats(build_scenario(settings, phi_3db=math.radians(w)),
                                                     settings.t_sense).p_fa for w in TREND_BEAMWIDTHS_DEG]
            for (narrow, wide), (fa_narrow, fa_wide) in zip(zip(TREND_BEAMWIDTHS_DEG, TREND_BEAMWIDTHS_DEG[1:]),
                                                            zip(p_fa, p_fa[1:])):
                rows.append(_at_most(8, 'roc_order', f"pd={pd_target:g} {wide:g}deg vs {narrow:g}deg",
                                     fa_wide, fa_narrow))

        offset = cfg.scenario.evolve(phi_sr=math.radians(TREND_PHI_SR_DEG))
        widths = [w for w in DEFAULT_SWEEPS['beams'][1] if w >= 15]
        models = [build_scenario(offset, phi_3db=math.radians(w)).beams for w in widths]
        selection = [beam1_selection_prob(m) for m in models]
        for (narrow, wide), (sel_narrow, sel_wide) in zip(zip(widths, widths[1:]), zip(selection, selection[1:])):
            rows.append(_at_most(8, 'selection_order', f"phi_sr={TREND_PHI_SR_DEG:g}deg {wide:g}deg vs {narrow:g}deg",
                                 sel_wide, sel_narrow))
        for width, model in zip(widths, models):
            independent = BeamChannelModel(delta1=model.delta1, delta2=model.delta2, rho=0.0)
            rows.append(_check(8, 'selection_independent', f"{width:g}deg", beam1_selection_prob(independent),
                               model.delta1 / (model.delta1 + model.delta2), 1e-10))

        axis, values = DEFAULT_SWEEPS['capacity']
        trend_cfg = replace(
            cfg,
            scenario=cfg.scenario.evolve(i_bar=db_to_linear(0.0)),
            sweep=SweepSpec.of(axis, values),
            figures=replace(cfg.figures, beamwidths=tuple(math.radians(w) for w in TREND_CAPACITY_DEG),
                            include_omni=True),
        )
        table = pd.DataFrame(self._optimized_sweep(trend_cfg, 'capacity', stream_base))
        narrow_label, wide_label = (f"ra_{w:g}deg" for w in TREND_CAPACITY_DEG)
        for value in values:
            at = table[table[axis] == value].set_index('curve')
            narrow, wide, omni = at.loc[narrow_label], at.loc[wide_label], at.loc['omni']
            label = f"{axis}={value:g}"
            rows.append(_at_most(8, 'capacity_order', f"{label} {wide_label} vs {narrow_label}",
                                 wide['c_lb'], narrow['c_lb']))
            rows.append(_at_most(8, 'capacity_order', f"{label} omni vs {wide_label}", omni['c_lb'], wide['c_lb']))
            rows.append(_at_most(8, 'outage_order', f"{label} {wide_label} vs {narrow_label}",
                                 wide['p_out'], narrow['p_out']))
            rows.append(_at_most(8, 'sep_order', f"{label} {wide_label} vs {narrow_label}",
                                 wide['sep'], narrow['sep']))
        return rows

    def _table(self, kind: str, rows: List[Dict[str, Any]]) -> pd.DataFrame:
        table = pd.DataFrame(rows)
        if 'passed' in table and not table['passed'].all():
            logger.warning(f"{kind}: {int((~table['passed']).sum())} of {len(table)} rows failed the audit")
        return table

    def write_table(self, table: pd.DataFrame, cfg: ExperimentConfig, kind: str) -> Dict[str, str]:
        """
        Write the table and its metadata sidecar

        The sidecar holds the resolved config and a git-style blob SHA-1 of
        the table bytes; it has no timestamps so repeated runs match byte for byte.
        """
        os.makedirs(cfg.output.dir, exist_ok=True)
        if cfg.output.format == 'json':
            text = table.to_json(orient='records', double_precision=15, indent=2) + '\n'
        else:
            text = table.to_csv(index=False, float_format=cfg.output.float_format, lineterminator='\n')
        data = text.encode('utf-8')
        path = os.path.join(cfg.output.dir, f"{kind}.{cfg.output.format}")
        with open(path, 'wb') as f:
            f.write(data)

        meta = {
            'experiment': kind,
            'config': cfg.to_dict(),
            'seed': cfg.mc.seed,
            'frames': cfg.mc.frames,
            'rows': int(len(table)),
            'columns': [str(c) for c in table.columns],
            'all_passed': bool(table['passed'].all()) if 'passed' in table else None,
            'sha1': git_blob_sha1(data),
        }
        meta_path = os.path.join(cfg.output.dir, f"{kind}.meta.json")
        with open(meta_path, 'w', encoding='utf-8') as f:
            json.dump(meta, f, indent=2, sort_keys=True)
            f.write('\n')
        logger.info(f"Wrote {len(table)} rows to {path}")
        return {'table': path, 'meta': meta_path}


def _check(suite: int, check: str, case: str, value: float, reference: float, tolerance: float) -> Dict[str, Any]:
    return {
        'suite': suite,
        'check': check,
        'case': case,
        'value': value,
        'reference': reference,
        'tolerance': tolerance,
        'passed': bool(abs(value - reference) <= tolerance),
    }


def _at_most(suite: int, check: str, case: str, value: float, bound: float) -> Dict[str, Any]:
    return {
        'suite': suite,
        'check': check,
        'case': case,
        'value': value,
        'reference': bound,
        'tolerance': TREND_TOLERANCE,
        'passed': bool(value <= bound + TREND_TOLERANCE),
    }


def _series_deviation(model: BeamChannelModel) -> Tuple[float, float]:
    """
    Largest gap between the series and direct forms of f_nu* on
    [0, VALIDATION_PDF_SPAN max(delta)], and the density scale it is judged against
    """
    xs = np.linspace(0.0, VALIDATION_PDF_SPAN * max(model.delta1, model.delta2), VALIDATION_PDF_POINTS)
    direct = np.array([selected_gain_pdf(model, x) for x in xs])
    # far tails need rows well past the rho^{2j} cut
    j_max = required_j_max(model)
    while True:
        coeffs = build_coefficients(model, j_max)
        try:
            series = np.array([selected_gain_pdf_series(model, coeffs, x) for x in xs])
            break
        except SeriesConvergenceError:
            if 2 * j_max > _MAX_VALIDATION_J:
                raise
            j_max *= 2
    return float(np.max(np.abs(series - direct))), max(1.0, float(np.max(np.abs(direct))))


def git_blob_sha1(data: bytes) -> str:
    """SHA-1 of the bytes as git would hash them as a blob"""
    return hashlib.sha1(b'blob ' + str(len(data)).encode('ascii') + b'\0' + data).hexdigest()


def ensure_passed(table: pd.DataFrame):
    """Raise AuditFailure when any row of a validation table failed"""
    if 'passed' not in table:
        return
    failed = table.loc[~table['passed'].astype(bool)]
    if len(failed):
        cases = ', '.join(f"{r['check']}[{r['case']}]" if 'check' in r else str(i) for i, r in failed.iterrows())
        raise AuditFailure(f"{len(failed)} validation rows failed: {cases}")
