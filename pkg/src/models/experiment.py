"""
Experiment configuration

Config files are JSON with the unit in every key name (p_bar_db, phi_3db_deg,
t_frame_ms). Human units are converted to SI exactly once, in from_dict, and
every dataclass below holds SI values (radians, seconds, watts).
"""

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

from src.models.scenario import AIC_MODELS, SearchControl
from src.models.simulation import MAX_SEED
from src.services.errors import ConfigError

EXPERIMENT_KINDS = ('roc', 'beams', 'capacity', 'reliability', 'validate')
DECISION_MODELS = ('energy', 'analytic')
OUTPUT_FORMATS = ('csv', 'json')


def db_to_linear(value: float) -> float:
    return 10.0 ** (value / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(value)


def _ms(value: float) -> float:
    return value * 1e-3


def _to_ms(value: float) -> float:
    return value * 1e3


def _identity(value):
    return value


# config key -> (field, to SI, from SI)
SCENARIO_KEYS: Dict[str, Tuple[str, Callable, Callable]] = {
    'm_sectors': ('m_sectors', int, _identity),
    'phi_3db_deg': ('phi_3db', math.radians, math.degrees),
    'side_lobe_l': ('side_lobe_l', float, _identity),
    't_frame_ms': ('t_frame', _ms, _to_ms),
    't_train_ms': ('t_train', _ms, _to_ms),
    'f_s_khz': ('t_sample', lambda khz: 1.0 / (khz * 1e3), lambda ts: 1.0 / ts / 1e3),
    't_sense_ms': ('t_sense', _ms, _to_ms),
    'p_pu_w': ('p_pu', float, _identity),
    'sigma_w2_w': ('sigma_w2', float, _identity),
    'gamma_pu': ('gamma_pu', float, _identity),
    'gamma_sp': ('gamma_sp', float, _identity),
    'gamma_ss': ('gamma_ss', float, _identity),
    'pi1': ('pi1', float, _identity),
    'pd_target': ('pd_target', float, _identity),
    'rho': ('rho', float, _identity),
    'phi_pu_deg': ('phi_pu', math.radians, math.degrees),
    'phi_sr_deg': ('phi_sr', math.radians, math.degrees),
    'i_bar_db': ('i_bar', db_to_linear, linear_to_db),
    'p_bar_db': ('p_bar', db_to_linear, linear_to_db),
    'psi': ('psi', float, _identity),
    'aic_model': ('aic_model', str, _identity),
}

# budgets outside this span over- or underflow the power search
LEVEL_RANGE_DB = (-100.0, 100.0)


def _level_in_range(linear: float) -> bool:
    return linear > 0.0 and LEVEL_RANGE_DB[0] <= linear_to_db(linear) <= LEVEL_RANGE_DB[1]


SWEEP_AXES = ('p_bar_db', 'i_bar_db', 'phi_3db_deg', 'phi_sr_deg', 'pd_target', 'rho', 't_sense_ms')

DEFAULT_SWEEPS = {
    'roc': ('pd_target', [round(0.05 * k, 2) for k in range(1, 20)]),
    'beams': ('phi_3db_deg', [10, 15, 20, 25, 30, 35, 40, 45]),
    'capacity': ('p_bar_db', [-5, 0, 5, 10, 15]),
    'reliability': ('p_bar_db', [-5, 0, 5, 10, 15]),
}


@dataclass(frozen=True)
class ScenarioSettings:
    """
    Operating point in SI units

    phi_sr is the SU-Rx offset from the bisector of sectors 1 and 2, positive
    towards sector 1, so phi_sr = 0 sits midway between the two beams.
    """

    m_sectors: int = 8
    phi_3db: float = math.radians(25.0)
    side_lobe_l: float = 0.01
    t_frame: float = 10e-3
    t_train: float = 0.5e-3
    t_sample: float = 1e-5
    t_sense: float = 1.28e-3
    p_pu: float = 0.2
    sigma_w2: float = 1.0
    gamma_pu: float = 1.0
    gamma_sp: float = 1.0
    gamma_ss: float = 1.0
    pi1: float = 0.4
    pd_target: float = 0.85
    rho: float = 0.5
    phi_pu: float = 0.0
    phi_sr: float = 0.0
    i_bar: float = 1.0
    p_bar: float = 1.0
    psi: float = 4.0
    aic_model: str = 'selection'

    def __post_init__(self):
        if self.aic_model not in AIC_MODELS:
            raise ConfigError(f"aic_model must be one of {AIC_MODELS}", field='scenario.aic_model')
        problems = self.range_problems()
        if problems:
            key, message = problems[0]
            raise ConfigError(message, field=f"scenario.{key}")

    def range_problems(self) -> List[Tuple[str, str]]:
        """(config key, message) for every value outside its physical range"""
        # same rounding as the sensing model
        samples = int(math.floor(self.t_sense / (self.m_sectors * self.t_sample) + 1e-9)) if self.t_sample > 0 else 0
        checks = [
            ('m_sectors', self.m_sectors >= 2, "need at least two sectors"),
            ('phi_3db_deg', 0.0 < self.phi_3db < math.pi, "beamwidth must lie in (0, 180) degrees"),
            ('side_lobe_l', 0.0 < self.side_lobe_l < 1.0, "side-lobe level must lie in (0, 1)"),
            ('t_frame_ms', self.t_frame > 0.0, "frame length must be positive"),
            ('t_train_ms', 0.0 <= self.t_train < self.t_frame, "training time must lie in [0, t_frame)"),
            ('f_s_khz', self.t_sample > 0.0, "sampling rate must be positive"),
            ('t_sense_ms', 0.0 < self.t_sense < self.t_frame - self.t_train,
             "sensing time must lie in (0, t_frame - t_train)"),
            ('t_sense_ms', samples >= 1,
             f"sensing time gives no sample per sector (M={self.m_sectors}, T_s={self.t_sample:g} s)"),
            ('p_pu_w', self.p_pu >= 0.0, "PU power must be >= 0"),
            ('sigma_w2_w', self.sigma_w2 > 0.0, "noise power must be positive"),
            ('gamma_pu', self.gamma_pu > 0.0, "channel gain must be positive"),
            ('gamma_sp', self.gamma_sp > 0.0, "channel gain must be positive"),
            ('gamma_ss', self.gamma_ss > 0.0, "channel gain must be positive"),
            ('pi1', 0.0 <= self.pi1 <= 1.0, "PU activity probability must lie in [0, 1]"),
            ('pd_target', 0.0 < self.pd_target < 1.0, "detection target must lie in (0, 1)"),
            ('rho', 0.0 <= self.rho < 1.0, "beam correlation must lie in [0, 1)"),
            ('p_bar_db', _level_in_range(self.p_bar), f"power budget must lie in {LEVEL_RANGE_DB} dB"),
            ('i_bar_db', _level_in_range(self.i_bar), f"interference budget must lie in {LEVEL_RANGE_DB} dB"),
            ('psi', self.psi > 0.0, "modulation constant must be positive"),
        ]
        return [(key, message) for key, ok, message in checks if not ok]

    @property
    def phi_sr_absolute(self) -> float:
        """SU-Rx orientation measured from the sector-1 boresight"""
        return math.pi / self.m_sectors - self.phi_sr

    def evolve(self, **changes) -> 'ScenarioSettings':
        return replace(self, **changes)

    def at(self, axis: str, value: float) -> 'ScenarioSettings':
        """Settings with one sweep axis set to an SI value"""
        name = SCENARIO_KEYS[axis][0]
        return replace(self, **{name: value})

    def to_dict(self) -> Dict[str, Any]:
        return {key: back(getattr(self, name)) for key, (name, _, back) in SCENARIO_KEYS.items()}


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: Tuple[float, ...]
    si_values: Tuple[float, ...]

    @classmethod
    def of(cls, axis: str, values: List[float]) -> 'SweepSpec':
        convert = SCENARIO_KEYS[axis][1]
        return cls(axis=axis, values=tuple(float(v) for v in values),
                   si_values=tuple(float(convert(v)) for v in values))

    def to_dict(self) -> Dict[str, Any]:
        return {'axis': self.axis, 'values': list(self.values)}


@dataclass(frozen=True)
class MonteCarloSettings:
    frames: int = 20_000
    seed: int = 1
    decision_model: str = 'energy'
    chunk_size: int = 10_000

    def to_dict(self) -> Dict[str, Any]:
        return {'frames': self.frames, 'seed': self.seed, 'decision_model': self.decision_model,
                'chunk_size': self.chunk_size}


@dataclass(frozen=True)
class FigureSettings:
    """Curve families and orientation averaging shared by the sweeps"""

    beamwidths: Tuple[float, ...] = tuple(math.radians(d) for d in (20.0, 25.0, 30.0))
    phi_sr_offsets: Tuple[float, ...] = tuple(math.radians(d) for d in (0.0, 10.0, 15.0))
    orientations: int = 64
    include_omni: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            'beamwidths_deg': [math.degrees(b) for b in self.beamwidths],
            'phi_sr_offsets_deg': [math.degrees(o) for o in self.phi_sr_offsets],
            'orientations': self.orientations,
            'include_omni': self.include_omni,
        }


@dataclass(frozen=True)
class OutputSettings:
    dir: str = 'results'
    format: str = 'csv'
    float_format: str = '%.10g'

    def to_dict(self) -> Dict[str, Any]:
        return {'dir': self.dir, 'format': self.format, 'float_format': self.float_format}


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioSettings = field(default_factory=ScenarioSettings)
    sweep: Optional[SweepSpec] = None
    mc: MonteCarloSettings = field(default_factory=MonteCarloSettings)
    search: SearchControl = field(default_factory=SearchControl)
    figures: FigureSettings = field(default_factory=FigureSettings)
    output: OutputSettings = field(default_factory=OutputSettings)

    @classmethod
    def load(cls, path: str) -> 'ExperimentConfig':
        """Read a JSON config file; errors carry the offending key and line"""
        try:
            with open(path, 'r', encoding='utf-8') as f:
                text = f.read()
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e.strerror}")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e.msg} at column {e.colno}", line=e.lineno)
        return cls.from_dict(data, text=text)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], text: Optional[str] = None) -> 'ExperimentConfig':
        reader = _Reader(text)
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        reader.reject_unknown(data, ('scenario', 'sweep', 'mc', 'search', 'figures', 'output'), '')

        scenario = reader.scenario(data.get('scenario', {}))
        sweep = reader.sweep(data['sweep']) if data.get('sweep') is not None else None
        if sweep is not None:
            reader.sweep_points(scenario, sweep)
        mc = reader.mc(data.get('mc', {}))
        search = reader.search(data.get('search', {}))
        figures = reader.figures(data.get('figures', {}))
        output = reader.output(data.get('output', {}))
        return cls(scenario=scenario, sweep=sweep, mc=mc, search=search, figures=figures, output=output)

    def sweep_for(self, kind: str) -> SweepSpec:
        """Configured sweep, or the default one for an experiment kind"""
        if self.sweep is not None:
            return self.sweep
        axis, values = DEFAULT_SWEEPS[kind]
        return SweepSpec.of(axis, values)

    def with_overrides(self, seed: Optional[int] = None, frames: Optional[int] = None,
                       out_dir: Optional[str] = None) -> 'ExperimentConfig':
        mc = self.mc
        if seed is not None:
            mc = replace(mc, seed=_check_seed(seed, 'seed'))
        if frames is not None:
            if frames < 1:
                raise ConfigError("frames must be >= 1", field='frames')
            mc = replace(mc, frames=frames)
        output = replace(self.output, dir=out_dir) if out_dir else self.output
        return replace(self, mc=mc, output=output)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'scenario': self.scenario.to_dict(),
            'sweep': self.sweep.to_dict() if self.sweep else None,
            'mc': self.mc.to_dict(),
            'search': {'zeta_points': self.search.zeta_points, 't_sense_points': self.search.t_sense_points,
                       'zeta_max_factor': self.search.zeta_max_factor, 'refine': self.search.refine},
            'figures': self.figures.to_dict(),
            'output': self.output.to_dict(),
        }


def env_overrides() -> Dict[str, Any]:
    """CRBEAM_SEED, CRBEAM_FRAMES and CRBEAM_OUT_DIR from the environment"""
    overrides = {}
    for name, key, cast in (('CRBEAM_SEED', 'seed', int), ('CRBEAM_FRAMES', 'frames', int),
                            ('CRBEAM_OUT_DIR', 'out_dir', str)):
        raw = os.getenv(name)
        if raw is None or raw == '':
            continue
        try:
            overrides[key] = cast(raw)
        except ValueError:
            raise ConfigError(f"environment variable {name} is not a valid {cast.__name__}: '{raw}'", field=name)
    return overrides


def _check_seed(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= MAX_SEED:
        raise ConfigError("seed must be an unsigned 64-bit integer", field=path)
    return value


class _Reader:
    """Section parsers sharing the source text for line lookup"""

    def __init__(self, text: Optional[str]):
        self.lines = text.splitlines() if text else []

    def line_of(self, key: str) -> Optional[int]:
        needle = f'"{key}"'
        for number, line in enumerate(self.lines, start=1):
            if needle in line:
                return number
        return None

    def fail(self, message: str, path: str):
        raise ConfigError(message, field=path, line=self.line_of(path.rsplit('.', 1)[-1].split('[')[0]))

    def reject_unknown(self, section: Any, allowed, prefix: str):
        if not isinstance(section, dict):
            self.fail("expected a JSON object", prefix or 'config')
        for key in section:
            if key not in allowed:
                self.fail(f"unknown key '{key}'", f"{prefix}.{key}" if prefix else key)

    def number(self, value: Any, path: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            self.fail(f"expected a finite number, got {value!r}", path)
        return float(value)

    def integer(self, value: Any, path: str, minimum: int = 1) -> int:
        if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
            self.fail(f"expected an integer >= {minimum}, got {value!r}", path)
        return value

    def choice(self, value: Any, options, path: str) -> str:
        if value not in options:
            self.fail(f"expected one of {options}, got {value!r}", path)
        return value

    def number_list(self, value: Any, path: str) -> List[float]:
        if not isinstance(value, list) or not value:
            self.fail("expected a non-empty list of numbers", path)
        return [self.number(v, f"{path}[{k}]") for k, v in enumerate(value)]

    def scenario(self, section: Dict[str, Any]) -> ScenarioSettings:
        self.reject_unknown(section, SCENARIO_KEYS, 'scenario')
        values = {}
        for key, raw in section.items():
            name, convert, _ = SCENARIO_KEYS[key]
            path = f"scenario.{key}"
            if key == 'aic_model':
                values[name] = self.choice(raw, AIC_MODELS, path)
            elif key == 'm_sectors':
                values[name] = self.integer(raw, path, minimum=2)
            else:
                number = self.number(raw, path)
                if key == 'f_s_khz' and number <= 0:
                    self.fail("sampling rate must be positive", path)
                self.level(key, number, path)
                values[name] = convert(number)
        try:
            return ScenarioSettings(**values)
        except ConfigError as e:
            self.fail(e.reason, e.field)

    def level(self, key: str, value: float, path: str):
        if key.endswith('_db') and not LEVEL_RANGE_DB[0] <= value <= LEVEL_RANGE_DB[1]:
            self.fail(f"expected a level in {LEVEL_RANGE_DB} dB, got {value!r}", path)

    def sweep(self, section: Dict[str, Any]) -> SweepSpec:
        self.reject_unknown(section, ('axis', 'values'), 'sweep')
        if 'axis' not in section or 'values' not in section:
            self.fail("sweep needs both 'axis' and 'values'", 'sweep')
        axis = self.choice(section['axis'], SWEEP_AXES, 'sweep.axis')
        values = self.number_list(section['values'], 'sweep.values')
        for k, value in enumerate(values):
            self.level(axis, value, f"sweep.values[{k}]")
        return SweepSpec.of(axis, values)

    def sweep_points(self, scenario: ScenarioSettings, sweep: SweepSpec):
        """Every sweep value must give a valid scenario"""
        for k, si in enumerate(sweep.si_values):
            try:
                scenario.at(sweep.axis, si)
            except ConfigError as e:
                self.fail(f"{e.reason} at sweep value {sweep.values[k]!r}", f"sweep.values[{k}]")

    def mc(self, section: Dict[str, Any]) -> MonteCarloSettings:
        self.reject_unknown(section, ('frames', 'seed', 'decision_model', 'chunk_size'), 'mc')
        defaults = MonteCarloSettings()
        return MonteCarloSettings(
            frames=self.integer(section.get('frames', defaults.frames), 'mc.frames'),
            seed=_check_seed(section.get('seed', defaults.seed), 'mc.seed'),
            decision_model=self.choice(section.get('decision_model', defaults.decision_model),
                                       DECISION_MODELS, 'mc.decision_model'),
            chunk_size=self.integer(section.get('chunk_size', defaults.chunk_size), 'mc.chunk_size'),
        )

    def search(self, section: Dict[str, Any]) -> SearchControl:
        self.reject_unknown(section, ('zeta_points', 't_sense_points', 'zeta_max_factor', 'refine'), 'search')
        defaults = SearchControl()
        refine = section.get('refine', defaults.refine)
        if not isinstance(refine, bool):
            self.fail("expected true or false", 'search.refine')
        factor = self.number(section.get('zeta_max_factor', defaults.zeta_max_factor), 'search.zeta_max_factor')
        if factor <= 0:
            self.fail("must be positive", 'search.zeta_max_factor')
        return SearchControl(
            zeta_points=self.integer(section.get('zeta_points', defaults.zeta_points), 'search.zeta_points', 2),
            t_sense_points=self.integer(section.get('t_sense_points', defaults.t_sense_points), 'search.t_sense_points'),
            zeta_max_factor=factor,
            refine=refine,
        )

    def figures(self, section: Dict[str, Any]) -> FigureSettings:
        self.reject_unknown(section, ('beamwidths_deg', 'phi_sr_offsets_deg', 'orientations', 'include_omni'),
                            'figures')
        defaults = FigureSettings()
        include_omni = section.get('include_omni', defaults.include_omni)
        if not isinstance(include_omni, bool):
            self.fail("expected true or false", 'figures.include_omni')
        beamwidths = defaults.beamwidths
        if 'beamwidths_deg' in section:
            beamwidths = tuple(math.radians(v) for v in self.number_list(section['beamwidths_deg'],
                                                                         'figures.beamwidths_deg'))
        offsets = defaults.phi_sr_offsets
        if 'phi_sr_offsets_deg' in section:
            offsets = tuple(math.radians(v) for v in self.number_list(section['phi_sr_offsets_deg'],
                                                                      'figures.phi_sr_offsets_deg'))
        return FigureSettings(
            beamwidths=beamwidths,
            phi_sr_offsets=offsets,
            orientations=self.integer(section.get('orientations', defaults.orientations), 'figures.orientations'),
            include_omni=include_omni,
        )

    def output(self, section: Dict[str, Any]) -> OutputSettings:
        self.reject_unknown(section, ('dir', 'format', 'float_format'), 'output')
        defaults = OutputSettings()
        directory = section.get('dir', defaults.dir)
        if not isinstance(directory, str) or not directory:
            self.fail("expected a directory path", 'output.dir')
        float_format = section.get('float_format', defaults.float_format)
        if not isinstance(float_format, str) or '%' not in float_format:
            self.fail("expected a printf-style float format such as '%.10g'", 'output.float_format')
        return OutputSettings(
            dir=directory,
            format=self.choice(section.get('format', defaults.format), OUTPUT_FORMATS, 'output.format'),
            float_format=float_format,
        )
