"""
Scenario, policy and report types for the capacity and reliability engine
"""

import math
from dataclasses import dataclass, asdict, field, replace
from typing import Any, Dict, Optional

import pandas as pd

from src.models.channel import BeamChannelModel
from src.models.pattern import RadiationPattern
from src.models.sensing import SensingConfig
from src.services.errors import DomainError

AIC_MODELS = ('selection', 'conditional')


@dataclass(frozen=True)
class ScenarioParams:
    """
    One secondary link: sensing setup, antenna, beam gains, PU geometry and budgets

    aic_model picks the beam weights in the interference term: 'selection'
    uses Delta_1, Delta_2; 'conditional' uses the selection probabilities
    given that the link transmits (nu* >= zeta).
    """

    sensing: SensingConfig
    pattern: RadiationPattern
    beams: BeamChannelModel
    gamma_sp: float = 1.0
    phi_pu: float = 0.0
    phi_sr: float = 0.0
    i_bar: float = 1.0
    p_bar: float = 1.0
    aic_model: str = 'selection'

    def __post_init__(self):
        if not self.i_bar > 0.0:
            raise DomainError(f"i_bar must be positive, got {self.i_bar}")
        if not self.p_bar > 0.0:
            raise DomainError(f"p_bar must be positive, got {self.p_bar}")
        if not self.gamma_sp > 0.0:
            raise DomainError(f"gamma_sp must be positive, got {self.gamma_sp}")
        if self.aic_model not in AIC_MODELS:
            raise DomainError(f"aic_model must be one of {AIC_MODELS}, got '{self.aic_model}'")

    @property
    def sigma_p2(self) -> float:
        """Mean PU interference power at the SU receiver, P_p gamma_sp"""
        return self.sensing.p_pu * self.gamma_sp

    @property
    def m_sectors(self) -> int:
        return self.pattern.m_sectors

    def evolve(self, **changes) -> 'ScenarioParams':
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'sensing': self.sensing.to_dict(),
            'pattern': self.pattern.to_dict(),
            'beams': self.beams.to_dict(),
            'gamma_sp': self.gamma_sp,
            'phi_pu_deg': math.degrees(self.phi_pu),
            'phi_sr_deg': math.degrees(self.phi_sr),
            'i_bar': self.i_bar,
            'p_bar': self.p_bar,
            'sigma_p2': self.sigma_p2,
            'aic_model': self.aic_model,
        }


@dataclass(frozen=True)
class TransmissionPolicy:
    """Truncated constant-power policy with every quantity derived from it"""

    phi_power: float
    zeta: float
    t_sense: float
    d_t: float
    alpha0: float
    beta0: float
    b0: float
    pi_hat0: float
    p_fa: float
    snr0: float
    snr1: float
    outage: float
    n_samples: int

    def __post_init__(self):
        if self.phi_power < 0.0 or self.zeta < 0.0:
            raise DomainError(f"policy needs phi >= 0 and zeta >= 0, got ({self.phi_power}, {self.zeta})")
        if not 0.0 < self.d_t < 1.0:
            raise DomainError(f"data fraction must lie in (0, 1), got {self.d_t}")

    @property
    def transmit_probability(self) -> float:
        return 1.0 - self.outage

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['t_sense_ms'] = self.t_sense * 1e3
        return data


@dataclass(frozen=True)
class CapacityReport:
    c_lb: float
    apc_slack: float
    aic_slack: float
    active_constraint: str
    method: str = 'closed_form'
    j_max: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class ModulationSpec:
    """Q(sqrt(psi * SNR)) abstraction of a modulation's symbol error rate"""

    psi: float = 4.0

    def __post_init__(self):
        if not self.psi > 0.0:
            raise DomainError(f"psi must be positive, got {self.psi}")


@dataclass(frozen=True)
class SepReport:
    """
    Symbol error probability

    unconditioned averages over every frame (silent frames contribute 0);
    conditioned divides by the probability that the frame carries data.
    """

    unconditioned: float
    conditioned: float
    method: str
    j_max: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class SearchControl:
    """Grid and refinement settings of the (zeta, T_sen) search"""

    zeta_points: int = 20
    t_sense_points: int = 20
    zeta_max_factor: float = 10.0
    refine: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.zeta_points < 2 or self.t_sense_points < 1:
            raise DomainError("search grid needs >= 2 zeta points and >= 1 sensing time")
        if not self.zeta_max_factor > 0.0:
            raise DomainError("zeta_max_factor must be positive")
        if self.workers < 1:
            raise DomainError("workers must be >= 1")


@dataclass
class OptimizationResult:
    policy: TransmissionPolicy
    report: CapacityReport
    grid: pd.DataFrame = field(repr=False)
    zeta_at_edge: bool = False
    t_sense_at_edge: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            'policy': self.policy.to_dict(),
            'report': self.report.to_dict(),
            'zeta_at_edge': self.zeta_at_edge,
            't_sense_at_edge': self.t_sense_at_edge,
            'grid_points': int(len(self.grid)),
        }
