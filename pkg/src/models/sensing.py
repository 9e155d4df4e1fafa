"""
Frame timing and energy-detector value types
"""

from dataclasses import dataclass, asdict, replace
from typing import Any, Dict

from src.services.errors import DomainError


@dataclass(frozen=True)
class SensingConfig:
    """
    Frame timing (seconds) and sensing-phase signal parameters

    pi1 may be 0 to model a band without primary activity.
    """

    t_frame: float = 10e-3
    t_train: float = 0.5e-3
    t_sample: float = 1e-5
    t_sense: float = 1.28e-3
    p_pu: float = 0.2
    sigma_w2: float = 1.0
    gamma_pu: float = 1.0
    pi1: float = 0.4
    pd_target: float = 0.85

    def __post_init__(self):
        if not 0.0 < self.t_sense < self.t_frame - self.t_train:
            raise DomainError(
                f"t_sense must lie in (0, t_frame - t_train) = (0, {self.t_frame - self.t_train}), got {self.t_sense}")
        if not self.t_sample > 0.0:
            raise DomainError(f"t_sample must be positive, got {self.t_sample}")
        if not 0.0 <= self.pi1 < 1.0:
            raise DomainError(f"pi1 must lie in [0, 1), got {self.pi1}")
        if not 0.0 < self.pd_target < 1.0:
            raise DomainError(f"pd_target must lie in (0, 1), got {self.pd_target}")
        if self.p_pu < 0.0 or not self.sigma_w2 > 0.0 or not self.gamma_pu > 0.0:
            raise DomainError("p_pu must be >= 0 and sigma_w2, gamma_pu positive")

    @property
    def pi0(self) -> float:
        return 1.0 - self.pi1

    @property
    def data_fraction(self) -> float:
        """D_t, the share of the frame left for data"""
        return (self.t_frame - self.t_sense - self.t_train) / self.t_frame

    def with_sense_time(self, t_sense: float) -> 'SensingConfig':
        return replace(self, t_sense=t_sense)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class DetectorStats:
    """Moments of the energy statistic T and the resulting sensing outcome probabilities"""

    n_samples: int
    mu0: float
    mu1: float
    var_h0: float
    var_h1: float
    p_fa: float
    p_d: float
    pi_hat0: float
    pi_hat1: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
