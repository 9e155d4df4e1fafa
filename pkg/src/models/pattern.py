"""
Sector beampattern of the reconfigurable antenna and its overlap integrals
"""

import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict

import numpy as np

from src.services.errors import DomainError


@dataclass(frozen=True)
class RadiationPattern:
    """
    M-sector Gaussian beampattern

    Sector m (1-based) points at kappa_m = 2*pi*(m-1)/M and has gain
    a1 + a0 * exp(-B * (wrap(phi - kappa_m) / phi_3db)^2), with a1 = L * a0 and
    B = ln 2. The omni pattern has gain 1 in every direction.
    """

    m_sectors: int
    phi_3db: float
    side_lobe_l: float
    a0: float
    omni: bool = False

    def __post_init__(self):
        if int(self.m_sectors) < 1:
            raise DomainError(f"m_sectors must be >= 1, got {self.m_sectors}")
        if self.omni:
            return
        if not 0.0 < self.phi_3db < math.pi:
            raise DomainError(f"phi_3db must lie in (0, pi) radians, got {self.phi_3db}")
        if not 0.0 < self.side_lobe_l < 1.0:
            raise DomainError(f"side_lobe_l must lie in (0, 1), got {self.side_lobe_l}")
        if not self.a0 > 0.0:
            raise DomainError(f"a0 must be positive, got {self.a0}")

    @classmethod
    def from_degrees(cls, m_sectors: int, phi_3db_deg: float, side_lobe_l: float = 0.01,
                     a0: float = 1.0) -> 'RadiationPattern':
        return cls(m_sectors=m_sectors, phi_3db=math.radians(phi_3db_deg),
                   side_lobe_l=side_lobe_l, a0=a0)

    @classmethod
    def omnidirectional(cls, m_sectors: int = 1) -> 'RadiationPattern':
        """Distinguished p == 1 baseline; shape parameters are placeholders"""
        return cls(m_sectors=m_sectors, phi_3db=math.pi / 2, side_lobe_l=0.0, a0=0.0, omni=True)

    @property
    def b_const(self) -> float:
        return math.log(2.0)

    @property
    def a1(self) -> float:
        return 1.0 if self.omni else self.side_lobe_l * self.a0

    def axis(self, m: int) -> float:
        """Boresight angle kappa_m of sector m (1-based)"""
        return 2.0 * math.pi * (m - 1) / self.m_sectors

    def scaled(self, factor: float) -> 'RadiationPattern':
        if self.omni:
            return self
        return replace(self, a0=self.a0 * factor)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'm_sectors': self.m_sectors,
            'phi_3db_deg': None if self.omni else math.degrees(self.phi_3db),
            'side_lobe_l': None if self.omni else self.side_lobe_l,
            'a0': None if self.omni else self.a0,
            'a1': self.a1,
            'omni': self.omni,
        }


@dataclass(frozen=True)
class PatternIntegrals:
    """E_A, E_B and the circulant matrix of E_mm' for one pattern"""

    e_a: float
    e_b: float
    e_cross: np.ndarray = field(repr=False)

    @property
    def cross_sum(self) -> float:
        return float(np.sum(self.e_cross))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'e_a': self.e_a,
            'e_b': self.e_b,
            'e_cross_first_row': [float(v) for v in self.e_cross[0]],
        }
