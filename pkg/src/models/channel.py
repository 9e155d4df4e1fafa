"""
Correlated two-beam channel model and its series coefficients
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np
from scipy.special import logsumexp

from src.services.errors import DomainError


@dataclass(frozen=True)
class BeamChannelModel:
    """
    Gains nu_1, nu_2 of the two candidate beams

    Each gain is exponential with mean delta_m; rho is the correlation
    coefficient of the underlying complex amplitudes, so the gains have
    correlation rho^2.
    """

    delta1: float
    delta2: float
    rho: float = 0.5

    def __post_init__(self):
        if not (self.delta1 > 0.0 and self.delta2 > 0.0):
            raise DomainError(f"beam mean gains must be positive, got ({self.delta1}, {self.delta2})")
        if not 0.0 <= self.rho < 1.0:
            raise DomainError(f"rho must lie in [0, 1), got {self.rho}")

    @property
    def alpha1(self) -> float:
        return 1.0 / (self.delta1 * (1.0 - self.rho ** 2))

    @property
    def alpha2(self) -> float:
        return 1.0 / (self.delta2 * (1.0 - self.rho ** 2))

    @property
    def omega(self) -> float:
        return self.alpha1 + self.alpha2

    def swapped(self) -> 'BeamChannelModel':
        return BeamChannelModel(delta1=self.delta2, delta2=self.delta1, rho=self.rho)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'delta1': self.delta1,
            'delta2': self.delta2,
            'rho': self.rho,
            'alpha1': self.alpha1,
            'alpha2': self.alpha2,
            'omega': self.omega,
        }


@dataclass(frozen=True)
class SeriesCoefficients:
    """
    D_ij and E_ij on the triangle 0 <= i <= j <= j_max

    Arrays are indexed [i, j]; entries with i > j are zero. The logarithms are
    kept alongside so that sums can be formed without overflow.
    """

    j_max: int
    log_d: np.ndarray = field(repr=False)
    log_e_abs: np.ndarray = field(repr=False)

    @property
    def d_ij(self) -> np.ndarray:
        return np.exp(self.log_d)

    @property
    def e_ij(self) -> np.ndarray:
        # E_ij <= 0 on the triangle
        return -np.exp(self.log_e_abs)

    def orders(self) -> np.ndarray:
        """Matrix of i + j"""
        idx = np.arange(self.j_max + 1)
        return idx[:, None] + idx[None, :]

    def log_d_by_order(self) -> np.ndarray:
        """log of sum_{i+j=n, i<=j} D_ij for n = 0..2 j_max"""
        return _collapse_by_order(self.log_d, self.j_max)

    def log_e_by_order(self) -> np.ndarray:
        """log of sum_{i+j=n, i<=j} |E_ij| for n = 0..2 j_max"""
        return _collapse_by_order(self.log_e_abs, self.j_max)

    def to_dict(self) -> Dict[str, Any]:
        return {'j_max': self.j_max, 'd_00': float(math.exp(self.log_d[0, 0]))}


def _collapse_by_order(log_values: np.ndarray, j_max: int) -> np.ndarray:
    out = np.full(2 * j_max + 1, -np.inf)
    for n in range(2 * j_max + 1):
        i = np.arange(max(0, n - j_max), n // 2 + 1)
        vals = log_values[i, n - i]
        vals = vals[np.isfinite(vals)]
        if vals.size:
            out[n] = logsumexp(vals)
    return out
