"""
Value types of the frame simulator: random streams, frame batches, moment
accumulators and the empirical report
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np

from src.services.errors import DomainError

MAX_SEED = 2 ** 64 - 1


@dataclass(frozen=True)
class RandomStream:
    """Counter-based (Philox) stream identified by (seed, stream_id)"""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) <= MAX_SEED:
            raise DomainError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.stream_id < 0:
            raise DomainError(f"stream_id must be >= 0, got {self.stream_id}")

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(sequence))

    def child(self, offset: int) -> 'RandomStream':
        return RandomStream(seed=self.seed, stream_id=self.stream_id + offset)


@dataclass
class FrameSample:
    """A batch of simulated frames, one entry per frame"""

    pu_active: np.ndarray
    statistic: np.ndarray
    declared_idle: np.ndarray
    nu1: np.ndarray
    nu2: np.ndarray
    nu_star: np.ndarray
    beam: np.ndarray
    g_sp: np.ndarray
    power: np.ndarray
    rate: np.ndarray
    rate_lb: np.ndarray
    interference: np.ndarray
    sep: np.ndarray


@dataclass
class Moments:
    """
    Power sums of (x - ref) up to order four

    A fixed reference keeps the sums well conditioned; merging is plain
    addition, so shards combine exactly.
    """

    ref: float = 0.0
    n: int = 0
    s1: float = 0.0
    s2: float = 0.0
    s3: float = 0.0
    s4: float = 0.0

    @classmethod
    def of(cls, values: np.ndarray, ref: float = 0.0) -> 'Moments':
        d = np.asarray(values, dtype=float) - ref
        d2 = d * d
        return cls(ref=ref, n=int(d.size), s1=float(np.sum(d)), s2=float(np.sum(d2)),
                   s3=float(np.sum(d2 * d)), s4=float(np.sum(d2 * d2)))

    def merge(self, other: 'Moments') -> 'Moments':
        if other.ref != self.ref:
            raise DomainError("cannot merge moments taken about different references")
        return Moments(ref=self.ref, n=self.n + other.n, s1=self.s1 + other.s1, s2=self.s2 + other.s2,
                       s3=self.s3 + other.s3, s4=self.s4 + other.s4)

    @property
    def mean(self) -> float:
        return self.ref + self.s1 / self.n if self.n else math.nan

    @property
    def variance(self) -> float:
        """Unbiased sample variance"""
        if self.n < 2:
            return math.nan
        m1 = self.s1 / self.n
        return max(0.0, (self.s2 / self.n - m1 * m1) * self.n / (self.n - 1))

    def _central4(self) -> float:
        m1 = self.s1 / self.n
        e2, e3, e4 = self.s2 / self.n, self.s3 / self.n, self.s4 / self.n
        return e4 - 4 * m1 * e3 + 6 * m1 * m1 * e2 - 3 * m1 ** 4

    def mean_estimate(self) -> 'Estimate':
        if self.n < 2:
            return Estimate(value=self.mean, se=math.nan, n=self.n)
        return Estimate(value=self.mean, se=math.sqrt(self.variance / self.n), n=self.n)

    def variance_estimate(self) -> 'Estimate':
        """Sample variance with the large-sample standard error sqrt((mu4 - var^2)/n)"""
        if self.n < 2:
            return Estimate(value=math.nan, se=math.nan, n=self.n)
        var = self.variance
        se = math.sqrt(max(0.0, self._central4() - var * var) / self.n)
        return Estimate(value=var, se=se, n=self.n)


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float
    n: int

    def to_dict(self) -> Dict[str, Any]:
        return {'value': self.value, 'se': self.se, 'n': self.n}


@dataclass
class EmpiricalReport:
    """Empirical counterparts of every closed-form quantity"""

    n_frames: int
    seed: int
    decision_model: str
    estimates: Dict[str, Estimate] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Estimate:
        return self.estimates[name]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n_frames': self.n_frames,
            'seed': self.seed,
            'decision_model': self.decision_model,
            'estimates': {k: v.to_dict() for k, v in self.estimates.items()},
        }


@dataclass(frozen=True)
class Expectation:
    """A closed-form value to audit; relation is how empirical must compare to it"""

    quantity: str
    value: float
    relation: str = 'eq'
    slack: float = 0.0


@dataclass(frozen=True)
class AuditRow:
    quantity: str
    analytic: float
    empirical: float
    se: float
    relation: str
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            'quantity': self.quantity,
            'analytic': self.analytic,
            'empirical': self.empirical,
            'se': self.se,
            'relation': self.relation,
            'passed': self.passed,
        }
