from dataclasses import dataclass, asdict

from src.services.errors import DomainError


@dataclass(frozen=True)
class SeriesControl:
    """Truncation settings for every infinite series in the engine"""

    rel_tol: float = 1e-12
    max_terms: int = 500

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError(f"rel_tol must be positive, got {self.rel_tol}")
        if int(self.max_terms) < 1:
            raise DomainError(f"max_terms must be at least 1, got {self.max_terms}")

    def to_dict(self):
        return asdict(self)


DEFAULT_SERIES = SeriesControl()
