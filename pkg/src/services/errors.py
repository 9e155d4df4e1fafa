"""
Error types shared by the analytic engine, the simulator and the outer surfaces
"""

from typing import Optional


class CRBeamError(Exception):
    """Base class for every error raised by the engine"""

    category = 'internal'
    exit_code = 1

    def to_dict(self):
        return {'error': self.category, 'message': str(self)}


class ConfigError(CRBeamError):
    """Invalid experiment configuration"""

    category = 'config'
    exit_code = 2

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.reason = message
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)

    def to_dict(self):
        data = super().to_dict()
        data['field'] = self.field
        data['line'] = self.line
        return data


class DomainError(CRBeamError, ValueError):
    """Argument outside the domain of an operation"""

    category = 'domain'
    exit_code = 2


class SeriesConvergenceError(CRBeamError, ArithmeticError):
    """A truncated series hit its term cap before reaching tolerance"""

    category = 'numerical'
    exit_code = 3

    def __init__(self, message: str, terms: Optional[int] = None):
        self.terms = terms
        super().__init__(message)


class QuadratureError(CRBeamError, ArithmeticError):
    category = 'numerical'
    exit_code = 3


class InfeasiblePolicyError(CRBeamError):
    """Constraints leave no usable transmit power"""

    category = 'numerical'
    exit_code = 3


class SensingModelError(CRBeamError):
    """Detector moments outside their valid range"""

    category = 'numerical'
    exit_code = 3


class AuditFailure(CRBeamError):
    """Closed form and simulation disagree beyond the acceptance rule"""

    category = 'audit'
    exit_code = 4
