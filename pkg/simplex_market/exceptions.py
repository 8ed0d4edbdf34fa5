from typing import Any, Dict, Optional


class SimplexMarketError(Exception):
    """Base class of all errors raised by the package.

    Every error carries a machine readable ``kind`` and optional ``details`` which the
    command line interface serializes to JSON on stderr.
    """

    exit_code = 2

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    @property
    def kind(self) -> str:
        return type(self).__name__

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.kind, "message": self.message, "details": self.details}


# exit code 1
class ValidationError(SimplexMarketError):
    exit_code = 1


class ParameterValidationError(ValidationError):
    def __init__(self, report):
        super().__init__(
            f"{len(report.violations)} admissibility condition(s) violated",
            {"violations": [v.to_dict() for v in report.violations]},
        )
        self.report = report


class HypothesisError(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class DegreeCapError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


# exit code 2
class NumericalError(SimplexMarketError):
    exit_code = 2


class NonFiniteError(NumericalError):
    pass


class PseudoInverseResidualError(NumericalError):
    pass


class RankDeficientError(NumericalError):
    pass


# exit code 3
class DataIOError(SimplexMarketError):
    exit_code = 3
