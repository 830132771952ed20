from typing import Any, Dict, Optional


class WildgradException(Exception):
    """Base exception class for all engine errors."""

    exit_code: int = 1
    error_code: str = "INTERNAL_ERROR"
    message: str = "An unexpected error occurred"
    data: Optional[Dict[str, Any]] = None

    def __init__(
        self,
        message: str = None,
        exit_code: int = None,
        error_code: str = None,
        data: Dict[str, Any] = None
    ):
        self.message = message or self.message
        self.exit_code = exit_code or self.exit_code
        self.error_code = error_code or self.error_code
        self.data = data or {}
        super().__init__(self.message)

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(exit_code={self.exit_code}, error_code={self.error_code}, message={self.message})"


class ConfigException(WildgradException):
    """Exception for unreadable or invalid run configuration (exit 2)."""

    exit_code = 2
    error_code = "CONFIG_ERROR"
    message = "Invalid configuration"


class ValidationException(WildgradException):
    """Exception for value objects violating their invariants (exit 2)."""

    exit_code = 2
    error_code = "VALIDATION_ERROR"
    message = "Validation error"


class ScenarioException(WildgradException):
    """Exception for scenarios failing their validation checks (exit 3)."""

    exit_code = 3
    error_code = "SCENARIO_INVALID"
    message = "Scenario rejected"


class PreconditionException(WildgradException):
    """Exception for inputs outside an operation's hypotheses (exit 4)."""

    exit_code = 4
    error_code = "PRECONDITION_FAILED"
    message = "Precondition failed"


class DomainException(WildgradException):
    """Exception for arguments outside a formula's domain (exit 4)."""

    exit_code = 4
    error_code = "DOMAIN_ERROR"
    message = "Argument outside domain"


class StageBoundException(WildgradException):
    """Exception for a stage bound that failed verification (exit 5)."""

    exit_code = 5
    error_code = "STAGE_BOUND_FAILED"
    message = "Stage bound failed"


class ConstructionException(WildgradException):
    """Exception for a construction that could not be completed (exit 5)."""

    exit_code = 5
    error_code = "CONSTRUCTION_FAILED"
    message = "Construction failed"


class ExportException(WildgradException):
    """Exception for export targets that cannot be written (exit 6)."""

    exit_code = 6
    error_code = "EXPORT_FAILED"
    message = "Export failed"
