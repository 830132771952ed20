from core.exceptions.base import (
    WildgradException,
    ConfigException,
    ValidationException,
    ScenarioException,
    PreconditionException,
    DomainException,
    StageBoundException,
    ConstructionException,
    ExportException,
)

__all__ = [
    "WildgradException",
    "ConfigException",
    "ValidationException",
    "ScenarioException",
    "PreconditionException",
    "DomainException",
    "StageBoundException",
    "ConstructionException",
    "ExportException",
]
