from app.schemas.base import BaseSchema, InputSchema
from app.schemas.config import BaseSpec, BoxSpec, ExportSpec, RunConfig
from app.schemas.fixture import (
    GammaEntry,
    KappaEntry,
    PairSpec,
    ScenarioFixture,
    SigmaTable,
    TNFixture,
    WaveSpec,
)
from app.schemas.report import (
    BoundRow,
    CubeRecord,
    PersistenceRow,
    ProbeRow,
    RegionMeasureTable,
    RunReport,
    StageReport,
    ValidationReport,
    WildnessReport,
)

__all__ = [
    "BaseSchema",
    "InputSchema",
    # Run configuration
    "RunConfig",
    "BoxSpec",
    "BaseSpec",
    "ExportSpec",
    # Fixtures
    "ScenarioFixture",
    "KappaEntry",
    "GammaEntry",
    "SigmaTable",
    "TNFixture",
    "PairSpec",
    "WaveSpec",
    # Reports
    "BoundRow",
    "ValidationReport",
    "CubeRecord",
    "StageReport",
    "PersistenceRow",
    "ProbeRow",
    "WildnessReport",
    "RunReport",
    "RegionMeasureTable",
]
