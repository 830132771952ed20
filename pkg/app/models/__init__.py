from app.models.block import BuildingBlock, PlateauRegion, Profile, SlabRegion, Tiling
from app.models.field import (
    AffineBase,
    Base,
    FieldNode,
    FieldTree,
    Leaf,
    Placement,
    QuadraticBase,
    RegionLabel,
    RegionTree,
)
from app.models.geometry import Box, Domain, MatrixPair, Segment, WaveVector
from app.models.scenario import Decomposition, Scenario
from app.models.tn_config import CoeffMatrix, TNConfig

__all__ = [
    # Geometry
    "MatrixPair",
    "WaveVector",
    "Box",
    "Domain",
    "Segment",
    # T_N configurations
    "TNConfig",
    "CoeffMatrix",
    # Scenario
    "Scenario",
    "Decomposition",
    # Building blocks
    "Profile",
    "Tiling",
    "SlabRegion",
    "PlateauRegion",
    "BuildingBlock",
    # Field trees
    "AffineBase",
    "QuadraticBase",
    "Base",
    "FieldNode",
    "FieldTree",
    "Leaf",
    "Placement",
    "RegionLabel",
    "RegionTree",
]
