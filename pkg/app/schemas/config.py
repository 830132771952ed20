from typing import Literal, Optional, Union

import numpy as np
from pydantic import Field, field_validator, model_validator

from app.models.field import AffineBase, Base, QuadraticBase
from app.models.geometry import Box, Domain, MatrixPair
from app.schemas.base import InputSchema


class BoxSpec(InputSchema):
    """One box of Ω: its center and a half width (scalar or per axis)."""

    center: list[float] = Field(..., min_length=1)
    radius: Union[float, list[float]]

    @field_validator("radius")
    @classmethod
    def validate_radius(cls, v):
        widths = v if isinstance(v, list) else [v]
        if not widths or any(width <= 0 for width in widths):
            raise ValueError("Half widths must be positive")
        return v

    @model_validator(mode="after")
    def validate_axes(self):
        if isinstance(self.radius, list) and len(self.radius) != len(self.center):
            raise ValueError(f"radius has {len(self.radius)} entries, center has {len(self.center)}")
        return self

    def to_box(self) -> Box:
        return Box(self.center, self.radius)


class BaseSpec(InputSchema):
    """
    Base pair: ū(x) = offset + gradient·y + ½ yᵀ·hessian·y and
    V̄ = flux + rotation·y with y = x − center.

    Without `hessian` and `rotation` the base is affine with constant V̄.
    """

    gradient: list[list[float]] = Field(..., min_length=1)
    flux: list[list[float]] = Field(..., min_length=1)
    offset: Optional[list[float]] = None
    hessian: Optional[list[list[list[float]]]] = None
    rotation: Optional[list[list[list[float]]]] = None
    center: Optional[list[float]] = None

    @model_validator(mode="after")
    def validate_shapes(self):
        rows = {len(row) for row in self.gradient} | {len(row) for row in self.flux}
        if len(rows) != 1 or len(self.gradient) != len(self.flux):
            raise ValueError("gradient and flux must be m×n matrices of one shape")
        if self.offset is not None and len(self.offset) != len(self.gradient):
            raise ValueError(f"offset needs {len(self.gradient)} entries")
        m, n = len(self.gradient), self.n
        for name, tensor in (("hessian", self.hessian), ("rotation", self.rotation)):
            if tensor is not None and np.shape(tensor) != (m, n, n):
                raise ValueError(f"{name} must be {m} blocks of {n}×{n}")
        if self.hessian is not None and not np.allclose(self.hessian, np.swapaxes(self.hessian, 1, 2)):
            raise ValueError("hessian blocks must be symmetric")
        if self.rotation is not None and not np.allclose(self.rotation, -np.swapaxes(self.rotation, 1, 2)):
            raise ValueError("rotation blocks must be antisymmetric")
        if self.center is not None and len(self.center) != n:
            raise ValueError(f"center needs {n} entries")
        return self

    @property
    def n(self) -> int:
        return len(self.gradient[0])

    @property
    def smooth(self) -> bool:
        return self.hessian is not None or self.rotation is not None

    def to_base(self) -> Base:
        m, n = len(self.gradient), self.n
        offset = [0.0] * m if self.offset is None else self.offset
        if not self.smooth:
            return AffineBase(
                np.asarray(offset, dtype=float),
                np.asarray(self.gradient, dtype=float),
                np.asarray(self.flux, dtype=float),
            )
        zero = np.zeros((m, n, n))
        return QuadraticBase.around(
            MatrixPair(self.gradient, self.flux),
            zero if self.hessian is None else self.hessian,
            zero if self.rotation is None else self.rotation,
            np.zeros(n) if self.center is None else self.center,
            offset,
        )


class ExportSpec(InputSchema):
    kind: Literal["field", "raster", "report"]
    path: str = Field(..., min_length=1)
    component: Optional[Literal["du_norm", "branch_label", "graph_gap"]] = None
    grid: Optional[int] = Field(None, ge=2)

    @model_validator(mode="after")
    def validate_kind(self):
        if self.kind == "raster" and self.component is None:
            raise ValueError("raster exports need a component")
        if self.kind != "raster" and self.component is not None:
            raise ValueError(f"{self.kind} exports take no component")
        return self


class RunConfig(InputSchema):
    """Validated run configuration with defaults filled."""

    scenario: str = Field("two-branch", min_length=1)
    omega: list[BoxSpec] = Field(default_factory=lambda: [BoxSpec(center=[0.5], radius=0.5)], min_length=1)
    base: Optional[BaseSpec] = None
    delta: float = 0.1
    K: int = Field(3, ge=0)
    seed: int = 42
    grid: int = Field(4, ge=2)
    mc_samples: int = Field(4096, ge=1)
    probes: int = Field(16, ge=1)
    quad_depth: int = Field(6, ge=0)
    export: list[ExportSpec] = Field(default_factory=list)

    @field_validator("delta")
    @classmethod
    def validate_delta(cls, v):
        if not 0.0 < v < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        return v

    @model_validator(mode="after")
    def validate_dimensions(self):
        dims = {len(box.center) for box in self.omega}
        if len(dims) != 1:
            raise ValueError("All domain boxes must share one dimension")
        if self.base is not None and self.base.n != dims.pop():
            raise ValueError("base gradient columns must match the domain dimension")
        return self

    @property
    def domain(self) -> Domain:
        return Domain(tuple(box.to_box() for box in self.omega))
