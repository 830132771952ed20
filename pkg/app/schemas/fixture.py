from typing import Optional

from pydantic import Field, field_validator, model_validator

from app.schemas.base import InputSchema


class KappaEntry(InputSchema):
    """κ_i(ρ) = constant + ⟨slope, ρ⟩ with ρ flattened as (first, second)."""

    constant: float
    slope: list[float] = Field(default_factory=list)


class GammaEntry(InputSchema):
    """
    γ_i(ρ) = (p(ρ) ⊗ a, B(ρ)) with p(ρ) = p + p_slope·ρ and B(ρ) = B + Σ_l ρ_l·B_slope[l].

    Slopes are optional; a missing slope means γ_i does not depend on ρ.
    """

    p: list[float] = Field(..., min_length=1)
    a: list[float] = Field(..., min_length=1)
    B: list[list[float]] = Field(..., min_length=1)
    p_slope: Optional[list[list[float]]] = None
    B_slope: Optional[list[list[list[float]]]] = None


class SigmaTable(InputSchema):
    """Piecewise-affine σ(t) = slopes[k]·t + intercepts[k] on the k-th interval between breakpoints."""

    breakpoints: list[float] = Field(default_factory=list)
    slopes: list[float] = Field(..., min_length=1)
    intercepts: list[float] = Field(..., min_length=1)

    @field_validator("breakpoints")
    @classmethod
    def validate_breakpoints(cls, v):
        if any(later <= earlier for earlier, later in zip(v, v[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        return v

    @model_validator(mode="after")
    def validate_pieces(self):
        pieces = len(self.breakpoints) + 1
        if len(self.slopes) != pieces or len(self.intercepts) != pieces:
            raise ValueError(f"{len(self.breakpoints)} breakpoints need {pieces} slopes and intercepts")
        return self


class ScenarioFixture(InputSchema):
    """
    Scenario document.

    σ acts entrywise through the piecewise table; without a table it is read
    off the corner patches of the configuration family.
    """

    name: str = Field(..., min_length=1)
    m: int = Field(..., ge=1)
    n: int = Field(..., ge=1)
    N: int = Field(..., ge=2)
    r0: float = Field(..., gt=0)
    delta1: float = Field(..., gt=0, lt=1)
    delta2: float = Field(..., gt=0, lt=1)
    kappas: list[KappaEntry]
    gammas: list[GammaEntry]
    sigma: Optional[SigmaTable] = None
    graph_tol: Optional[float] = Field(None, gt=0, le=1e-4)

    @model_validator(mode="after")
    def validate_tables(self):
        if self.delta1 > self.delta2:
            raise ValueError("delta1 must not exceed delta2")
        if len(self.kappas) != self.N or len(self.gammas) != self.N:
            raise ValueError(f"Need N = {self.N} kappa and gamma entries")
        rho_dim = 2 * self.m * self.n
        for index, kappa in enumerate(self.kappas, start=1):
            if kappa.slope and len(kappa.slope) != rho_dim:
                raise ValueError(f"kappa {index} slope needs {rho_dim} entries")
        for index, gamma in enumerate(self.gammas, start=1):
            if len(gamma.p) != self.m or len(gamma.a) != self.n:
                raise ValueError(f"gamma {index} needs p of length {self.m} and a of length {self.n}")
            if len(gamma.B) != self.m or any(len(row) != self.n for row in gamma.B):
                raise ValueError(f"gamma {index} needs an {self.m}×{self.n} B")
            if gamma.p_slope is not None and (
                len(gamma.p_slope) != self.m or any(len(row) != rho_dim for row in gamma.p_slope)
            ):
                raise ValueError(f"gamma {index} p_slope must be {self.m}×{rho_dim}")
            if gamma.B_slope is not None and (
                len(gamma.B_slope) != rho_dim
                or any(len(B) != self.m or any(len(row) != self.n for row in B) for B in gamma.B_slope)
            ):
                raise ValueError(f"gamma {index} B_slope needs {rho_dim} matrices of shape {self.m}×{self.n}")
        return self


class PairSpec(InputSchema):
    first: list[list[float]] = Field(..., min_length=1)
    second: list[list[float]] = Field(..., min_length=1)


class WaveSpec(InputSchema):
    p: list[float] = Field(..., min_length=1)
    a: list[float] = Field(..., min_length=1)
    B: list[list[float]] = Field(..., min_length=1)


class TNFixture(InputSchema):
    """A T_N configuration as arrays: ρ, the jumps γ_i and the factors κ_i."""

    rho: PairSpec
    gammas: list[WaveSpec] = Field(..., min_length=2)
    kappas: list[float] = Field(..., min_length=2)

    @model_validator(mode="after")
    def validate_lengths(self):
        if len(self.gammas) != len(self.kappas):
            raise ValueError(f"{len(self.gammas)} gammas but {len(self.kappas)} kappas")
        return self
