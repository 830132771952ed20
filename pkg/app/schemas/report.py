"""Report schemas: every checked quantity is paired with its bound and a verdict."""

from typing import Literal, Optional

from pydantic import Field, computed_field

from app.schemas.base import BaseSchema

Relation = Literal[">=", "<=", ">", "<"]
Method = Literal["exact", "analytic", "sampled", "mc"]

_COMPARE = {
    ">=": lambda achieved, required: achieved >= required,
    "<=": lambda achieved, required: achieved <= required,
    ">": lambda achieved, required: achieved > required,
    "<": lambda achieved, required: achieved < required,
}


class BoundRow(BaseSchema):
    """One verified inequality."""

    name: str
    achieved: float
    required: float
    relation: Relation = ">="
    method: Method = "exact"
    passed: bool
    half_width: Optional[float] = Field(default=None, description="99% half-width for mc rows")
    detail: Optional[str] = None

    @classmethod
    def check(
        cls,
        name: str,
        achieved: float,
        required: float,
        relation: Relation = ">=",
        method: Method = "exact",
        half_width: Optional[float] = None,
        detail: Optional[str] = None,
    ) -> "BoundRow":
        passed = bool(_COMPARE[relation](float(achieved), float(required)))
        return cls(
            name=name,
            achieved=float(achieved),
            required=float(required),
            relation=relation,
            method=method,
            passed=passed,
            half_width=half_width,
            detail=detail,
        )


class ValidationReport(BaseSchema):
    """Itemized scenario checks."""

    scenario: str
    samples: int
    seed: int
    checks: list[BoundRow]

    @computed_field
    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.checks)

    @property
    def failures(self) -> list[BoundRow]:
        return [row for row in self.checks if not row.passed]


class CubeRecord(BaseSchema):
    """A cube of a stage cover, with the number of congruent copies it stands for."""

    center: list[float]
    radii: list[float]
    multiplicity: int = 1
    label: int = 0


class StageReport(BaseSchema):
    """Bounds (a)–(g) of one stage application on one region G."""

    stage: int
    region: str
    multiplicity: int = 1
    lam: float
    mu: float
    r: float
    s: float
    eps: float
    eps_prime: float
    tau: float
    d_prime: float
    ell_prime: float
    cubes: list[CubeRecord]
    cube_count: int
    C0_estimate: float
    F0_measure: float
    G_measure: float
    measures: list[BoundRow]

    @computed_field
    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.measures)


class PersistenceRow(BaseSchema):
    """Measure persistence of branch k inside a stage-q cube up to stage p."""

    q: int
    p: int
    cube: int
    k: int
    cube_measure: float
    bound: BoundRow
    mc_estimate: Optional[float] = None
    mc_half_width: Optional[float] = None
    mc_consistent: bool = Field(True, description="Sampled measure agrees with the exact one")


class ProbeRow(BaseSchema):
    center: list[float]
    radius: float
    oscillation: float
    passed: bool
    scale_limited: bool = False


class WildnessReport(BaseSchema):
    probes: list[ProbeRow]
    d0: float
    pass_fraction: float


class RunReport(BaseSchema):
    """End-to-end report of a construction run."""

    scenario: str
    K: int
    delta: float
    seed: int
    lambdas: list[float]
    radii: list[float]
    eps: list[float]
    stages: list[StageReport]
    rows: list[BoundRow]
    graph_l1: list[float]
    persistence: list[PersistenceRow]
    wildness: Optional[WildnessReport] = None

    @computed_field
    @property
    def passed(self) -> bool:
        stage_ok = all(stage.passed for stage in self.stages)
        persistence_ok = all(row.bound.passed and row.mc_consistent for row in self.persistence)
        return stage_ok and persistence_ok and all(row.passed for row in self.rows)

    def failures(self) -> list[str]:
        names = [f"stage {stage.stage} {stage.region}: {row.name}" for stage in self.stages for row in stage.measures if not row.passed]
        names += [row.name for row in self.rows if not row.passed]
        names += [
            f"persistence q={row.q} p={row.p} cube={row.cube} k={row.k}"
            for row in self.persistence
            if not row.bound.passed
        ]
        names += [
            f"persistence sampled q={row.q} p={row.p} cube={row.cube} k={row.k}"
            for row in self.persistence
            if not row.mc_consistent
        ]
        return names


class RegionMeasureTable(BaseSchema):
    """Exact pinned measures of a region tree, from template multiplicities."""

    box_volume: float
    corners: dict[int, float]
    unpinned: float = Field(description="Constant leaves that sit at no corner")
    free: float = Field(description="Volume outside every labeled leaf")
    leaf_count: int
