"""
One stage of the construction: (Du, V) ∈ Σ^r(λ) becomes (Dũ, Ṽ) ∈ Σ^s(μ).

Two entry points share the bookkeeping. `run_stage` classifies a field on
a domain by grid cells and covers the cells by lattices of small boxes.
`run_stage_on_leaves` refines the constant-valued leaves of a field built by
earlier stages, where every value is known exactly.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.models.block import Tiling
from app.models.field import FieldNode, FieldTree, Placement, RegionTree
from app.models.geometry import Box, Domain, MatrixPair
from app.models.scenario import Decomposition, Scenario
from app.schemas.report import BoundRow, CubeRecord, StageReport
from app.services.block_service import cover_region
from app.services.field_service import attach, field_leaves, l1_deviation
from app.services.scenario_service import (
    classify_S,
    decompose_Sigma,
    pi_lower_bound,
    set_gaps,
    sigma_one_diameter,
)
from app.services.staircase_service import step_in_sigma
from core.config import config
from core.exceptions import DomainException, PreconditionException, StageBoundException
from core.logging import get_logger

logger = get_logger(__name__)

LIPSCHITZ_PAIRS = 10_000
LIPSCHITZ_SAFETY = 2.0
EPS_PRIME_SHRINK = 0.9
CLASSIFY_DEPTH = 3
PRECONDITION_SAMPLES = 64


@dataclass(frozen=True)
class StageParams:
    """Derived radii and tolerances of one stage."""

    lam: float
    mu: float
    r: float
    s: float
    eps: float
    d_prime: float
    d0: float
    eps_prime: float
    ell_prime: float
    lipschitz: float
    tau: float
    caps: dict = field(default_factory=dict)

    @property
    def cube_cap(self) -> float:
        """Cube radii stay below this."""
        return min(self.ell_prime, self.eps)


def _check_stage_inputs(s: Scenario, lam: float, mu: float, r: float, s_rad: float, eps: float):
    if not s.delta2 <= lam < mu < 1.0:
        raise DomainException(f"Need δ₂ ≤ λ < μ < 1, got λ = {lam}, μ = {mu}")
    if not 0.0 < r < s_rad <= s.r0 * (1.0 + 1e-12):
        raise DomainException(f"Need 0 < r < s ≤ r₀, got r = {r}, s = {s_rad}")
    if not 0.0 < eps < 1.0:
        raise DomainException(f"eps = {eps} is outside (0, 1)")


def _persistence_cap(s: Scenario, lam: float, mu: float) -> float:
    # largest ε′ with (1 − ε′)³[λ/μ + (1 − λ/μ)·floor] ≥ λ/μ
    ratio = lam / mu
    floor = pi_lower_bound(s, mu)
    return 1.0 - (ratio / (ratio + (1.0 - ratio) * floor)) ** (1.0 / 3.0)


def lipschitz_estimate(
    tree: FieldTree, G: Domain, pairs: int = LIPSCHITZ_PAIRS, seed: Optional[int] = None
) -> float:
    """Twice the largest difference quotient of x ↦ (Du, V)(x) over sampled nearby pairs in G."""
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    X = G.sample(rng, pairs)
    direction = rng.normal(size=X.shape)
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    lengths = 1e-3 * G.diameter * rng.random((pairs, 1))
    Y = X + direction * lengths
    inside = G.contains(Y)
    if not np.any(inside):
        return 0.0
    X, Y, lengths = X[inside], Y[inside], lengths[inside, 0]
    quotients = np.linalg.norm(tree.values(X) - tree.values(Y), axis=1) / lengths
    return LIPSCHITZ_SAFETY * float(np.max(quotients))


def stage_params(
    s: Scenario,
    tree: FieldTree,
    G: Domain,
    lam: float,
    mu: float,
    r: float,
    s_rad: float,
    eps: float,
    lipschitz: Optional[float] = None,
    tau: Optional[float] = None,
    seed: Optional[int] = None,
) -> StageParams:
    """
    ε′ = 0.9·min{d′/4, ε/2, 1 − 1/√2, persistence cap} and ℓ′ = min{d′/4, ε′}/L̂.

    L̂ is sampled from the field unless given; ℓ′ is capped at the diameter of G.
    The step tolerance τ is ε′, or the smaller `tau` when one is given.
    """
    _check_stage_inputs(s, lam, mu, r, s_rad, eps)
    seed = config.DEFAULT_SEED if seed is None else seed
    gaps = set_gaps(s, r, lam, mu, s_rad, seed=seed)
    caps = {
        "gap": gaps.d_prime / 4.0,
        "eps": eps / 2.0,
        "square": 1.0 - 1.0 / np.sqrt(2.0),
        "persistence": _persistence_cap(s, lam, mu),
    }
    eps_prime = EPS_PRIME_SHRINK * min(caps.values())
    slope = lipschitz_estimate(tree, G, seed=seed) if lipschitz is None else lipschitz
    reach = min(gaps.d_prime / 4.0, eps_prime)
    ell_prime = G.diameter if slope <= 0.0 else min(reach / slope, G.diameter)
    params = StageParams(
        lam, mu, r, s_rad, eps, gaps.d_prime, gaps.d0, eps_prime, ell_prime, slope,
        eps_prime if tau is None else min(eps_prime, tau),
        {name: float(value) for name, value in caps.items()},
    )
    logger.debug(
        f"Stage params λ = {lam:.4f} → μ = {mu:.4f}: d′ = {gaps.d_prime:.3e}, ε′ = {eps_prime:.3e}, "
        f"ℓ′ = {ell_prime:.3e}, L̂ = {slope:.3e}"
    )
    return params


# --------------------------------------------------------------------------
# Classification
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Cell:
    """A grid cell of G with its branch label (0 when not pinned to one S_k)."""

    box: Box
    label: int
    rho: Optional[MatrixPair] = None


@dataclass(frozen=True, eq=False)
class Classification:
    cells: tuple[Cell, ...]
    F0_measure: float
    deficit: float

    def labeled_measure(self, k: int) -> float:
        return float(sum(cell.box.volume for cell in self.cells if cell.label == k))


def _corners(box: Box) -> np.ndarray:
    return np.array(np.meshgrid(*zip(box.lo, box.hi), indexing="ij")).reshape(box.n, -1).T


def _label_cell(s: Scenario, tree: FieldTree, box: Box, r: float, lam: float, seed: int) -> Optional[Cell]:
    """The cell's label if its center and corners sit in one S_k^r(λ), else None."""
    m, n = tree.shape
    points = np.vstack([box.center[None, :], _corners(box)])
    values = tree.values(points)
    found = classify_S(s, r, lam, MatrixPair.from_flat(values[0], m, n), seed=seed)
    if found is None:
        return None
    k, rho = found
    for row in values[1:]:
        corner = classify_S(s, r, lam, MatrixPair.from_flat(row, m, n), seed=seed)
        if corner is None or corner[0] != k:
            return None
    return Cell(box, k, rho)


def classify_domain(
    s: Scenario,
    tree: FieldTree,
    G: Domain,
    r: float,
    lam: float,
    grid: int,
    depth: int = CLASSIFY_DEPTH,
    seed: Optional[int] = None,
) -> Classification:
    """
    Label grid cells of G by the branch S_k^r(λ) the field takes on them.

    A cell is labeled k when classify_S agrees on its center and corners;
    undecided cells are split dyadically up to `depth`. Cells left unlabeled
    at the last level carry label 0 and make up F₀.
    """
    if grid < 1:
        raise DomainException(f"Grid resolution must be positive, got {grid}")
    seed = config.DEFAULT_SEED if seed is None else seed
    cells: list[Cell] = []
    pending = [cell for box in G.boxes for cell in box.grid([grid] * box.n)]
    for level in range(depth + 1):
        undecided = []
        for box in pending:
            cell = _label_cell(s, tree, box, r, lam, seed)
            if cell is not None:
                cells.append(cell)
            elif level < depth:
                undecided.extend(box.subdivide())
            else:
                cells.append(Cell(box, 0))
        pending = undecided
        if not pending:
            break
    F0 = float(sum(cell.box.volume for cell in cells if cell.label == 0))
    logger.debug(f"Classified {len(cells)} cells, F₀ = {F0:.4e}")
    return Classification(tuple(cells), F0, F0 / G.volume)


# --------------------------------------------------------------------------
# Cube steps
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StageCube:
    """A step template and the number of congruent copies the stage placed."""

    node: FieldNode
    multiplicity: int
    box: Box
    label: int
    value: MatrixPair


def _lattice(box: Box, cap: float) -> Tiling:
    """Equal sub-boxes of `box` with half widths below cap."""
    counts = np.floor(box.radii / cap).astype(int) + 1
    radii = box.radii / counts
    base = Box(box.lo + radii, radii)
    return Tiling(base, 2.0 * radii, tuple(int(c) for c in counts))


def _witness(s: Scenario, r: float, lam: float, Y: MatrixPair, seed: int) -> Decomposition:
    """A q = 1 witness when Y sits in some S_k^r(λ), any Σ^r(λ) witness otherwise."""
    found = classify_S(s, r, lam, Y, seed=seed)
    if found is not None:
        k, rho = found
        return Decomposition(k, lam, 1.0, rho, rho, Y)
    dec = decompose_Sigma(s, r, lam, Y, seed=seed)
    if dec is None:
        raise PreconditionException(
            f"Field value {Y!r} does not lie in Σ^{r}({lam})", data={"value": Y.flat().tolist()}
        )
    return dec


class _StepBuilder:
    """Builds step templates once per (value, radii) and in parallel."""

    def __init__(self, s: Scenario, params: StageParams, tag: str, seed: int):
        self.s = s
        self.params = params
        self.tag = tag
        self.seed = seed
        self.jobs: dict[tuple, tuple[Decomposition, Box]] = {}

    def request(self, dec: Decomposition, box: Box) -> tuple:
        key = (dec.target.key(), tuple(np.round(box.radii, 15)))
        self.jobs.setdefault(key, (dec, box.centered()))
        return key

    def _build(self, job: tuple[Decomposition, Box]) -> FieldNode:
        dec, box = job
        p = self.params
        node, _ = step_in_sigma(
            self.s, dec, p.lam, p.mu, p.s, box, p.tau, tag=self.tag, seed=self.seed
        )
        return node

    def run(self) -> dict[tuple, FieldNode]:
        keys = list(self.jobs)
        with ThreadPoolExecutor(max_workers=config.WILDGRAD_THREADS) as pool:
            nodes = list(pool.map(self._build, [self.jobs[key] for key in keys]))
        logger.debug(f"Built {len(keys)} step templates")
        return dict(zip(keys, nodes))


def _check_precondition(s: Scenario, tree: FieldTree, G: Domain, r: float, lam: float, seed: int):
    rng = np.random.default_rng(seed)
    X = G.sample(rng, PRECONDITION_SAMPLES)
    m, n = tree.shape
    for x, row in zip(X, tree.values(X)):
        Y = MatrixPair.from_flat(row, m, n)
        if decompose_Sigma(s, r, lam, Y, seed=seed) is None:
            raise PreconditionException(
                f"(Du, V) at {x.tolist()} is not in Σ^{r}({lam})",
                data={"point": x.tolist(), "value": row.tolist()},
            )


def run_stage(
    s: Scenario,
    tree: FieldTree,
    G: Domain,
    lam: float,
    mu: float,
    r: float,
    s_rad: float,
    eps: float,
    grid: int = 4,
    stage: int = 1,
    strict: bool = True,
    seed: Optional[int] = None,
) -> tuple[FieldTree, StageReport]:
    """Apply one stage on G by classification and lattice covers."""
    result = apply_stage(s, tree, G, lam, mu, r, s_rad, eps, grid, stage, strict, seed=seed)
    return result.tree, result.report


@dataclass(frozen=True, eq=False)
class StageResult:
    tree: FieldTree
    report: StageReport
    cubes: tuple[StageCube, ...]
    params: StageParams
    renamed: dict = field(default_factory=dict)


def apply_stage(
    s: Scenario,
    tree: FieldTree,
    G: Domain,
    lam: float,
    mu: float,
    r: float,
    s_rad: float,
    eps: float,
    grid: int = 4,
    stage: int = 1,
    strict: bool = True,
    tau: Optional[float] = None,
    seed: Optional[int] = None,
) -> StageResult:
    seed = config.DEFAULT_SEED if seed is None else seed
    _check_stage_inputs(s, lam, mu, r, s_rad, eps)
    _check_precondition(s, tree, G, r, lam, seed)
    params = stage_params(s, tree, G, lam, mu, r, s_rad, eps, tau=tau, seed=seed)
    logger.info(f"Stage {stage}: λ = {lam:.4f} → μ = {mu:.4f} on |G| = {G.volume:.4g}")

    classification = classify_domain(s, tree, G, r, lam, grid, seed=seed)
    builder = _StepBuilder(s, params, f"stage{stage}", seed)
    m, n = tree.shape
    pending = []
    for cell in classification.cells:
        lattice = _lattice(cell.box, params.cube_cap)
        boxes = list(lattice.instances())
        values = tree.values(np.array([box.center for box in boxes]))
        Ys = [MatrixPair.from_flat(row, m, n) for row in values]
        if len({Y.key() for Y in Ys}) == 1:
            dec = _witness(s, r, lam, Ys[0], seed)
            pending.append((builder.request(dec, lattice.base), lattice, cell.label, Ys[0]))
        else:
            for box, Y in zip(boxes, Ys):
                dec = _witness(s, r, lam, Y, seed)
                pending.append((builder.request(dec, box), Tiling.single(box), cell.label, Y))

    templates = builder.run()
    placements = tuple(Placement(templates[key], tiling) for key, tiling, _, _ in pending)
    cubes = _merge_cubes(
        StageCube(templates[key], tiling.count, tiling.base, label, Y) for key, tiling, label, Y in pending
    )
    new_tree = tree.with_roots(placements)
    prior = {k: classification.labeled_measure(k) for k in range(1, s.N + 1)}
    report = _stage_report(
        s, new_tree, G, stage, "domain", params, cubes, prior, classification.F0_measure, G.volume, seed
    )
    _enforce(report, strict)
    return StageResult(new_tree, report, cubes, params)


def _merge_cubes(cubes) -> tuple[StageCube, ...]:
    merged: dict[int, StageCube] = {}
    for cube in cubes:
        known = merged.get(id(cube.node))
        if known is None:
            merged[id(cube.node)] = cube
        else:
            merged[id(cube.node)] = StageCube(
                cube.node, known.multiplicity + cube.multiplicity, known.box, known.label, known.value
            )
    return tuple(merged.values())


def run_stage_on_leaves(
    s: Scenario,
    tree: FieldTree,
    lam: float,
    mu: float,
    r: float,
    s_rad: float,
    eps: float,
    stage: int,
    strict: bool = True,
    tau: Optional[float] = None,
    seed: Optional[int] = None,
) -> StageResult:
    """
    Apply one stage to every labeled leaf of a field.

    Leaves hold exact constant values, so each is classified once and
    covered by step templates; leaf boxes wider than the cube cap get a
    container node that splits them into a lattice.
    """
    seed = config.DEFAULT_SEED if seed is None else seed
    _check_stage_inputs(s, lam, mu, r, s_rad, eps)
    leaves = field_leaves(tree)
    if not leaves:
        raise PreconditionException("Field has no labeled leaves to refine")
    params = stage_params(s, tree, tree.domain, lam, mu, r, s_rad, eps, lipschitz=0.0, tau=tau, seed=seed)
    cap = params.cube_cap
    G_measure = float(sum(leaf.measure for leaf in leaves))
    logger.info(f"Stage {stage}: λ = {lam:.4f} → μ = {mu:.4f} on {len(leaves)} leaf templates, |G| = {G_measure:.4g}")

    builder = _StepBuilder(s, params, f"stage{stage}", seed)
    prior = {k: 0.0 for k in range(1, s.N + 1)}
    F0 = 0.0
    pending = []
    for leaf in leaves:
        Y = leaf.label.value
        found = classify_S(s, r, lam, Y, seed=seed)
        if found is not None:
            prior[found[0]] += leaf.measure
            dec = Decomposition(found[0], lam, 1.0, found[1], found[1], Y)
        else:
            F0 += leaf.measure
            dec = _witness(s, r, lam, Y, seed)
        label = found[0] if found is not None else 0
        for tiling in cover_region(leaf.region, 1.0 - params.eps_prime):
            if tiling.base.radius < cap:
                pending.append((leaf, tiling, builder.request(dec, tiling.base), None, label, Y))
            else:
                lattice = _lattice(tiling.base.centered(), cap)
                pending.append((leaf, tiling, builder.request(dec, lattice.base), lattice, label, Y))

    templates = builder.run()
    patches: dict[tuple[int, int], tuple[Placement, ...]] = {}
    staged = []
    for leaf, tiling, key, lattice, label, Y in pending:
        step = templates[key]
        if lattice is None:
            placement = Placement(step, tiling, leaf.region.index)
            copies = tiling.count
            box = tiling.base
        else:
            container = FieldNode(tiling.base.centered(), Y, children=(Placement(step, lattice),), tag=f"stage{stage}")
            placement = Placement(container, tiling, leaf.region.index)
            copies = tiling.count * lattice.count
            box = lattice.base
        patches[leaf.key] = patches.get(leaf.key, ()) + (placement,)
        staged.append(StageCube(step, leaf.copies * copies, box, label, Y))
    new_tree, renamed = attach(tree, patches)
    cubes = _merge_cubes(staged)
    report = _stage_report(s, new_tree, tree.domain, stage, "leaves", params, cubes, prior, F0, G_measure, seed)
    _enforce(report, strict)
    return StageResult(new_tree, report, cubes, params, renamed)


# --------------------------------------------------------------------------
# Bounds
# --------------------------------------------------------------------------



def _stage_report(
    s: Scenario,
    tree: FieldTree,
    G: Domain,
    stage: int,
    region: str,
    params: StageParams,
    cubes: tuple[StageCube, ...],
    prior: dict[int, float],
    F0: float,
    G_measure: float,
    seed: int,
) -> StageReport:
    p = params
    rows = [BoundRow.check("a_cube_radius", max(cube.box.radius for cube in cubes), p.cube_cap, "<", "exact")]

    rng = np.random.default_rng(seed + stage)
    X = G.sample(rng, config.VERIFY_SAMPLES)
    m, n = tree.shape
    members = sum(
        decompose_Sigma(s, p.s, p.mu, MatrixPair.from_flat(row, m, n), seed=seed) is not None
        for row in tree.values(X)
    )
    rows.append(BoundRow.check("b_sigma_membership", members / len(X), 1.0, ">=", "sampled"))
    rows.append(BoundRow.check("c_sup_phi", max(cube.node.sup_phi_bound for cube in cubes), p.eps, "<", "analytic"))

    fractions = []
    corner_totals = {k: 0.0 for k in range(1, s.N + 1)}
    l1_total = 0.0
    for cube in cubes:
        regions = RegionTree(cube.node.box, cube.node)
        pinned = sum(regions.measure(k) for k in corner_totals)
        fractions.append(pinned / cube.node.box.volume)
        for k in corner_totals:
            corner_totals[k] += cube.multiplicity * regions.measure(k)
        l1_total += cube.multiplicity * l1_deviation(cube.node, cube.value, p.eps_prime)
    rows.append(BoundRow.check("d_cube_pinned_fraction", min(fractions), 1.0 - p.eps, ">=", "exact"))
    pinned_total = sum(corner_totals.values())
    rows.append(BoundRow.check("e_pinned_measure", pinned_total, (1.0 - p.eps) * G_measure, ">=", "exact"))

    floor = 0.5 * (p.mu - p.lam) * pi_lower_bound(s, p.mu) * G_measure
    for k, total in corner_totals.items():
        rows.append(BoundRow.check(f"f_branch_{k}_measure", total, floor, ">=", "exact"))
        rows.append(
            BoundRow.check(f"f_branch_{k}_persistence", total, (p.lam / p.mu) * prior[k], ">=", "exact")
        )

    diameter = sigma_one_diameter(s, seed=seed)
    budget = F0 + (p.eps + p.mu - p.lam) * G_measure
    ratio = l1_total / budget if budget > 0.0 else 0.0
    rows.append(
        BoundRow.check("g_l1_deviation", l1_total, diameter * budget, "<=", "analytic", detail=f"C0 = {diameter:.6g}")
    )

    records = [
        CubeRecord(
            center=cube.box.center.tolist(), radii=cube.box.radii.tolist(), multiplicity=cube.multiplicity, label=cube.label
        )
        for cube in cubes
    ]
    return StageReport(
        stage=stage,
        region=region,
        lam=p.lam,
        mu=p.mu,
        r=p.r,
        s=p.s,
        eps=p.eps,
        eps_prime=p.eps_prime,
        tau=p.tau,
        d_prime=p.d_prime,
        ell_prime=p.ell_prime,
        cubes=records,
        cube_count=int(sum(cube.multiplicity for cube in cubes)),
        C0_estimate=max(diameter, ratio),
        F0_measure=F0,
        G_measure=G_measure,
        measures=rows,
    )


def _enforce(report: StageReport, strict: bool):
    failures = [row for row in report.measures if not row.passed]
    for row in failures:
        logger.warning(
            f"Stage {report.stage} bound {row.name}: achieved {row.achieved:.6g}, required {row.relation} {row.required:.6g}"
        )
    if failures and strict:
        raise StageBoundException(
            f"Stage {report.stage} failed {', '.join(row.name for row in failures)}",
            data={"stage": report.stage, "failures": [row.model_dump() for row in failures]},
        )
