"""
Staircases of building blocks.

`oscillate_to_corners` drives a point of [ξ_i, π_i] to the corners of a T_N
configuration: one split block sends it to ξ_i and π_i, then ℓ rounds of N
walk blocks send each anchor π_{k+1} to ξ_k and π_k. `step_in_sigma` pushes a
Σ^r(λ) point into Σ^r(μ) with one split block and two such staircases.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.models.field import FieldNode, Placement, RegionLabel, RegionTree
from app.models.geometry import Box, MatrixPair, WaveVector
from app.models.scenario import Decomposition, Scenario
from app.models.tn_config import TNConfig
from app.schemas.report import BoundRow
from app.services.block_service import cover_region, make_block
from app.services.scenario_service import config_at, decompose_Sigma, witness_residual
from app.services.tn_service import corner_weights, scaled_tn, tn_distances
from core.config import config
from core.exceptions import ConstructionException, DomainException, PreconditionException
from core.logging import get_logger

logger = get_logger(__name__)

# Blocks inside staircases audit fewer points than standalone blocks
STAIRCASE_AUDIT = 64


@dataclass(frozen=True)
class StaircasePlan:
    """Round count and per-block tolerance of one corner staircase."""

    cfg: TNConfig
    i: int
    lam: float
    delta: float
    ell: int
    eps_inner: float
    tau: float

    @property
    def block_count(self) -> int:
        return 1 + self.cfg.N * self.ell


def plan_staircase(cfg: TNConfig, i: int, lam: float, delta: float) -> StaircasePlan:
    """
    Smallest ℓ with 1 − τ^ℓ ≥ √(1 − δ), then the largest dyadic eps with
    (1 + Nℓ)·eps < δ and (1 − eps)^{2(1+Nℓ)} ≥ √(1 − δ); every block and
    every cover loses at most a factor 1 − eps of the measure it passes on.
    """
    if not 0.0 < delta < 1.0:
        raise DomainException(f"δ = {delta} is outside (0, 1)")
    if not 0.0 <= lam <= 1.0:
        raise DomainException(f"λ = {lam} is outside [0, 1]")
    tau = float(np.prod(1.0 - cfg.chis))
    target = np.sqrt(1.0 - delta)
    ell = 1
    while 1.0 - tau**ell < target:
        ell += 1
    blocks = 1 + cfg.N * ell
    eps = 0.5
    while not (blocks * eps < delta and (1.0 - eps) ** (2 * blocks) >= target):
        eps /= 2.0
    return StaircasePlan(cfg, i, lam, delta, ell, eps, tau)


def _shape_key(box: Box) -> tuple[float, ...]:
    # relative rounding; nested boxes get far smaller than any fixed decimal
    return tuple(float(f"{radius:.12e}") for radius in box.radii)


@dataclass(frozen=True)
class _Step:
    gamma: WaveVector
    lam: float
    corner: int
    entry: MatrixPair


def _steps(plan: StaircasePlan) -> list[_Step]:
    """Split block first (unless λ ∈ {0, 1}), then the walk k = i − 1, i − 2, …"""
    cfg, i, lam = plan.cfg, plan.i, plan.lam
    steps = []
    if lam > 0.0:
        steps.append(_Step(cfg.gamma(i).scaled(cfg.kappa(i)), lam, i, cfg.point(i, lam)))
    if lam < 1.0:
        for s in range(1, cfg.N * plan.ell + 1):
            k = i - s
            steps.append(_Step(cfg.gamma(k).scaled(cfg.kappa(k)), cfg.chi(k), cfg.index(k) + 1, cfg.pi(k + 1)))
    return steps


def _build(
    steps: list[_Step], position: int, box: Box, eps: float, tag: str, lam_pin: Optional[float],
    seed: int, memo: dict,
) -> FieldNode:
    key = (position, _shape_key(box))
    if key in memo:
        return memo[key]
    step = steps[position]
    block = make_block(step.gamma, step.lam, box, eps, audit_samples=STAIRCASE_AUDIT, seed=seed + position)
    top, bottom = block.regions
    top_label = RegionLabel(step.entry + top.offset, step.corner, tag, lam_pin)
    last = position == len(steps) - 1
    # a λ = 1 split leaves nothing to walk from
    stops = last or step.lam == 1.0
    bottom_label = RegionLabel(step.entry + bottom.offset, 0, tag, lam_pin) if stops else None
    children = ()
    if not stops and bottom.measure > 0.0:
        placements = []
        # near-cubic pieces keep the next cutoff slope independent of the stripe width
        for tiling in cover_region(bottom, 1.0 - eps):
            child = _build(steps, position + 1, tiling.base.centered(), eps, tag, lam_pin, seed, memo)
            placements.append(Placement(child, tiling, bottom.index))
        children = tuple(placements)
    node = FieldNode(box, step.entry, block, (top_label, bottom_label), children, tag)
    memo[key] = node
    return node


def oscillate_to_corners(
    cfg: TNConfig,
    i: int,
    lam: float,
    box: Box,
    delta: float,
    tag: str = "",
    lam_pin: Optional[float] = None,
    seed: Optional[int] = None,
    verify: bool = True,
) -> tuple[FieldNode, RegionTree]:
    """
    Staircase from λξ_i + (1 − λ)π_i to the corners ξ_1 … ξ_N on a box.

    The node is built on the centered box; leaves are labeled with their
    corner. Bounds are verified before returning unless `verify` is off.
    """
    plan = plan_staircase(cfg, i, lam, delta)
    seed = config.DEFAULT_SEED if seed is None else seed
    centered = box.centered()
    steps = _steps(plan)
    node = _build(steps, 0, centered, plan.eps_inner, tag, lam_pin, seed, {})
    tree = RegionTree(box, node)
    logger.debug(
        f"Staircase i = {i}, λ = {lam:.4f}: ℓ = {plan.ell}, eps = {plan.eps_inner:.3e}, {len(steps)} blocks"
    )
    if verify:
        rows = verify_staircase(plan, node, tree, seed=seed)
        _raise_on_failure("staircase", rows)
    return node, tree


def verify_staircase(
    plan: StaircasePlan, node: FieldNode, tree: RegionTree, samples: int = 256, seed: Optional[int] = None
) -> list[BoundRow]:
    """Corner measures against (1 − δ)ν_j|box|, total pinned measure, sup|φ| and sampled containment in 𝒯_δ."""
    cfg, delta = plan.cfg, plan.delta
    weights = corner_weights(cfg, plan.i, plan.lam)
    volume = tree.box.volume
    rows = [
        BoundRow.check(f"corner_{j}_measure", tree.measure(j), (1.0 - delta) * weights[j - 1] * volume)
        for j in range(1, cfg.N + 1)
    ]
    pinned = sum(tree.measure(j) for j in range(1, cfg.N + 1))
    rows.append(BoundRow.check("pinned_measure", pinned, (1.0 - delta) * volume))
    rows.append(BoundRow.check("sup_phi", node.sup_phi_bound, delta, "<", "analytic"))

    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    X = node.box.sample(rng, samples)
    _, Dphi, Psi = node.evaluate(X)
    values = node.base_value.flat()[None, :] + np.concatenate(
        [Dphi.reshape(samples, -1), Psi.reshape(samples, -1)], axis=1
    )
    rows.append(BoundRow.check("containment", float(np.max(tn_distances(cfg, values))), delta, "<", "sampled"))
    return rows


def _raise_on_failure(what: str, rows: list[BoundRow]):
    failures = [row for row in rows if not row.passed]
    if failures:
        for row in failures:
            logger.error(f"{what}: {row.name} achieved {row.achieved:.6g}, required {row.relation} {row.required:.6g}")
        raise ConstructionException(
            f"{what} verification failed: {', '.join(row.name for row in failures)}",
            data={"failures": [row.model_dump() for row in failures]},
        )


def step_in_sigma(
    s: Scenario,
    dec: Decomposition,
    lam: float,
    mu: float,
    r: float,
    box: Box,
    tau: float,
    margin: Optional[float] = None,
    tag: str = "",
    seed: Optional[int] = None,
    verify: bool = True,
) -> tuple[FieldNode, RegionTree]:
    """
    Push Y = q·ζ_i(λ′, ρ) + (1 − q)·π_i(ρ′) into Σ^r(μ).

    A split block along ζ_i(λ′, ρ) − π_i(ρ′) separates the two sides; the
    ζ side runs a staircase on the configuration at ρ scaled by μ, the π
    side one at ρ′. Leaves carry the corner values ζ_j(μ, ·).
    """
    if not (s.delta2 - 1e-12 <= dec.lambda_prime <= lam + 1e-12 and lam <= mu < 1.0):
        raise DomainException(f"Need δ₂ ≤ λ′ ≤ λ ≤ μ < 1, got λ′ = {dec.lambda_prime}, λ = {lam}, μ = {mu}")
    if not 0.0 < r <= s.r0 * (1.0 + 1e-12):
        raise DomainException(f"r = {r} must lie in (0, r₀]")
    if not 0.0 < tau < 1.0:
        raise DomainException(f"τ = {tau} is outside (0, 1)")
    residual = witness_residual(s, dec)
    if residual > 1e-6 * (1.0 + dec.target.norm()):
        raise PreconditionException(
            f"Decomposition does not reconstruct its target (residual {residual:.3e})",
            data={"residual": residual},
        )
    seed = config.DEFAULT_SEED if seed is None else seed
    # split, cover and staircase each lose at most a factor 1 − τ/4
    quarter = 0.25 * tau if margin is None else min(0.25 * tau, margin)
    top_cfg = scaled_tn(config_at(s, dec.rho), mu)
    bottom_cfg = scaled_tn(config_at(s, dec.rho_prime), mu)
    lam_top = dec.lambda_prime / mu
    i, q, Y = dec.i, dec.q, dec.target
    centered = box.centered()

    def top_side(target: Box) -> FieldNode:
        return oscillate_to_corners(top_cfg, i, lam_top, target, quarter, tag, mu, seed, verify=False)[0]

    def bottom_side(target: Box) -> FieldNode:
        return oscillate_to_corners(bottom_cfg, i, 0.0, target, quarter, tag, mu, seed + 7919, verify=False)[0]

    if q >= 1.0:
        node = _rebased(top_side(centered), Y)
    elif q <= 0.0:
        node = _rebased(bottom_side(centered), Y)
    else:
        upper = top_cfg.point(i, lam_top)
        lower = bottom_cfg.pi(i)
        split = make_block(WaveVector.from_pair(upper - lower), q, centered, quarter, STAIRCASE_AUDIT, seed)
        placements = []
        for region, side in zip(split.regions, (top_side, bottom_side)):
            templates: dict[tuple, FieldNode] = {}
            for tiling in cover_region(region, 1.0 - quarter):
                key = _shape_key(tiling.base)
                if key not in templates:
                    templates[key] = side(tiling.base.centered())
                placements.append(Placement(templates[key], tiling, region.index))
        node = FieldNode(centered, Y, split, (None, None), tuple(placements), tag)

    tree = RegionTree(box, node)
    if verify:
        rows = verify_step(s, dec, mu, r, tau, node, tree, top_cfg, bottom_cfg, seed=seed)
        _raise_on_failure("step", rows)
    return node, tree


def _rebased(node: FieldNode, value: MatrixPair) -> FieldNode:
    # the staircase entry equals Y up to rounding; keep Y as the recorded entry
    return FieldNode(node.box, value, node.block, node.labels, node.children, node.tag)


def step_weights(dec: Decomposition, mu: float, top_cfg: TNConfig, bottom_cfg: TNConfig) -> np.ndarray:
    """q·ν(λ′/μ) on the ζ side plus (1 − q)·ν(0) on the π side, per corner."""
    top = corner_weights(top_cfg, dec.i, dec.lambda_prime / mu)
    bottom = corner_weights(bottom_cfg, dec.i, 0.0)
    return dec.q * top + (1.0 - dec.q) * bottom


def verify_step(
    s: Scenario,
    dec: Decomposition,
    mu: float,
    r: float,
    tau: float,
    node: FieldNode,
    tree: RegionTree,
    top_cfg: TNConfig,
    bottom_cfg: TNConfig,
    samples: int = 64,
    seed: Optional[int] = None,
) -> list[BoundRow]:
    """Corner measures with factor (1 − τ), total pinned measure, sup|φ| < τ and sampled Σ^r(μ) membership."""
    volume = tree.box.volume
    weights = step_weights(dec, mu, top_cfg, bottom_cfg)
    rows = [
        BoundRow.check(f"corner_{j}_measure", tree.measure(j), (1.0 - tau) * weights[j - 1] * volume)
        for j in range(1, s.N + 1)
    ]
    pinned = sum(tree.measure(j) for j in range(1, s.N + 1))
    rows.append(BoundRow.check("pinned_measure", pinned, (1.0 - tau) * volume))
    rows.append(BoundRow.check("sup_phi", node.sup_phi_bound, tau, "<", "analytic"))

    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    X = node.box.sample(rng, samples)
    _, Dphi, Psi = node.evaluate(X)
    members = 0
    for dphi, psi in zip(Dphi, Psi):
        value = node.base_value + MatrixPair(dphi, psi)
        if decompose_Sigma(s, r, mu, value, seed=seed) is not None:
            members += 1
    rows.append(BoundRow.check("sigma_membership", members / samples, 1.0, ">=", "sampled"))
    return rows
