"""
Building blocks: compactly supported oscillations along a wave vector.

A block on a box oscillates (Dφ, Ψ) between −λγ and (1 − λ)γ with Ψ exactly
divergence-free. Directions along a coordinate axis fit an integer number of
periods into the box, so their plateau regions are exact stripe tilings;
oblique directions carry slab descriptors and are covered by dyadic boxes on
demand.
"""

from typing import Optional

import numpy as np

from app.models.block import BuildingBlock, PlateauRegion, Profile, SlabRegion, Tiling
from app.models.geometry import Box, Domain, WaveVector
from app.schemas.report import BoundRow
from app.services.measure_service import INSIDE, MIXED, OUTSIDE, periodic_slab_volume, vitali_cover
from app.utils.linalg import points_segment_distance
from app.utils.smooth import SMOOTH_STEP_SLOPE
from core.config import config
from core.exceptions import ConstructionException, DomainException
from core.logging import get_logger

logger = get_logger(__name__)

# Widest transition of the profile, as a fraction of one period
MAX_TRANSITION = 0.02
# Plateau values are exact up to rounding
PLATEAU_TOL = 1e-12


def _check_inputs(lam: float, eps: float):
    if not 0.0 <= lam <= 1.0:
        raise DomainException(f"λ = {lam} is outside [0, 1]", data={"lambda": lam})
    if not 0.0 < eps < 1.0:
        raise DomainException(f"eps = {eps} is outside (0, 1)", data={"eps": eps})


def make_profile(lam: float, eps: float) -> Profile:
    """
    The 1-periodic profile q with plateaus 1 − λ and −λ.

    One period reads: zero band, rise to 1 − λ, plateau I1, fall to 0, fall to
    −λ, plateau I2, rise to 0, zero band. The plateaus have lengths cλ and
    c(1 − λ) with c = (1 − eps)^{1/3}; the transitions next to I1 have width
    λw and those next to I2 width (1 − λ)w, which makes ∫q = 0 exactly.
    """
    _check_inputs(lam, eps)
    if lam in (0.0, 1.0):
        zero = np.zeros(1)
        return Profile(lam, eps, None, None, 0.0, zero, np.ones(1), zero, zero, zero, 0.0)

    c = (1.0 - eps) ** (1.0 / 3.0)
    w = min(MAX_TRANSITION, (1.0 - c) / 8.0)
    zero_band = 1.0 - c - 2.0 * w
    w1, w2 = lam * w, (1.0 - lam) * w
    L1, L2 = c * lam, c * (1.0 - lam)
    high, low = 1.0 - lam, -lam

    length = np.array([zero_band / 2, w1, L1, w1, w2, L2, w2, zero_band / 2])
    start = np.array([0.0, 0.0, high, high, 0.0, low, low, 0.0])
    end = np.array([0.0, high, high, 0.0, low, low, 0.0, 0.0])
    at = np.concatenate([[0.0], np.cumsum(length)[:-1]])
    integral = length * 0.5 * (start + end)
    f_at = np.concatenate([[0.0], np.cumsum(integral)[:-1]])

    I1 = (float(at[2]), float(at[2] + L1))
    I2 = (float(at[5]), float(at[5] + L2))
    f_max = lam * (1.0 - lam) * (c + w)
    for array in (at, length, start, end, f_at):
        array.setflags(write=False)
    return Profile(lam, eps, I1, I2, w, at, length, start, end, f_at, f_max)


def _gradient_bound(margins: np.ndarray) -> float:
    active = margins > 0.0
    if not np.any(active):
        return 0.0
    return SMOOTH_STEP_SLOPE * float(np.sqrt(np.sum((1.0 / margins[active]) ** 2)))


def _stripe_tilings(inner: Box, axis: int, lo: float, period: float, ell: int, interval) -> tuple[Tiling, ...]:
    s, e = interval
    base_lo = inner.lo.copy()
    base_hi = inner.hi.copy()
    base_lo[axis] = lo + s * period
    base_hi[axis] = lo + e * period
    steps = np.zeros(inner.n)
    steps[axis] = period
    counts = tuple(ell if j == axis else 1 for j in range(inner.n))
    return (Tiling(Box.from_bounds(base_lo, base_hi), steps, counts),)


def _trivial_block(gamma: WaveVector, lam: float, box: Box, eps: float, profile: Profile) -> BuildingBlock:
    margins = box.radii * (1.0 - (1.0 - eps) ** (1.0 / (3.0 * box.n)))
    inner = box.shrunk(margins)
    pair = gamma.as_pair()
    full = PlateauRegion(1 if lam == 1.0 else 2, pair * 0.0, inner.volume, (Tiling.single(inner),), True)
    empty = PlateauRegion(2 if lam == 1.0 else 1, pair * 0.0, 0.0, (), True)
    regions = (full, empty) if lam == 1.0 else (empty, full)
    return BuildingBlock(
        gamma, lam, box, eps, profile, box.diameter, 0, gamma.axis, box.lo, inner, margins,
        regions, 0.0, 0.0,
    )


def make_block(
    gamma: WaveVector,
    lam: float,
    box: Box,
    eps: float,
    audit_samples: Optional[int] = None,
    seed: Optional[int] = None,
) -> BuildingBlock:
    """
    Build a block for γ and λ on a box, with every bound checked.

    The oscillation count ℓ starts at the analytic requirement for
    sup|φ| < eps and containment in [−λγ, (1 − λ)γ]_eps and doubles until the
    plateau measures also reach (1 − eps)λ|box| and (1 − eps)(1 − λ)|box|. A
    sampled audit then re-checks containment, sup|φ| and plateau exactness.
    """
    profile = make_profile(lam, eps)
    gamma = gamma.oriented()
    if profile.trivial:
        return _trivial_block(gamma, lam, box, eps, profile)

    n = box.n
    a = gamma.a
    axis = gamma.axis
    a_norm = float(np.linalg.norm(a))
    p_norm = float(np.linalg.norm(gamma.p))
    B_norm = float(np.linalg.norm(gamma.B))

    if axis is not None:
        transverse = (1.0 - eps) ** (1.0 / (3.0 * max(n - 1, 1)))
        margins = box.radii * (1.0 - transverse)
        margins[axis] = 0.0
        extent = 2.0 * float(box.radii[axis]) * a_norm
    else:
        margins = box.radii * (1.0 - (1.0 - eps) ** (1.0 / (3.0 * n)))
        extent = float(np.sum(np.abs(a) * 2.0 * box.radii))
    inner = box.shrunk(margins)
    origin = box.lo
    slope = _gradient_bound(margins)
    spread = max(p_norm, slope * (p_norm + 2.0 * B_norm / a_norm))
    required_pair = (1.0 - eps) * lam * box.volume, (1.0 - eps) * (1.0 - lam) * box.volume

    ell = int(np.ceil(extent * profile.f_max * spread / eps)) + 1
    reached = config.PERIOD_CAP
    if ell > reached:
        # the analytic start is already past the cap; name the bound that fails there
        width = extent / reached * profile.f_max
        failing = "sup_phi" if width * p_norm >= eps else "containment"
    while ell <= config.PERIOD_CAP:
        reached = ell
        delta = extent / ell
        sup_phi = delta * profile.f_max * p_norm
        containment = delta * profile.f_max * slope * (p_norm + 2.0 * B_norm / a_norm)
        pair = gamma.as_pair()
        offsets = ((1.0 - lam) * pair, -lam * pair)
        regions = []
        for index, interval in enumerate((profile.I1, profile.I2), start=1):
            if axis is not None:
                period = delta / a_norm
                tilings = _stripe_tilings(inner, axis, float(box.lo[axis]), period, ell, interval)
                measure = sum(tiling.measure for tiling in tilings)
                regions.append(PlateauRegion(index, offsets[index - 1], measure, tilings, True))
            else:
                offset = float(a @ origin) / delta
                measure = periodic_slab_volume(inner, a, delta, [interval], offset=offset)
                slab = SlabRegion(inner, a, delta, origin, interval)
                regions.append(PlateauRegion(index, offsets[index - 1], measure, (), False, slab))

        if sup_phi >= eps:
            failing = "sup_phi"
        elif containment >= eps:
            failing = "containment"
        elif regions[0].measure < required_pair[0] or regions[1].measure < required_pair[1]:
            failing = "plateau_measure"
        else:
            block = BuildingBlock(
                gamma, lam, box, eps, profile, delta, ell, axis, origin, inner, margins,
                tuple(regions), sup_phi, containment,
            )
            _audit(block, audit_samples, seed)
            logger.debug(f"Block λ = {lam:.4f} on radius {box.radius:.3e}: ℓ = {ell}, δ = {delta:.3e}")
            return block
        ell *= 2

    raise ConstructionException(
        f"Block oscillation count exceeded {config.PERIOD_CAP}: {failing} fails at ℓ = {reached}",
        data={"check": failing, "ell": reached, "lambda": lam, "eps": eps, "radius": box.radius},
    )


def _audit(block: BuildingBlock, samples: Optional[int], seed: Optional[int]):
    samples = config.VERIFY_SAMPLES if samples is None else samples
    if samples <= 0:
        return
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    X = block.box.sample(rng, samples)
    phi, Dphi, Psi = block.evaluate(X)
    values = np.concatenate([Dphi.reshape(samples, -1), Psi.reshape(samples, -1)], axis=1)
    pair = block.gamma.as_pair()
    distance = points_segment_distance(values, (-block.lam * pair).flat(), ((1.0 - block.lam) * pair).flat())
    worst = float(np.max(distance))
    sup_phi = float(np.max(np.linalg.norm(phi, axis=1)))
    if worst >= block.eps or sup_phi >= block.eps:
        raise ConstructionException(
            f"Block audit failed: containment {worst:.3e}, sup|φ| {sup_phi:.3e}, eps {block.eps}",
            data={"containment": worst, "sup_phi": sup_phi, "eps": block.eps},
        )
    for region in block.regions:
        if not region.exact or region.measure == 0.0:
            continue
        inside = np.zeros(samples, dtype=bool)
        for tiling in region.tilings:
            inside |= tiling.locate(X)[0]
        if not np.any(inside):
            continue
        deviation = float(np.max(np.abs(values[inside] - region.offset.flat())))
        if deviation > PLATEAU_TOL * (1.0 + pair.norm()):
            raise ConstructionException(
                f"Plateau {region.index} deviates by {deviation:.3e}",
                data={"region": region.index, "deviation": deviation},
            )


def eval_block(block: BuildingBlock, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(φ, Dφ, Ψ) at one point or at the rows of an array of points."""
    X = np.asarray(x, dtype=float)
    phi, Dphi, Psi = block.evaluate(np.atleast_2d(X))
    if X.ndim == 1:
        return phi[0], Dphi[0], Psi[0]
    return phi, Dphi, Psi


def _slab_classifier(slab: SlabRegion):
    s, e = slab.interval

    def classify(box: Box) -> int:
        if box.overlap_volume(slab.inner) == 0.0:
            return OUTSIDE
        corners = np.array(np.meshgrid(*zip(box.lo, box.hi), indexing="ij")).reshape(box.n, -1).T
        phases = (corners - slab.origin) @ slab.a / slab.delta
        low, high = float(phases.min()), float(phases.max())
        first = int(np.floor(low))
        touches = any(
            min(high, period + e) > max(low, period + s) for period in range(first, int(np.floor(high)) + 1)
        )
        if not touches:
            return OUTSIDE
        if slab.inner.contains_box(box) and low - first >= s and high - first <= e:
            return INSIDE
        return MIXED

    return classify


def near_cubic(tiling: Tiling) -> Tiling:
    """
    The same union of boxes with each instance cut into 2^k equal slices
    along every axis the tiling does not repeat.

    k is chosen per axis so the slices come within a factor √2 of the
    shortest half width; stripes thus become rows of near-cubic boxes.
    """
    radii = tiling.base.radii
    fixed = np.asarray(tiling.counts) == 1
    ratios = np.log2(radii / float(np.min(radii)))
    splits = np.where(fixed, np.maximum(np.rint(ratios), 0.0), 0.0).astype(int)
    if not np.any(splits):
        return tiling
    pieces = 2**splits
    sub = radii / pieces
    steps = np.where(fixed, 2.0 * sub, tiling.steps)
    counts = tuple(int(c * p) for c, p in zip(tiling.counts, pieces))
    return Tiling(Box(tiling.base.lo + sub, sub), steps, counts)


def cover_region(region: PlateauRegion, fill: float, depth: Optional[int] = None) -> tuple[Tiling, ...]:
    """
    Near-cubic tilings inside a plateau region covering at least `fill` of its measure.

    Exact regions are partitioned without loss by `near_cubic`; slab regions
    are covered by dyadic boxes of their inner box.
    """
    if region.exact:
        return tuple(near_cubic(tiling) for tiling in region.tilings)
    slab = region.slab
    cover = vitali_cover(
        Domain((slab.inner,)),
        max_radius=2.0 * slab.inner.radius,
        fill=fill,
        depth=depth,
        classify=_slab_classifier(slab),
        target_volume=region.measure,
    )
    logger.debug(f"Covered slab region {region.index} by {len(cover.boxes)} boxes ({cover.achieved:.4f})")
    return tuple(near_cubic(Tiling.single(box)) for box in cover.boxes)


def block_report(block: BuildingBlock, samples: int = 1000, seed: Optional[int] = None) -> list[BoundRow]:
    """Bound rows of one block: analytic and sampled containment, sup|φ|, plateau measures, divergence."""
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    rows = [
        BoundRow.check("sup_phi", block.sup_phi_bound, block.eps, "<", "analytic"),
        BoundRow.check("containment", block.containment_bound, block.eps, "<", "analytic"),
    ]
    for region, share in zip(block.regions, (block.lam, 1.0 - block.lam)):
        rows.append(
            BoundRow.check(
                f"plateau_{region.index}_measure",
                region.measure,
                (1.0 - block.eps) * share * block.box.volume,
                ">=",
                "exact",
            )
        )
    X = block.box.sample(rng, samples)
    phi, Dphi, Psi = block.evaluate(X)
    values = np.concatenate([Dphi.reshape(samples, -1), Psi.reshape(samples, -1)], axis=1)
    pair = block.gamma.as_pair()
    distance = points_segment_distance(values, (-block.lam * pair).flat(), ((1.0 - block.lam) * pair).flat())
    rows.append(BoundRow.check("containment_sampled", float(np.max(distance)), block.eps, "<", "sampled"))
    rows.append(
        BoundRow.check("sup_phi_sampled", float(np.max(np.linalg.norm(phi, axis=1))), block.eps, "<", "sampled")
    )
    rows.append(BoundRow.check("divergence", divergence_residual(block, X), 1e-6, "<=", "sampled"))
    return rows


def divergence_residual(block: BuildingBlock, X: np.ndarray, step: Optional[float] = None) -> float:
    """
    Largest central-difference divergence of Ψ at the rows of X.

    Normalized by the oscillation frequency |a|/δ and by 1 + sup‖Ψ‖. The
    default step resolves the shortest profile transition.
    """
    if block.trivial:
        return 0.0
    if step is None:
        shortest = block.profile.transition_width * min(block.lam, 1.0 - block.lam)
        step = 1e-6 * shortest * block.delta / float(np.linalg.norm(block.gamma.a))
    k, n = X.shape
    m = block.gamma.p.size
    divergence = np.zeros((k, m))
    for j in range(n):
        shift = np.zeros(n)
        shift[j] = step
        forward = block.evaluate(X + shift)[2][:, :, j]
        backward = block.evaluate(X - shift)[2][:, :, j]
        divergence += (forward - backward) / (2.0 * step)
    scale = np.linalg.norm(block.gamma.a) / block.delta
    size = 1.0 + float(np.max(np.linalg.norm(block.evaluate(X)[2].reshape(k, -1), axis=1)))
    return float(np.max(np.abs(divergence))) / (scale * size)
