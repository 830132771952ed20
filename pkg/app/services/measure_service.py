"""
Exact and Monte-Carlo measures on boxes, plus dyadic cube covers.

Exact slab formulas are the record; Monte Carlo is only ever the audit.
"""

from dataclasses import dataclass
from itertools import product
from math import factorial
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from app.models.geometry import Box, Domain
from core.config import config
from core.exceptions import ConstructionException, DomainException
from core.logging import get_logger

logger = get_logger(__name__)

# Two-sided 99% normal quantile
Z_99 = 2.5758293035489004

# classify callback results for vitali_cover
INSIDE, OUTSIDE, MIXED = 1, 0, -1


class MeasureEstimate(NamedTuple):
    """Monte-Carlo volume estimate with its 99% half-width."""

    estimate: float
    half_width: float


@dataclass
class CoverResult:
    """Dyadic cover of a target set."""

    boxes: list[Box]
    covered: float
    target_volume: float

    @property
    def achieved(self) -> float:
        return self.covered / self.target_volume if self.target_volume > 0 else 1.0


def _corner_volume(a: np.ndarray, lengths: np.ndarray, c: np.ndarray) -> np.ndarray:
    """
    Volume of {y ∈ Π[0, L_j] : a·y ≤ c} for a > 0, vectorized over c.

    Inclusion-exclusion over the box vertices of the simplex volume c₊ⁿ/(n!Πa).
    """
    k = a.size
    total = np.zeros_like(c)
    for subset in product((0, 1), repeat=k):
        chosen = np.array(subset, dtype=bool)
        shift = c - float(np.sum(a[chosen] * lengths[chosen]))
        sign = -1.0 if np.sum(chosen) % 2 else 1.0
        total += sign * np.maximum(shift, 0.0) ** k
    return total / (factorial(k) * float(np.prod(a)))


def _halfspace_volumes(b: Box, a: np.ndarray, c: np.ndarray) -> np.ndarray:
    lengths = 2.0 * b.radii
    c = np.asarray(c, dtype=float) - float(a @ b.lo)
    negative = a < 0
    c = c - float(np.sum(a[negative] * lengths[negative]))
    a = np.abs(a)
    active = a > 0
    passive = float(np.prod(lengths[~active]))
    a_act, l_act = a[active], lengths[active]
    full = float(np.prod(l_act))
    span = float(a_act @ l_act)

    c = np.clip(c, 0.0, span)
    lower = c <= 0.5 * span
    # the smaller side is evaluated directly, which limits cancellation
    small_side = np.where(lower, c, span - c)
    volume = _corner_volume(a_act, l_act, small_side)
    volume = np.where(lower, volume, full - volume)
    return passive * np.clip(volume, 0.0, full)


def halfspace_box_volume(b: Box, a, c: float) -> float:
    """Exact volume of b ∩ {x : a·x ≤ c}."""
    a = np.asarray(a, dtype=float)
    if np.linalg.norm(a) == 0.0:
        raise DomainException("Halfspace normal must be nonzero")
    return float(_halfspace_volumes(b, a, np.array([float(c)]))[0])


def _validated_intervals(intervals: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    ordered = sorted((float(s), float(e)) for s, e in intervals)
    previous_end = 0.0
    for start, end in ordered:
        if not (0.0 <= start < end <= 1.0):
            raise DomainException(f"Interval [{start}, {end}) is not a subinterval of [0, 1)")
        if start < previous_end:
            raise DomainException("Intervals must be disjoint")
        previous_end = end
    return ordered


def _periodic_length(t: np.ndarray, start: float, end: float) -> np.ndarray:
    # |{s ∈ [0, t] : frac(s) ∈ [start, end)}| for t ≥ 0 measured from an integer
    whole = np.floor(t)
    return whole * (end - start) + np.clip(t - whole, start, end) - start


def periodic_slab_volume(
    b: Box,
    a,
    delta: float,
    intervals: Sequence[tuple[float, float]],
    offset: float = 0.0,
    period_cap: Optional[int] = None,
) -> float:
    """
    Exact volume of {x ∈ b : frac(a·x/δ − offset) ∈ intervals}.

    Coordinate directions use the one-dimensional closed form; other
    directions sum halfspace volume differences over every period meeting b,
    refusing when that count exceeds the cap.
    """
    a = np.asarray(a, dtype=float)
    if np.linalg.norm(a) == 0.0:
        raise DomainException("Slab normal must be nonzero")
    if delta <= 0.0:
        raise DomainException(f"Slab period must be positive, got {delta}")
    ordered = _validated_intervals(intervals)
    if not ordered:
        return 0.0

    corners = np.array(list(product(*zip(b.lo, b.hi))))
    phases = corners @ a / delta - offset
    t_min, t_max = float(phases.min()), float(phases.max())

    nonzero = np.flatnonzero(a)
    if nonzero.size == 1:
        base = np.floor(t_min)
        fraction = sum(
            float(_periodic_length(np.array(t_max - base), s, e) - _periodic_length(np.array(t_min - base), s, e))
            for s, e in ordered
        )
        return b.volume * fraction / (t_max - t_min)

    cap = period_cap or config.SLAB_PERIOD_CAP
    first, last = int(np.floor(t_min)), int(np.floor(t_max))
    if last - first + 1 > cap:
        raise DomainException(
            f"Slab volume needs {last - first + 1} periods, cap is {cap}",
            data={"periods": last - first + 1, "cap": cap},
        )
    periods = np.arange(first, last + 1, dtype=float)
    total = 0.0
    for start, end in ordered:
        upper = _halfspace_volumes(b, a, delta * (periods + end + offset))
        lower = _halfspace_volumes(b, a, delta * (periods + start + offset))
        total += float(np.sum(upper - lower))
    return min(max(total, 0.0), b.volume)


def mc_measure(
    indicator: Callable[[np.ndarray], np.ndarray],
    b: Box,
    samples: int,
    seed: int,
) -> MeasureEstimate:
    """
    Monte-Carlo volume of {x ∈ b : indicator(x)}.

    The indicator takes a (k, n) array of points and returns k booleans.
    """
    if samples < 100:
        raise DomainException(f"Monte-Carlo estimates need at least 100 samples, got {samples}")
    rng = np.random.default_rng(seed)
    points = b.sample(rng, samples)
    hits = np.asarray(indicator(points), dtype=bool)
    fraction = float(np.mean(hits))
    half_width = Z_99 * np.sqrt(fraction * (1.0 - fraction) / samples) * b.volume
    return MeasureEstimate(fraction * b.volume, float(half_width))


def vitali_cover(
    target: Domain,
    max_radius: float,
    fill: float,
    depth: Optional[int] = None,
    classify: Optional[Callable[[Box], int]] = None,
    target_volume: Optional[float] = None,
) -> CoverResult:
    """
    Cover a target by disjoint dyadic boxes of radius ≤ max_radius.

    Without `classify` the target is the union of the domain boxes. With it,
    the target is the part of the domain boxes that `classify` reports as
    INSIDE; MIXED boxes are halved until `depth`, and `target_volume` gives the
    exact measure the fill is checked against. Subdivision is breadth first in
    lexicographic child order, so covers are reproducible.
    """
    if max_radius <= 0.0:
        raise DomainException("Cover radius must be positive")
    depth = config.COVER_DEPTH if depth is None else depth
    if target_volume is None:
        target_volume = target.volume

    accepted: list[Box] = []
    covered = 0.0
    layer = list(target.boxes)
    for level in range(depth + 1):
        next_layer: list[Box] = []
        for box in layer:
            verdict = INSIDE if classify is None else classify(box)
            if verdict == OUTSIDE:
                continue
            if verdict == INSIDE and box.radius <= max_radius:
                accepted.append(box)
                covered += box.volume
            elif level < depth:
                next_layer.extend(box.subdivide())
        if covered >= fill * target_volume or not next_layer:
            break
        layer = next_layer

    result = CoverResult(accepted, covered, target_volume)
    if result.achieved < fill:
        logger.warning(
            f"Cover reached {result.achieved:.6f} of the target, required {fill:.6f}"
        )
        raise ConstructionException(
            f"Cover fill {fill} unreachable within depth {depth}",
            data={"achieved": result.achieved, "required": fill, "depth": depth},
        )
    return result
