"""Value types for matrix pairs, wave vectors, boxes and domains."""

from dataclasses import dataclass, field
from itertools import product
from typing import Iterator, Optional

import numpy as np

from app.utils.linalg import (
    KERNEL_TOL,
    axis_of,
    kernel_residual,
    points_segment_distance,
    rank_one_factors,
    tensor_product,
)
from core.exceptions import ValidationException


def _frozen(values, ndim: int, name: str) -> np.ndarray:
    array = np.array(values, dtype=float, ndmin=ndim)
    if array.ndim != ndim:
        raise ValidationException(f"{name} must have {ndim} dimensions, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValidationException(f"{name} has non-finite entries")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class MatrixPair:
    """A point (ξ¹, ξ²) of R^{m×n} × R^{m×n}: gradient slot and flux slot."""

    first: np.ndarray
    second: np.ndarray

    # numpy scalars defer to __rmul__ instead of building object arrays
    __array_ufunc__ = None

    def __post_init__(self):
        first = _frozen(self.first, 2, "first")
        second = _frozen(self.second, 2, "second")
        if first.shape != second.shape:
            raise ValidationException(
                f"Pair slots disagree in shape: {first.shape} vs {second.shape}"
            )
        object.__setattr__(self, "first", first)
        object.__setattr__(self, "second", second)

    @classmethod
    def zeros(cls, m: int, n: int) -> "MatrixPair":
        return cls(np.zeros((m, n)), np.zeros((m, n)))

    @classmethod
    def scalar(cls, first: float, second: float) -> "MatrixPair":
        """The m = n = 1 pair (first, second)."""
        return cls([[first]], [[second]])

    @classmethod
    def from_flat(cls, vector, m: int, n: int) -> "MatrixPair":
        vector = np.asarray(vector, dtype=float)
        return cls(vector[: m * n].reshape(m, n), vector[m * n :].reshape(m, n))

    @property
    def shape(self) -> tuple[int, int]:
        return self.first.shape

    def flat(self) -> np.ndarray:
        return np.concatenate([self.first.ravel(), self.second.ravel()])

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat()))

    def distance(self, other: "MatrixPair") -> float:
        return float(np.linalg.norm(self.flat() - other.flat()))

    def allclose(self, other: "MatrixPair", atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.flat(), other.flat(), rtol=0.0, atol=atol))

    def key(self, digits: int = 12) -> tuple:
        """Hashable rounded coordinates, used to share templates between equal values."""
        return tuple(np.round(self.flat(), digits).tolist())

    def __add__(self, other: "MatrixPair") -> "MatrixPair":
        return MatrixPair(self.first + other.first, self.second + other.second)

    def __sub__(self, other: "MatrixPair") -> "MatrixPair":
        return MatrixPair(self.first - other.first, self.second - other.second)

    def __mul__(self, scale: float) -> "MatrixPair":
        return MatrixPair(scale * self.first, scale * self.second)

    __rmul__ = __mul__

    def __neg__(self) -> "MatrixPair":
        return MatrixPair(-self.first, -self.second)

    def __repr__(self) -> str:
        return f"MatrixPair(first={self.first.tolist()}, second={self.second.tolist()})"


@dataclass(frozen=True, eq=False)
class WaveVector:
    """An element γ = (p ⊗ a, B) of the wave cone, B·a = 0."""

    p: np.ndarray
    a: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        p = _frozen(self.p, 1, "p")
        a = _frozen(self.a, 1, "a")
        B = _frozen(self.B, 2, "B")
        if B.shape != (p.size, a.size):
            raise ValidationException(f"B has shape {B.shape}, expected {(p.size, a.size)}")
        if np.linalg.norm(a) <= 0.0:
            raise ValidationException("Wave direction a must be nonzero")
        if kernel_residual(B, a) > KERNEL_TOL:
            raise ValidationException(
                f"B·a must vanish: residual {kernel_residual(B, a):.3e}",
                data={"residual": kernel_residual(B, a)},
            )
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "B", B)

    @classmethod
    def from_pair(cls, pair: MatrixPair, tol: float = 1e-9) -> "WaveVector":
        """
        Factor a pair lying in the wave cone.

        The gradient slot must be rank one and the flux slot must annihilate
        its direction; a is returned with unit length.
        """
        p, a = rank_one_factors(pair.first, pair.second)
        if np.linalg.norm(tensor_product(p, a) - pair.first) > tol * (1.0 + pair.norm()):
            raise ValidationException("Gradient slot is not rank one", data={"pair": repr(pair)})
        residual = np.linalg.norm(pair.second @ a)
        if residual > tol * (1.0 + np.linalg.norm(pair.second)):
            raise ValidationException(
                "Flux slot does not annihilate the wave direction",
                data={"residual": float(residual)},
            )
        B = pair.second - np.outer(pair.second @ a, a)
        return cls(p, a, B)

    @property
    def axis(self) -> Optional[int]:
        return axis_of(self.a)

    def as_pair(self) -> MatrixPair:
        return MatrixPair(tensor_product(self.p, self.a), self.B)

    def scaled(self, factor: float) -> "WaveVector":
        return WaveVector(factor * self.p, self.a, factor * self.B)

    def oriented(self) -> "WaveVector":
        """Same pair with a flipped so that its largest entry is positive."""
        k = int(np.argmax(np.abs(self.a)))
        if self.a[k] >= 0:
            return self
        return WaveVector(-self.p, -self.a, self.B)


@dataclass(frozen=True, eq=False)
class Box:
    """Open axis-aligned box given by its center and per-axis half widths."""

    center: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        center = _frozen(self.center, 1, "center")
        radii = _frozen(np.broadcast_to(np.asarray(self.radii, dtype=float), center.shape), 1, "radii")
        if np.any(radii <= 0.0):
            raise ValidationException(f"Box half widths must be positive, got {radii.tolist()}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radii", radii)

    @classmethod
    def cube(cls, center, radius: float) -> "Box":
        center = np.atleast_1d(np.asarray(center, dtype=float))
        return cls(center, np.full(center.shape, float(radius)))

    @classmethod
    def from_bounds(cls, lo, hi) -> "Box":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        return cls(0.5 * (lo + hi), 0.5 * (hi - lo))

    @property
    def n(self) -> int:
        return self.center.size

    @property
    def radius(self) -> float:
        """rad(Q): the largest half width."""
        return float(np.max(self.radii))

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.radii

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.radii

    @property
    def volume(self) -> float:
        return float(np.prod(2.0 * self.radii))

    @property
    def diameter(self) -> float:
        return float(2.0 * np.linalg.norm(self.radii))

    def contains(self, X, closed: bool = False) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        offset = np.abs(X - self.center)
        if closed:
            return np.all(offset <= self.radii, axis=1)
        return np.all(offset < self.radii, axis=1)

    def contains_box(self, other: "Box", tol: float = 0.0) -> bool:
        return bool(np.all(other.lo >= self.lo - tol) and np.all(other.hi <= self.hi + tol))

    def overlap_volume(self, other: "Box") -> float:
        widths = np.minimum(self.hi, other.hi) - np.maximum(self.lo, other.lo)
        return float(np.prod(np.clip(widths, 0.0, None)))

    def translated(self, shift) -> "Box":
        return Box(self.center + np.asarray(shift, dtype=float), self.radii)

    def centered(self) -> "Box":
        """The same shape centered at the origin."""
        return Box(np.zeros(self.n), self.radii)

    def shrunk(self, margins) -> "Box":
        return Box(self.center, self.radii - np.asarray(margins, dtype=float))

    def subdivide(self) -> list["Box"]:
        """The 2ⁿ dyadic children, in lexicographic order of their lower corners."""
        half = 0.5 * self.radii
        return [
            Box(self.center + half * np.array(signs), half)
            for signs in product((-1.0, 1.0), repeat=self.n)
        ]

    def grid(self, counts) -> Iterator["Box"]:
        """Equal sub-boxes, `counts[j]` along axis j."""
        counts = np.asarray(counts, dtype=int)
        radii = self.radii / counts
        for index in product(*(range(c) for c in counts)):
            yield Box(self.lo + radii * (2 * np.array(index) + 1), radii)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.lo + rng.random((count, self.n)) * (2.0 * self.radii)

    def __repr__(self) -> str:
        return f"Box(center={self.center.tolist()}, radii={self.radii.tolist()})"


@dataclass(frozen=True, eq=False)
class Domain:
    """Finite union of boxes with pairwise disjoint interiors."""

    boxes: tuple[Box, ...]
    overlap_tol: float = field(default=1e-12, repr=False)

    def __post_init__(self):
        boxes = tuple(self.boxes)
        if not boxes:
            raise ValidationException("Domain needs at least one box")
        if len({box.n for box in boxes}) != 1:
            raise ValidationException("Domain boxes must share one dimension")
        total = sum(box.volume for box in boxes)
        for i, first in enumerate(boxes):
            for j in range(i + 1, len(boxes)):
                overlap = first.overlap_volume(boxes[j])
                if overlap > self.overlap_tol * total:
                    raise ValidationException(
                        f"Domain boxes {i} and {j} overlap by {overlap:.3e}",
                        data={"boxes": [i, j], "overlap": overlap},
                    )
        object.__setattr__(self, "boxes", boxes)

    @property
    def n(self) -> int:
        return self.boxes[0].n

    @property
    def volume(self) -> float:
        return float(sum(box.volume for box in self.boxes))

    @property
    def bounding_box(self) -> Box:
        lo = np.min([box.lo for box in self.boxes], axis=0)
        hi = np.max([box.hi for box in self.boxes], axis=0)
        return Box.from_bounds(lo, hi)

    @property
    def diameter(self) -> float:
        return self.bounding_box.diameter

    def contains(self, X, closed: bool = False) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        inside = np.zeros(X.shape[0], dtype=bool)
        for box in self.boxes:
            inside |= box.contains(X, closed=closed)
        return inside

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Uniform samples, boxes chosen in proportion to their volume."""
        weights = np.array([box.volume for box in self.boxes]) / self.volume
        choice = rng.choice(len(self.boxes), size=count, p=weights)
        points = np.empty((count, self.n))
        for index, box in enumerate(self.boxes):
            picked = choice == index
            points[picked] = box.sample(rng, int(np.sum(picked)))
        return points


@dataclass(frozen=True, eq=False)
class Segment:
    """Closed segment [alpha, beta] of matrix pairs."""

    alpha: MatrixPair
    beta: MatrixPair

    def point(self, t: float) -> MatrixPair:
        return self.alpha + t * (self.beta - self.alpha)


def segment_distance(x: MatrixPair, segment: Segment) -> float:
    """Euclidean distance from x to the closed segment."""
    return float(
        points_segment_distance(x.flat()[None, :], segment.alpha.flat(), segment.beta.flat())[0]
    )
