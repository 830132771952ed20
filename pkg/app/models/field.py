"""
Exactly evaluable fields (u, V) built from nested block templates.

A node lives in its own frame, centered at the origin. Children are placed by
tilings: every instance box of a placement carries the same child template,
so a node that stands for millions of congruent stripes is stored once.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np

from app.models.block import BuildingBlock, PlateauRegion, Tiling
from app.models.geometry import Box, Domain, MatrixPair
from core.exceptions import ValidationException


@dataclass(frozen=True)
class RegionLabel:
    """
    What a plateau region is pinned to.

    `corner` is the corner index j of ζ_j(lam, ρ), or 0 for a region that is
    constant but not at a corner (the anchor left over by a staircase).
    """

    value: MatrixPair
    corner: int = 0
    tag: str = ""
    lam: Optional[float] = None

    @property
    def pinned(self) -> bool:
        return self.corner > 0


@dataclass(frozen=True, eq=False)
class Placement:
    """Copies of a child template on the instance boxes of a tiling in the parent frame."""

    node: "FieldNode"
    tiling: Tiling
    region: int = 0


@dataclass(frozen=True, eq=False)
class FieldNode:
    """
    A perturbation template on a box centered at the origin.

    `block` is None for pure containers. `labels[r - 1]` labels plateau
    region r of the block while no child refines it.
    """

    box: Box
    base_value: MatrixPair
    block: Optional[BuildingBlock] = None
    labels: tuple[Optional[RegionLabel], ...] = ()
    children: tuple[Placement, ...] = ()
    tag: str = ""

    @property
    def refined(self) -> frozenset[int]:
        return frozenset(placement.region for placement in self.children if placement.region)

    def label_of(self, region: PlateauRegion) -> Optional[RegionLabel]:
        index = region.index - 1
        return self.labels[index] if index < len(self.labels) else None

    @cached_property
    def sup_phi_bound(self) -> float:
        """Upper bound of |φ| over the node."""
        own = self.block.sup_phi_bound if self.block is not None else 0.0
        below = max((placement.node.sup_phi_bound for placement in self.children), default=0.0)
        return own + below

    @cached_property
    def depth(self) -> int:
        below = max((placement.node.depth for placement in self.children), default=0)
        return below + (1 if self.block is not None else 0)

    def evaluate(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(φ, Dφ, Ψ) at the rows of X, given in the node frame."""
        X = np.atleast_2d(X)
        k = X.shape[0]
        m, n = self.base_value.shape
        if self.block is not None:
            phi, Dphi, Psi = self.block.evaluate(X)
        else:
            phi, Dphi, Psi = np.zeros((k, m)), np.zeros((k, m, n)), np.zeros((k, m, n))
        for placement in self.children:
            inside, rel = placement.tiling.locate(X)
            if not np.any(inside):
                continue
            sub_phi, sub_Dphi, sub_Psi = placement.node.evaluate(rel[inside])
            phi[inside] += sub_phi
            Dphi[inside] += sub_Dphi
            Psi[inside] += sub_Psi
        return phi, Dphi, Psi


@dataclass(frozen=True, eq=False)
class AffineBase:
    """Base pair ū(x) = u0 + A·x with constant, hence divergence-free, V̄."""

    u0: np.ndarray
    A: np.ndarray
    V: np.ndarray

    @classmethod
    def from_value(cls, value: MatrixPair, u0=None) -> "AffineBase":
        m, _ = value.shape
        offset = np.zeros(m) if u0 is None else np.asarray(u0, dtype=float)
        return cls(offset, value.first.copy(), value.second.copy())

    @property
    def value(self) -> MatrixPair:
        return MatrixPair(self.A, self.V)

    def evaluate(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        X = np.atleast_2d(X)
        k = X.shape[0]
        u = self.u0[None, :] + X @ self.A.T
        Du = np.broadcast_to(self.A, (k,) + self.A.shape).copy()
        V = np.broadcast_to(self.V, (k,) + self.V.shape).copy()
        return u, Du, V


@dataclass(frozen=True, eq=False)
class QuadraticBase:
    """
    Smooth base pair around a center x₀, with y = x − x₀:
    ū_a(x) = u0_a + A_a·y + ½ yᵀH_a y and V̄_a(x) = V_a + W_a y.

    Each H_a is symmetric, so Dū_a = A_a + H_a y is a gradient. Each W_a is
    antisymmetric, so every row of V̄ is divergence free; in the plane W_a y
    is the rotated gradient of a quadratic stream function.
    """

    u0: np.ndarray
    A: np.ndarray
    V: np.ndarray
    H: np.ndarray
    W: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        m, n = np.shape(self.A)
        for name, tensor in (("H", self.H), ("W", self.W)):
            if np.shape(tensor) != (m, n, n):
                raise ValidationException(f"{name} must have shape {(m, n, n)}, got {np.shape(tensor)}")
        if np.shape(self.V) != (m, n) or np.shape(self.center) != (n,) or np.shape(self.u0) != (m,):
            raise ValidationException("u0, V and center do not match the gradient shape")
        H, W = np.asarray(self.H), np.asarray(self.W)
        if not np.allclose(H, np.swapaxes(H, 1, 2), atol=1e-12):
            raise ValidationException("Hessian blocks H_a must be symmetric")
        if not np.allclose(W, -np.swapaxes(W, 1, 2), atol=1e-12):
            raise ValidationException("Flux blocks W_a must be antisymmetric")

    @classmethod
    def around(cls, value: MatrixPair, H, W, center, u0=None) -> "QuadraticBase":
        m, _ = value.shape
        offset = np.zeros(m) if u0 is None else np.asarray(u0, dtype=float)
        return cls(
            offset, value.first.copy(), value.second.copy(),
            np.asarray(H, dtype=float), np.asarray(W, dtype=float), np.asarray(center, dtype=float),
        )

    @property
    def value(self) -> MatrixPair:
        """(Dū, V̄) at the center."""
        return MatrixPair(self.A, self.V)

    def evaluate(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        Y = np.atleast_2d(X) - self.center
        u = self.u0[None, :] + Y @ self.A.T + 0.5 * np.einsum("kj,ajl,kl->ka", Y, self.H, Y)
        Du = self.A[None, :, :] + np.einsum("ajl,kl->kaj", self.H, Y)
        V = self.V[None, :, :] + np.einsum("ajl,kl->kaj", self.W, Y)
        return u, Du, V


Base = Union[AffineBase, QuadraticBase]


@dataclass(frozen=True, eq=False)
class FieldTree:
    """(u, V) = base + Σ root placements, in the global frame."""

    base: Base
    domain: Domain
    roots: tuple[Placement, ...] = field(default=())

    @property
    def shape(self) -> tuple[int, int]:
        return self.base.A.shape

    def evaluate(self, X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(u, Du, V) at the rows of X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        u, Du, V = self.base.evaluate(X)
        for placement in self.roots:
            inside, rel = placement.tiling.locate(X)
            if not np.any(inside):
                continue
            phi, Dphi, Psi = placement.node.evaluate(rel[inside])
            u[inside] += phi
            Du[inside] += Dphi
            V[inside] += Psi
        return u, Du, V

    def values(self, X) -> np.ndarray:
        """Flattened pairs (Du, V) at the rows of X."""
        _, Du, V = self.evaluate(X)
        k = Du.shape[0]
        return np.concatenate([Du.reshape(k, -1), V.reshape(k, -1)], axis=1)

    def with_roots(self, extra) -> "FieldTree":
        return FieldTree(self.base, self.domain, self.roots + tuple(extra))

    @property
    def sup_phi_bound(self) -> float:
        return max((placement.node.sup_phi_bound for placement in self.roots), default=0.0)


@dataclass(frozen=True, eq=False)
class Leaf:
    """An unrefined labeled plateau region and how many copies of it the tree holds."""

    node: FieldNode
    region: PlateauRegion
    label: RegionLabel
    copies: int

    @property
    def key(self) -> tuple[int, int]:
        return id(self.node), self.region.index

    @property
    def measure(self) -> float:
        return self.copies * self.region.measure


@dataclass(frozen=True, eq=False)
class RegionTree:
    """The labeled plateau regions below one node placed on a box."""

    box: Box
    root: FieldNode

    @cached_property
    def leaves(self) -> tuple[Leaf, ...]:
        return tuple(leaf_counts(self.root, {}).values())

    def measure(self, corner: Optional[int] = None) -> float:
        """Pinned measure at one corner, or of every labeled leaf when corner is None."""
        return float(
            sum(leaf.measure for leaf in self.leaves if corner is None or leaf.label.corner == corner)
        )

    @property
    def free_measure(self) -> float:
        return max(self.box.volume - self.measure(), 0.0)

    @property
    def leaf_count(self) -> int:
        return int(sum(leaf.copies for leaf in self.leaves))


def leaf_counts(node: FieldNode, memo: dict) -> dict[tuple[int, int], Leaf]:
    cached = memo.get(id(node))
    if cached is not None:
        return cached
    table: dict[tuple[int, int], Leaf] = {}
    if node.block is not None:
        refined = node.refined
        for region in node.block.regions:
            label = node.label_of(region)
            if label is not None and region.index not in refined and region.measure > 0.0:
                table[(id(node), region.index)] = Leaf(node, region, label, 1)
    for placement in node.children:
        for key, leaf in leaf_counts(placement.node, memo).items():
            copies = leaf.copies * placement.tiling.count
            if key in table:
                copies += table[key].copies
            table[key] = Leaf(leaf.node, leaf.region, leaf.label, copies)
    memo[id(node)] = table
    return table
