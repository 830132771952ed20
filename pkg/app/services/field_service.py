"""Bookkeeping on field trees: leaf tables, exact measures, patching."""

from dataclasses import replace
from itertools import product
from typing import Optional

import numpy as np

from app.models.field import Base, FieldNode, FieldTree, Leaf, Placement, RegionTree, leaf_counts
from app.models.geometry import Domain, MatrixPair
from app.schemas.report import RegionMeasureTable
from app.services.measure_service import Z_99
from core.config import config
from core.logging import get_logger

logger = get_logger(__name__)

LeafKey = tuple[int, int]


def region_measures(tree: RegionTree) -> RegionMeasureTable:
    """Per-corner pinned measure, unpinned constant measure, free measure and leaf count."""
    corners: dict[int, float] = {}
    unpinned = 0.0
    for leaf in tree.leaves:
        if leaf.label.pinned:
            corners[leaf.label.corner] = corners.get(leaf.label.corner, 0.0) + leaf.measure
        else:
            unpinned += leaf.measure
    return RegionMeasureTable(
        box_volume=tree.box.volume,
        corners=dict(sorted(corners.items())),
        unpinned=unpinned,
        free=tree.free_measure,
        leaf_count=tree.leaf_count,
    )


def field_leaves(tree: FieldTree) -> list[Leaf]:
    """Every labeled leaf of a field, with copies counted over all root placements."""
    memo: dict = {}
    table: dict[LeafKey, Leaf] = {}
    for placement in tree.roots:
        for key, leaf in leaf_counts(placement.node, memo).items():
            copies = leaf.copies * placement.tiling.count
            if key in table:
                copies += table[key].copies
            table[key] = Leaf(leaf.node, leaf.region, leaf.label, copies)
    return list(table.values())


def attach(
    tree: FieldTree, patches: dict[LeafKey, tuple[Placement, ...]]
) -> tuple[FieldTree, dict[int, FieldNode]]:
    """
    Refine leaves by adding placements on their regions.

    Templates are rebuilt bottom-up, so every copy of a patched leaf gets the
    patch. Returns the new tree and a map from old node ids to new nodes.
    """
    memo: dict[int, FieldNode] = {}

    def rebuild(node: FieldNode) -> FieldNode:
        done = memo.get(id(node))
        if done is not None:
            return done
        children = tuple(Placement(rebuild(child.node), child.tiling, child.region) for child in node.children)
        extra: tuple[Placement, ...] = ()
        if node.block is not None:
            for region in node.block.regions:
                extra += patches.get((id(node), region.index), ())
        changed = extra or any(new.node is not old.node for new, old in zip(children, node.children))
        result = replace(node, children=children + extra) if changed else node
        memo[id(node)] = result
        return result

    roots = tuple(Placement(rebuild(root.node), root.tiling, root.region) for root in tree.roots)
    applied = sum(len(value) for value in patches.values())
    logger.debug(f"Attached {applied} placements to {len(patches)} leaves")
    return FieldTree(tree.base, tree.domain, roots), memo


def node_values(node: FieldNode) -> list[MatrixPair]:
    """Base values of every node below and including `node`, and all leaf values."""
    seen: dict[int, FieldNode] = {}
    stack = [node]
    while stack:
        current = stack.pop()
        if id(current) in seen:
            continue
        seen[id(current)] = current
        stack.extend(placement.node for placement in current.children)
    values = [current.base_value for current in seen.values()]
    values += [leaf.label.value for leaf in RegionTree(node.box, node).leaves]
    return values


def l1_deviation(node: FieldNode, value: MatrixPair, slack: float) -> float:
    """
    Upper bound of ∫|Dφ| over the node's box, where value is the entry value.

    Leaves contribute exactly. Outside the leaves the gradient stays within
    `slack` of segments between the node's base and leaf values.
    """
    tree = RegionTree(node.box, node)
    exact = sum(
        float(np.linalg.norm(leaf.label.value.first - value.first)) * leaf.measure for leaf in tree.leaves
    )
    spread = max(float(np.linalg.norm(other.first - value.first)) for other in node_values(node))
    return exact + tree.free_measure * (spread + slack)


def field_divergence(tree: FieldTree, X: np.ndarray, step: float) -> np.ndarray:
    """Central-difference divergence of V at the rows of X, one entry per row of V."""
    k, n = X.shape
    m, _ = tree.shape
    divergence = np.zeros((k, m))
    for j in range(n):
        shift = np.zeros(n)
        shift[j] = step
        forward = tree.evaluate(X + shift)[2][:, :, j]
        backward = tree.evaluate(X - shift)[2][:, :, j]
        divergence += (forward - backward) / (2.0 * step)
    return divergence


def base_values(base: Base, Omega: Domain, samples: int = 16, seed: Optional[int] = None) -> list[MatrixPair]:
    """
    Distinct base pairs (Dū, V̄) at the box centers, the box vertices and
    seeded samples of Ω; an affine base gives a single pair.
    """
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    points = [box.center[None, :] for box in Omega.boxes]
    points += [np.array(list(product(*zip(box.lo, box.hi)))) for box in Omega.boxes]
    points.append(Omega.sample(rng, samples))
    X = np.vstack(points)
    _, Du, V = base.evaluate(X)
    distinct: dict[tuple, MatrixPair] = {}
    for first, second in zip(Du, V):
        pair = MatrixPair(first, second)
        distinct.setdefault(pair.key(), pair)
    return list(distinct.values())


def l1_distance(
    first: FieldTree, second: FieldTree, Omega: Domain, samples: Optional[int] = None, seed: Optional[int] = None
) -> tuple[float, float]:
    """Monte Carlo ∫_Ω |Du₁ − Du₂| with its 99% half-width."""
    samples = config.MC_SAMPLES if samples is None else samples
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    X = Omega.sample(rng, samples)
    gap = np.linalg.norm((first.evaluate(X)[1] - second.evaluate(X)[1]).reshape(samples, -1), axis=1)
    volume = Omega.volume
    return volume * float(np.mean(gap)), volume * Z_99 * float(np.std(gap)) / np.sqrt(samples)
