"""Tests for field trees, leaf tables and patching."""

import numpy as np
import pytest

from app.models.block import Tiling
from app.models.field import AffineBase, FieldNode, FieldTree, Placement, QuadraticBase, RegionLabel, RegionTree
from app.models.geometry import Box, Domain, MatrixPair, WaveVector
from app.services.block_service import make_block
from app.services.construction_service import boundary_check
from app.services.field_service import (
    attach,
    base_values,
    field_divergence,
    field_leaves,
    l1_deviation,
    l1_distance,
    region_measures,
)
from core.exceptions import ValidationException

GAMMA = WaveVector([1.0], [1.0, 0.0], [[0.0, 1.0]])
LAM = 0.4


def _labeled_node(box: Box, base: MatrixPair, gamma: WaveVector = GAMMA, corners=(1, 2)) -> FieldNode:
    block = make_block(gamma, LAM, box.centered(), 0.5, audit_samples=0)
    labels = tuple(
        RegionLabel(base + region.offset, corner=corner) for region, corner in zip(block.regions, corners)
    )
    return FieldNode(box.centered(), base, block, labels)


@pytest.fixture
def base_value():
    return MatrixPair([[0.5, 0.0]], [[0.0, 0.25]])


@pytest.fixture
def node(unit_square, base_value):
    return _labeled_node(unit_square, base_value)


@pytest.fixture
def two_copies(node, base_value):
    Omega = Domain((Box([0.5, 0.5], [0.5, 0.5]), Box([1.5, 0.5], [0.5, 0.5])))
    tiling = Tiling(Box([0.5, 0.5], [0.5, 0.5]), np.array([1.0, 0.0]), (2, 1))
    return FieldTree(AffineBase.from_value(base_value), Omega, (Placement(node, tiling),))


class TestRegionMeasures:
    """Tests for exact pinned measures."""

    def test_corner_table(self, node, unit_square):
        """Test each plateau is pinned to its corner and the rest is free."""
        table = region_measures(RegionTree(unit_square, node))
        m1, m2 = (region.measure for region in node.block.regions)
        assert table.corners == {1: pytest.approx(m1), 2: pytest.approx(m2)}
        assert table.free == pytest.approx(1.0 - m1 - m2)
        assert table.unpinned == 0.0
        assert table.leaf_count == 2

    def test_plateaus_meet_their_share(self, node):
        """Test the pinned measures reach (1 − eps) of λ and 1 − λ."""
        m1, m2 = (region.measure for region in node.block.regions)
        assert m1 >= 0.5 * LAM
        assert m2 >= 0.5 * (1.0 - LAM)

    def test_unlabeled_region_is_free(self, unit_square, base_value):
        """Test a region without a label counts as free."""
        block = make_block(GAMMA, LAM, unit_square.centered(), 0.5, audit_samples=0)
        bare = FieldNode(unit_square.centered(), base_value, block, (RegionLabel(base_value, corner=1),))
        table = region_measures(RegionTree(unit_square, bare))
        assert set(table.corners) == {1}
        assert table.free == pytest.approx(1.0 - block.regions[0].measure)


class TestFieldTree:
    """Tests for evaluating fields and counting leaves over placements."""

    def test_leaves_count_copies(self, two_copies):
        """Test two root copies double every leaf."""
        leaves = field_leaves(two_copies)
        assert len(leaves) == 2
        assert all(leaf.copies == 2 for leaf in leaves)

    def test_value_on_plateau(self, two_copies, node, base_value):
        """Test the second copy takes the first plateau value at a stripe center."""
        stripe = next(node.block.regions[0].tilings[0].instances())
        point = stripe.center + np.array([1.5, 0.5])
        values = two_copies.values(point)
        expected = (base_value + (1.0 - LAM) * GAMMA.as_pair()).flat()
        np.testing.assert_allclose(values[0], expected, atol=1e-12)

    def test_base_outside_placements(self, node, base_value):
        """Test points off every placement see the affine base."""
        Omega = Domain((Box([0.5, 0.5], [0.5, 0.5]), Box([1.5, 0.5], [0.5, 0.5])))
        tree = FieldTree(AffineBase.from_value(base_value), Omega, (Placement(node, Tiling.single(Omega.boxes[0])),))
        u, Du, V = tree.evaluate([[1.5, 0.5]])
        np.testing.assert_allclose(u[0], [0.75])
        np.testing.assert_allclose(Du[0], base_value.first)
        np.testing.assert_allclose(V[0], base_value.second)

    def test_base_is_divergence_free(self, base_value, rng):
        """Test the constant base flux has zero divergence."""
        tree = FieldTree(AffineBase.from_value(base_value), Domain((Box([0.5, 0.5], [0.5, 0.5]),)))
        divergence = field_divergence(tree, tree.domain.sample(rng, 10), step=1e-6)
        np.testing.assert_allclose(divergence, 0.0, atol=1e-9)


class TestAttach:
    """Tests for refining leaves."""

    def test_patch_reaches_every_copy(self, two_copies, node, base_value):
        """Test patching one template refines the leaf in both copies."""
        region = node.block.regions[0]
        tiling = region.tilings[0]
        value = node.labels[0].value
        child = _labeled_node(tiling.base, value, WaveVector([1.0], [0.0, 1.0], [[1.0, 0.0]]), corners=(3, 4))
        patched, renamed = attach(two_copies, {(id(node), 1): (Placement(child, tiling, region=1),)})

        assert renamed[id(node)].refined == frozenset({1})
        assert patched.roots[0].node is renamed[id(node)]
        by_corner = {leaf.label.corner: leaf for leaf in field_leaves(patched)}
        assert set(by_corner) == {2, 3, 4}
        assert by_corner[2].copies == 2
        assert by_corner[3].copies == 2 * tiling.count

    def test_empty_patch_keeps_tree(self, two_copies, node):
        """Test no patches leaves every template in place."""
        patched, renamed = attach(two_copies, {})
        assert patched.roots[0].node is node
        assert renamed[id(node)] is node


class TestL1Deviation:
    """Tests for the ∫|Dφ| bound."""

    def test_matches_leaves_and_free_part(self, node, base_value, unit_square):
        """Test leaves contribute exactly and the free part at the widest spread."""
        jump = float(np.linalg.norm(GAMMA.as_pair().first))
        m1, m2 = (region.measure for region in node.block.regions)
        free = unit_square.volume - m1 - m2
        expected = (1.0 - LAM) * jump * m1 + LAM * jump * m2 + free * ((1.0 - LAM) * jump + 0.01)
        assert l1_deviation(node, base_value, slack=0.01) == pytest.approx(expected)


@pytest.fixture
def smooth_base(base_value):
    H = [[[0.4, 0.1], [0.1, -0.2]]]
    W = [[[0.0, 0.3], [-0.3, 0.0]]]
    return QuadraticBase.around(base_value, H, W, [0.5, 0.5], u0=[0.1])


class TestQuadraticBase:
    """Tests for the smooth base pair."""

    def test_value_at_center(self, smooth_base, base_value):
        """Test the center carries the configured pair and offset."""
        u, Du, V = smooth_base.evaluate([0.5, 0.5])
        np.testing.assert_allclose(u[0], [0.1])
        np.testing.assert_allclose(Du[0], base_value.first)
        np.testing.assert_allclose(V[0], base_value.second)
        assert smooth_base.value.allclose(base_value)

    def test_du_is_the_gradient(self, smooth_base, rng):
        """Test Dū agrees with central differences of ū."""
        X = rng.random((20, 2))
        _, Du, _ = smooth_base.evaluate(X)
        step = 1e-5
        for j in range(2):
            shift = np.zeros(2)
            shift[j] = step
            forward, backward = smooth_base.evaluate(X + shift)[0], smooth_base.evaluate(X - shift)[0]
            np.testing.assert_allclose((forward - backward) / (2.0 * step), Du[:, :, j], atol=1e-8)

    def test_flux_is_divergence_free(self, smooth_base, rng):
        """Test the rotation part of V̄ adds no divergence."""
        tree = FieldTree(smooth_base, Domain((Box([0.5, 0.5], [0.5, 0.5]),)))
        _, _, V = tree.evaluate([[0.9, 0.5]])
        assert not np.allclose(V[0], smooth_base.V)
        divergence = field_divergence(tree, tree.domain.sample(rng, 10), step=1e-5)
        np.testing.assert_allclose(divergence, 0.0, atol=1e-9)

    @pytest.mark.parametrize(
        "H, W",
        [
            ([[[0.4, 0.1], [0.0, -0.2]]], np.zeros((1, 2, 2))),
            (np.zeros((1, 2, 2)), [[[0.1, 0.3], [-0.3, 0.0]]]),
            (np.zeros((1, 3, 3)), np.zeros((1, 2, 2))),
        ],
    )
    def test_invalid_tensors(self, base_value, H, W):
        """Test a non-symmetric Hessian, a non-antisymmetric rotation and a wrong shape are refused."""
        with pytest.raises(ValidationException):
            QuadraticBase.around(base_value, H, W, [0.5, 0.5])

    def test_base_values(self, smooth_base, unit_square):
        """Test the pairs sampled over Ω start at the center and vary with x."""
        Omega = Domain((unit_square,))
        values = base_values(smooth_base, Omega, samples=8, seed=1)
        assert values[0].allclose(smooth_base.value)
        assert len(values) > 1
        assert len(base_values(AffineBase.from_value(smooth_base.value), Omega, seed=1)) == 1


class TestSmoothBaseTree:
    """Tests for perturbations placed on a smooth base."""

    @pytest.fixture
    def tree(self, smooth_base, node, unit_square):
        Omega = Domain((unit_square,))
        return FieldTree(smooth_base, Omega, (Placement(node, Tiling.single(unit_square)),))

    def test_boundary_keeps_the_base(self, tree):
        """Test the placed block leaves the smooth base untouched on ∂Ω."""
        assert boundary_check(tree, tree.domain, samples=128, seed=2) <= 1e-12

    def test_perturbation_adds_to_the_base(self, tree, smooth_base, node):
        """Test Du − Dū is the block's Dφ at every point."""
        X = tree.domain.sample(np.random.default_rng(5), 50)
        _, Du, V = tree.evaluate(X)
        _, Du0, V0 = smooth_base.evaluate(X)
        _, Dphi, Psi = node.evaluate(X - 0.5)
        np.testing.assert_allclose(Du - Du0, Dphi, atol=1e-12)
        np.testing.assert_allclose(V - V0, Psi, atol=1e-12)

    def test_deviation_bounds_sampled_distance(self, tree, smooth_base, node, base_value):
        """Test the leaf-based ∫|Dφ| bound covers the sampled distance to the bare base."""
        bare = FieldTree(smooth_base, tree.domain)
        estimate, half_width = l1_distance(tree, bare, tree.domain, samples=4000, seed=3)
        assert estimate > 0.0
        assert estimate <= l1_deviation(node, base_value, slack=0.5) + half_width

    def test_distance_to_itself(self, tree):
        """Test a tree is at distance zero from itself."""
        assert l1_distance(tree, tree, tree.domain, samples=200, seed=4) == (0.0, 0.0)
