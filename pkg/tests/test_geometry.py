"""Tests for matrix pairs, wave vectors, boxes and domains."""

import numpy as np
import pytest

from app.models.geometry import Box, Domain, MatrixPair, Segment, WaveVector, segment_distance
from core.exceptions import ValidationException


class TestMatrixPair:
    """Tests for pair arithmetic and keys."""

    def test_arithmetic(self):
        """Test addition, scaling and negation act slotwise."""
        x = MatrixPair.scalar(1.0, 2.0)
        y = MatrixPair.scalar(0.5, -1.0)
        assert (x + y).allclose(MatrixPair.scalar(1.5, 1.0))
        assert (x - y).allclose(MatrixPair.scalar(0.5, 3.0))
        assert (2.0 * x).allclose(MatrixPair.scalar(2.0, 4.0))
        assert (-x).allclose(MatrixPair.scalar(-1.0, -2.0))

    def test_flat_round_trip(self):
        """Test from_flat inverts flat."""
        pair = MatrixPair([[1.0, 2.0]], [[3.0, 4.0]])
        assert MatrixPair.from_flat(pair.flat(), 1, 2).allclose(pair)

    def test_shape_mismatch_rejected(self):
        """Test slots of different shapes are rejected."""
        with pytest.raises(ValidationException):
            MatrixPair([[1.0, 2.0]], [[1.0]])

    def test_non_finite_rejected(self):
        """Test NaN entries are rejected."""
        with pytest.raises(ValidationException):
            MatrixPair.scalar(float("nan"), 0.0)

    def test_key_rounds(self):
        """Test nearly equal pairs share a key."""
        assert MatrixPair.scalar(0.1 + 0.2, 0.0).key() == MatrixPair.scalar(0.3, 0.0).key()

    def test_values_are_read_only(self):
        """Test stored arrays cannot be mutated."""
        pair = MatrixPair.scalar(1.0, 2.0)
        with pytest.raises(ValueError):
            pair.first[0, 0] = 5.0


class TestWaveVector:
    """Tests for wave cone elements."""

    def test_flux_must_annihilate_direction(self):
        """Test B·a ≠ 0 is rejected."""
        with pytest.raises(ValidationException):
            WaveVector([1.0], [1.0, 0.0], [[1.0, 0.0]])

    def test_as_pair(self):
        """Test the gradient slot is the tensor product p ⊗ a."""
        gamma = WaveVector([1.0, 2.0], [0.0, 1.0], [[3.0, 0.0], [4.0, 0.0]])
        pair = gamma.as_pair()
        np.testing.assert_allclose(pair.first, [[0.0, 1.0], [0.0, 2.0]])
        np.testing.assert_allclose(pair.second, gamma.B)

    def test_from_pair_factors(self):
        """Test a rank-one pair factors back into the same pair."""
        gamma = WaveVector([2.0], [0.6, 0.8], [[0.8, -0.6]])
        again = WaveVector.from_pair(gamma.as_pair())
        assert again.as_pair().allclose(gamma.as_pair(), atol=1e-10)

    def test_from_pair_rejects_rank_two(self):
        """Test a rank-two gradient slot is not in the wave cone."""
        with pytest.raises(ValidationException):
            WaveVector.from_pair(MatrixPair(np.eye(2), np.zeros((2, 2))))

    def test_oriented_keeps_pair(self):
        """Test flipping the direction keeps the pair and makes a positive."""
        gamma = WaveVector([1.0], [-1.0, 0.0], [[0.0, 1.0]])
        oriented = gamma.oriented()
        assert oriented.a[0] > 0
        assert oriented.as_pair().allclose(gamma.as_pair())

    def test_axis(self):
        """Test coordinate directions report their axis."""
        assert WaveVector([1.0], [0.0, 2.0], [[1.0, 0.0]]).axis == 1
        assert WaveVector([1.0], [1.0, 1.0], [[1.0, -1.0]]).axis is None


class TestBox:
    """Tests for open axis-aligned boxes."""

    def test_volume_and_radius(self):
        """Test volume and rad(Q) of a rectangle."""
        box = Box([0.0, 0.0], [1.0, 0.5])
        assert box.volume == pytest.approx(2.0)
        assert box.radius == 1.0

    def test_contains_is_open(self, unit_square):
        """Test boundary points are outside unless closed."""
        points = np.array([[0.5, 0.5], [1.0, 0.5]])
        assert unit_square.contains(points).tolist() == [True, False]
        assert unit_square.contains(points, closed=True).tolist() == [True, True]

    def test_subdivide_partitions(self, unit_square):
        """Test the dyadic children tile the parent."""
        children = unit_square.subdivide()
        assert len(children) == 4
        assert sum(child.volume for child in children) == pytest.approx(unit_square.volume)
        assert all(unit_square.contains_box(child) for child in children)

    def test_grid(self, unit_square):
        """Test a 2×3 grid has six equal boxes."""
        boxes = list(unit_square.grid([2, 3]))
        assert len(boxes) == 6
        assert all(box.volume == pytest.approx(1.0 / 6.0) for box in boxes)

    def test_nonpositive_width_rejected(self):
        """Test zero half widths are rejected."""
        with pytest.raises(ValidationException):
            Box([0.0], [0.0])

    def test_sample_inside(self, unit_square, rng):
        """Test samples fall inside the closed box."""
        assert np.all(unit_square.contains(unit_square.sample(rng, 200), closed=True))


class TestDomain:
    """Tests for finite unions of boxes."""

    def test_overlap_rejected(self):
        """Test overlapping boxes are rejected."""
        with pytest.raises(ValidationException):
            Domain((Box([0.0], [1.0]), Box([0.5], [1.0])))

    def test_union_volume_and_bounds(self):
        """Test an L-shaped union."""
        Omega = Domain((Box([0.5, 0.5], [0.5, 0.5]), Box([1.5, 0.5], [0.5, 0.5]), Box([0.5, 1.5], [0.5, 0.5])))
        assert Omega.volume == pytest.approx(3.0)
        np.testing.assert_allclose(Omega.bounding_box.lo, [0.0, 0.0])
        np.testing.assert_allclose(Omega.bounding_box.hi, [2.0, 2.0])
        assert not Omega.contains([[1.5, 1.5]])[0]

    def test_mixed_dimensions_rejected(self):
        """Test boxes of different dimensions are rejected."""
        with pytest.raises(ValidationException):
            Domain((Box([0.0], [1.0]), Box([5.0, 5.0], [1.0, 1.0])))

    def test_sample_inside(self, rng):
        """Test samples fall inside the union."""
        Omega = Domain((Box([0.5], [0.5]), Box([3.0], [1.0])))
        assert np.all(Omega.contains(Omega.sample(rng, 300), closed=True))


class TestSegment:
    """Tests for segment distances."""

    def test_distance_to_interior_and_endpoint(self):
        """Test perpendicular and endpoint distances."""
        segment = Segment(MatrixPair.scalar(0.0, 0.0), MatrixPair.scalar(2.0, 0.0))
        assert segment_distance(MatrixPair.scalar(1.0, 0.5), segment) == pytest.approx(0.5)
        assert segment_distance(MatrixPair.scalar(3.0, 0.0), segment) == pytest.approx(1.0)
        assert segment.point(0.25).allclose(MatrixPair.scalar(0.5, 0.0))
