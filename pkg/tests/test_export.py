"""Tests for CSV and raster exports."""

import numpy as np
import pytest
from PIL import Image

from app.models.block import Tiling
from app.models.field import AffineBase, FieldNode, FieldTree, Placement
from app.models.geometry import Box, Domain, MatrixPair, WaveVector
from app.services.block_service import make_block
from app.services.construction_service import default_base
from app.services.export_service import export_field, export_raster
from core.exceptions import ExportException


@pytest.fixture
def base_tree(two_branch, unit_interval):
    return FieldTree(default_base(two_branch), unit_interval)


@pytest.fixture
def oscillating_tree(unit_interval):
    """A single block on the unit interval over the base gradient 1.4."""
    box = unit_interval.boxes[0]
    block = make_block(WaveVector([1.0], [1.0], [[0.0]]), 0.5, box.centered(), 0.5, audit_samples=0)
    base = MatrixPair.scalar(1.4, 0.0)
    node = FieldNode(box.centered(), base, block)
    return FieldTree(AffineBase.from_value(base), unit_interval, (Placement(node, Tiling.single(box)),))


class TestExportField:
    """Tests for grid samples written as CSV."""

    def test_header_and_rows(self, two_branch, base_tree, unit_interval, out_dir):
        """Test the columns and the affine values at five grid points."""
        path = export_field(two_branch, base_tree, unit_interval, 5, out_dir / "field.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "x_1,u_1,Du_11,V_11,graph_gap"
        table = np.loadtxt(path, delimiter=",", skiprows=1)
        assert table.shape == (5, 5)
        np.testing.assert_allclose(table[:, 0], [0.0, 0.25, 0.5, 0.75, 1.0])
        np.testing.assert_allclose(table[:, 1], 1.4 * table[:, 0])
        np.testing.assert_allclose(table[:, 2], 1.4)
        np.testing.assert_allclose(table[:, 4], 0.6)

    def test_reproducible_values(self, two_branch, oscillating_tree, unit_interval, out_dir):
        """Test written values re-evaluate exactly at the written points."""
        path = export_field(two_branch, oscillating_tree, unit_interval, 33, out_dir / "osc.csv")
        table = np.loadtxt(path, delimiter=",", skiprows=1)
        u, Du, _ = oscillating_tree.evaluate(table[:, :1])
        np.testing.assert_array_equal(table[:, 1], u[:, 0])
        np.testing.assert_array_equal(table[:, 2], Du[:, 0, 0])

    def test_points_outside_domain_skipped(self, two_branch, out_dir):
        """Test lattice points outside an L-shaped domain are left out."""
        Omega = Domain((Box([0.5, 0.5], [0.5, 0.5]), Box([1.5, 0.5], [0.5, 0.5]), Box([0.5, 1.5], [0.5, 0.5])))
        tree = FieldTree(AffineBase.from_value(MatrixPair([[1.0, 0.0]], [[0.0, 1.0]])), Omega)
        path = export_field(two_branch, tree, Omega, 3, out_dir / "l.csv")
        table = np.loadtxt(path, delimiter=",", skiprows=1)
        assert table.shape == (8, 2 + 1 + 2 + 2 + 1)
        assert not any(np.allclose(row[:2], [2.0, 2.0]) for row in table)

    def test_grid_too_small(self, two_branch, base_tree, unit_interval, out_dir):
        """Test a single grid point per axis is refused."""
        with pytest.raises(ExportException):
            export_field(two_branch, base_tree, unit_interval, 1, out_dir / "field.csv")


class TestExportRaster:
    """Tests for PGM rasters."""

    def test_constant_field(self, base_tree, unit_interval, out_dir):
        """Test a constant component gives a black strip and equal sidecar bounds."""
        path = export_raster(base_tree, unit_interval, "du_norm", out_dir / "du.pgm", resolution=64)
        assert path.read_bytes().startswith(b"P5")
        with Image.open(path) as image:
            pixels = np.asarray(image)
        assert pixels.shape == (16, 64)
        assert np.all(pixels == 0)
        sidecar = (out_dir / "du.pgm.txt").read_text().splitlines()
        assert sidecar[0] == "component du_norm"
        assert float(sidecar[1].split()[1]) == float(sidecar[2].split()[1]) == pytest.approx(1.4)

    def test_full_range(self, oscillating_tree, unit_interval, out_dir):
        """Test an oscillating gradient uses both ends of the gray scale."""
        path = export_raster(oscillating_tree, unit_interval, "du_norm", out_dir / "osc.pgm", resolution=128)
        with Image.open(path) as image:
            pixels = np.asarray(image)
        assert pixels.min() == 0
        assert pixels.max() == 255

    def test_branch_labels(self, two_branch, base_tree, unit_interval, out_dir):
        """Test a field near ξ_1 is labeled by the first corner everywhere."""
        path = export_raster(base_tree, unit_interval, "branch_label", out_dir / "labels.pgm", s=two_branch, resolution=32)
        sidecar = path.with_suffix(".pgm.txt").read_text()
        assert "min 1\n" in sidecar
        assert "max 1\n" in sidecar

    def test_two_dimensional_outside_is_black(self, out_dir):
        """Test pixels outside an L-shaped domain are zero."""
        Omega = Domain((Box([0.5, 0.5], [0.5, 0.5]), Box([1.5, 0.5], [0.5, 0.5]), Box([0.5, 1.5], [0.5, 0.5])))
        tree = FieldTree(AffineBase.from_value(MatrixPair([[1.0, 0.0]], [[0.0, 1.0]])), Omega)
        path = export_raster(tree, Omega, "du_norm", out_dir / "l.pgm", resolution=8)
        with Image.open(path) as image:
            pixels = np.asarray(image)
        assert pixels.shape == (8, 8)
        assert np.all(pixels[:4, 4:] == 0)

    def test_scenario_required(self, base_tree, unit_interval, out_dir):
        """Test the graph gap needs a scenario."""
        with pytest.raises(ExportException):
            export_raster(base_tree, unit_interval, "graph_gap", out_dir / "gap.pgm")

    def test_unknown_component(self, base_tree, unit_interval, out_dir):
        """Test unknown components are refused."""
        with pytest.raises(ExportException):
            export_raster(base_tree, unit_interval, "curl", out_dir / "x.pgm")

    def test_three_dimensions_refused(self, out_dir):
        """Test rasters of three-dimensional domains are refused."""
        Omega = Domain((Box([0.5, 0.5, 0.5], [0.5, 0.5, 0.5]),))
        tree = FieldTree(AffineBase.from_value(MatrixPair.zeros(1, 3)), Omega)
        with pytest.raises(ExportException):
            export_raster(tree, Omega, "du_norm", out_dir / "cube.pgm")
