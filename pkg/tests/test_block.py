"""Tests for building blocks."""

import numpy as np
import pytest

from app.models.block import Tiling
from app.models.geometry import Box, WaveVector
from app.services.block_service import block_report, cover_region, eval_block, make_block, make_profile, near_cubic
from core.config import config
from core.exceptions import ConstructionException, DomainException

LINE = WaveVector([1.0], [1.0], [[0.0]])
AXIS = WaveVector([1.0], [1.0, 0.0], [[0.0, 1.0]])
OBLIQUE = WaveVector([1.0], [0.6, 0.8], [[0.8, -0.6]])
MATRIX = WaveVector([1.0, -2.0], [0.0, 1.0], [[0.5, 0.0], [1.0, 0.0]])


class TestProfile:
    """Tests for the periodic profile."""

    @pytest.mark.parametrize("lam", [0.2, 0.5, 0.85])
    def test_mean_zero_and_plateaus(self, lam):
        """Test ∫q = 0 over one period and the plateau values."""
        profile = make_profile(lam, 0.3)
        t = np.linspace(0.0, 1.0, 200001)
        assert np.trapezoid(profile.q(t), t) == pytest.approx(0.0, abs=1e-6)
        assert profile.q(np.array([np.mean(profile.I1)]))[0] == pytest.approx(1.0 - lam)
        assert profile.q(np.array([np.mean(profile.I2)]))[0] == pytest.approx(-lam)

    def test_derivative(self):
        """Test dq agrees with central differences of q."""
        profile = make_profile(0.3, 0.5)
        t = np.linspace(0.0, 1.0, 20001)
        np.testing.assert_allclose(profile.dq(t)[1:-1], np.gradient(profile.q(t), t)[1:-1], atol=2e-2)

    def test_plateau_lengths(self):
        """Test the plateaus have lengths cλ and c(1 − λ)."""
        profile = make_profile(0.4, 0.3)
        c = 0.7 ** (1.0 / 3.0)
        assert profile.I1[1] - profile.I1[0] == pytest.approx(c * 0.4)
        assert profile.I2[1] - profile.I2[0] == pytest.approx(c * 0.6)

    @pytest.mark.parametrize("lam, eps", [(-0.1, 0.3), (1.1, 0.3), (0.5, 0.0), (0.5, 1.0)])
    def test_out_of_range(self, lam, eps):
        """Test λ and eps outside their ranges are domain errors."""
        with pytest.raises(DomainException):
            make_profile(lam, eps)


class TestMakeBlock:
    """Tests for block construction and its bounds."""

    @pytest.mark.parametrize(
        "gamma, box",
        [
            (LINE, Box([0.5], [0.5])),
            (AXIS, Box([0.5, 0.5], [0.5, 0.5])),
            (MATRIX, Box([0.0, 1.0], [0.25, 0.5])),
            (OBLIQUE, Box([0.5, 0.5], [0.5, 0.5])),
        ],
    )
    def test_all_bounds_pass(self, gamma, box):
        """Test every analytic, exact and sampled row passes."""
        block = make_block(gamma, 0.4, box, 0.5, seed=3)
        rows = block_report(block, samples=500, seed=4)
        failing = [row.name for row in rows if not row.passed]
        assert failing == []

    def test_axis_plateaus_are_exact(self, unit_square):
        """Test (Dφ, Ψ) equals (1 − λ)γ at the centers of the first plateau's stripes."""
        lam = 0.4
        block = make_block(AXIS, lam, unit_square, 0.3, seed=1)
        plateau = block.regions[0]
        assert plateau.exact
        centers = np.array([box.center for box in plateau.tilings[0].instances()])
        _, Dphi, Psi = eval_block(block, centers)
        np.testing.assert_allclose(Dphi, np.broadcast_to(plateau.offset.first, Dphi.shape), atol=1e-12)
        np.testing.assert_allclose(Psi, np.broadcast_to(plateau.offset.second, Psi.shape), atol=1e-12)
        assert plateau.offset.allclose((1.0 - lam) * AXIS.as_pair())

    def test_compact_support(self, unit_square):
        """Test the block vanishes on the box boundary and outside it."""
        block = make_block(OBLIQUE, 0.5, unit_square, 0.5, audit_samples=0)
        points = np.array([[0.0, 0.3], [1.0, 0.7], [0.4, 1.0], [1.5, 0.5]])
        phi, Dphi, Psi = eval_block(block, points)
        assert np.all(phi == 0.0) and np.all(Dphi == 0.0) and np.all(Psi == 0.0)

    def test_single_point_shapes(self, unit_square):
        """Test a single point returns unbatched arrays."""
        block = make_block(AXIS, 0.5, unit_square, 0.5, audit_samples=0)
        phi, Dphi, Psi = eval_block(block, [0.3, 0.6])
        assert phi.shape == (1,)
        assert Dphi.shape == (1, 2)
        assert Psi.shape == (1, 2)

    @pytest.mark.parametrize("lam", [0.0, 1.0])
    def test_trivial_lambda(self, unit_square, lam):
        """Test λ ∈ {0, 1} gives the zero block with one full plateau."""
        block = make_block(AXIS, lam, unit_square, 0.3)
        assert block.trivial
        assert block.ell == 0
        measures = {region.index: region.measure for region in block.regions}
        full = 1 if lam == 1.0 else 2
        assert measures[full] >= 0.7 * unit_square.volume
        assert measures[3 - full] == 0.0
        assert all(row.passed for row in block_report(block, samples=200))

    def test_period_cap(self, unit_square, monkeypatch):
        """Test exhausting the oscillation cap names the failing bound and the ℓ reached."""
        monkeypatch.setattr(config, "PERIOD_CAP", 4)
        with pytest.raises(ConstructionException) as exc:
            make_block(AXIS, 0.4, unit_square, 0.3)
        assert exc.value.data["check"] == "containment"
        assert exc.value.data["ell"] == 4
        assert "containment fails at ℓ = 4" in exc.value.message

    def test_smaller_eps_needs_more_periods(self, unit_square):
        """Test tighter tolerances raise the oscillation count."""
        loose = make_block(AXIS, 0.5, unit_square, 0.5, audit_samples=0)
        tight = make_block(AXIS, 0.5, unit_square, 0.1, audit_samples=0)
        assert tight.ell > loose.ell
        assert tight.sup_phi_bound < 0.1


class TestCoverRegion:
    """Tests for covering plateau regions by tilings."""

    def test_exact_region_in_one_dimension(self):
        """Test one-dimensional plateaus are their own cover."""
        block = make_block(LINE, 0.5, Box([0.5], [0.5]), 0.5, audit_samples=0)
        region = block.regions[1]
        assert cover_region(region, fill=0.9) == region.tilings

    def test_stripes_become_near_cubic(self, unit_square):
        """Test axis-aligned stripes are partitioned without loss into boxes of aspect at most 2."""
        block = make_block(AXIS, 0.5, unit_square, 0.5, audit_samples=0)
        region = block.regions[1]
        (stripes,) = region.tilings
        (tiling,) = cover_region(region, fill=0.9)
        assert tiling.measure == pytest.approx(region.measure, rel=1e-12)
        assert tiling.counts[0] == stripes.counts[0]
        assert tiling.counts[1] > 1
        assert tiling.base.radii.max() <= 2.0 * tiling.base.radii.min()
        assert stripes.base.contains_box(tiling.base, tol=1e-15)

    def test_near_cubic_keeps_pieces_inside(self):
        """Test every slice of a long box lies in the box and the slices tile it."""
        box = Box([0.0, 0.0], [0.32, 0.01])
        tiling = near_cubic(Tiling.single(box))
        assert tiling.counts == (32, 1)
        instances = list(tiling.instances())
        assert all(box.contains_box(piece, tol=1e-12) for piece in instances)
        assert sum(piece.volume for piece in instances) == pytest.approx(box.volume)
        inside, _ = tiling.locate(box.sample(np.random.default_rng(0), 200))
        assert inside.all()

    def test_oblique_region_cover(self, unit_square):
        """Test a slab region is covered from inside to the requested fill."""
        block = make_block(OBLIQUE, 0.5, unit_square, 0.9, audit_samples=0)
        region = block.regions[0]
        assert not region.exact
        tilings = cover_region(region, fill=0.5, depth=9)
        assert sum(tiling.measure for tiling in tilings) >= 0.5 * region.measure
        centers = np.array([tiling.base.center for tiling in tilings])
        assert np.all(region.slab.contains(centers))
        _, Dphi, _ = eval_block(block, centers)
        np.testing.assert_allclose(
            Dphi, np.broadcast_to(region.offset.first, Dphi.shape), atol=1e-10
        )
