"""Tests for stage parameters, classification and stage application."""

import numpy as np
import pytest

from app.models.field import AffineBase, FieldTree
from app.models.geometry import Box, Domain, MatrixPair
from app.services.field_service import field_leaves
from app.services.stage_service import (
    apply_stage,
    classify_domain,
    lipschitz_estimate,
    run_stage,
    run_stage_on_leaves,
    stage_params,
)
from core.exceptions import DomainException, PreconditionException

LAM, MU, R, S, EPS = 0.7, 0.85, 0.05, 0.08, 0.3


@pytest.fixture
def upper_tree(unit_interval):
    """The constant field ζ_1(0.7, 0) = (1.4, 0) on the unit interval."""
    return FieldTree(AffineBase.from_value(MatrixPair.scalar(1.4, 0.0)), unit_interval)


@pytest.fixture(scope="module")
def first_stage(two_branch):
    Omega = Domain((Box([0.5], [0.5]),))
    tree = FieldTree(AffineBase.from_value(MatrixPair.scalar(1.4, 0.0)), Omega)
    return apply_stage(two_branch, tree, Omega, LAM, MU, R, S, EPS, grid=4, seed=11)


class TestStageParams:
    """Tests for derived stage tolerances."""

    def test_caps(self, two_branch, upper_tree, unit_interval):
        """Test ε′ is 0.9 of the smallest cap and ℓ′ falls back to the diameter for a constant field."""
        params = stage_params(two_branch, upper_tree, unit_interval, LAM, MU, R, S, EPS)
        assert params.eps_prime == pytest.approx(0.9 * min(params.caps.values()))
        assert params.caps["eps"] == pytest.approx(EPS / 2)
        assert params.caps["square"] == pytest.approx(1.0 - 1.0 / np.sqrt(2.0))
        assert params.lipschitz == 0.0
        assert params.ell_prime == pytest.approx(unit_interval.diameter)
        assert params.tau == params.eps_prime
        assert params.cube_cap == pytest.approx(min(params.ell_prime, EPS))

    def test_tau_override(self, two_branch, upper_tree, unit_interval):
        """Test a smaller step tolerance is taken."""
        params = stage_params(two_branch, upper_tree, unit_interval, LAM, MU, R, S, EPS, tau=1e-6)
        assert params.tau == 1e-6

    @pytest.mark.parametrize(
        "lam, mu, r, s_rad", [(0.5, 0.85, R, S), (0.85, 0.7, R, S), (LAM, MU, 0.08, 0.05), (LAM, MU, R, 0.2)]
    )
    def test_input_ranges(self, two_branch, upper_tree, unit_interval, lam, mu, r, s_rad):
        """Test λ, μ, r and s outside their ranges are domain errors."""
        with pytest.raises(DomainException):
            stage_params(two_branch, upper_tree, unit_interval, lam, mu, r, s_rad, EPS)


class TestLipschitzEstimate:
    """Tests for the sampled Lipschitz constant."""

    def test_affine_base(self, unit_interval):
        """Test a constant gradient has zero difference quotients."""
        tree = FieldTree(AffineBase.from_value(MatrixPair.scalar(0.3, 0.1)), unit_interval)
        assert lipschitz_estimate(tree, unit_interval, pairs=500) == 0.0


class TestClassifyDomain:
    """Tests for labeling grid cells by branch."""

    def test_constant_upper_field(self, two_branch, upper_tree, unit_interval):
        """Test a field on the first branch labels every cell 1."""
        classification = classify_domain(two_branch, upper_tree, unit_interval, R, LAM, grid=4)
        assert len(classification.cells) == 4
        assert all(cell.label == 1 for cell in classification.cells)
        assert classification.labeled_measure(1) == pytest.approx(1.0)
        assert classification.F0_measure == 0.0

    def test_anchor_field_is_unlabeled(self, two_branch, unit_interval):
        """Test a field sitting at an anchor stays in F₀."""
        tree = FieldTree(AffineBase.from_value(MatrixPair.scalar(0.5, 0.0)), unit_interval)
        classification = classify_domain(two_branch, tree, unit_interval, R, LAM, grid=2, depth=1)
        assert classification.F0_measure == pytest.approx(1.0)
        assert classification.deficit == pytest.approx(1.0)

    def test_grid_must_be_positive(self, two_branch, upper_tree, unit_interval):
        """Test a zero grid is a domain error."""
        with pytest.raises(DomainException):
            classify_domain(two_branch, upper_tree, unit_interval, R, LAM, grid=0)


class TestApplyStage:
    """Tests for one stage on a domain."""

    def test_all_bounds_pass(self, first_stage):
        """Test every stage bound holds."""
        failing = [row.name for row in first_stage.report.measures if not row.passed]
        assert failing == []
        assert first_stage.report.passed

    def test_cubes_share_one_template(self, first_stage):
        """Test equal cells reuse a single step template."""
        assert len(first_stage.cubes) == 1
        assert first_stage.report.cube_count == 4
        assert first_stage.cubes[0].label == 1

    def test_branch_persistence(self, first_stage):
        """Test branch 1 keeps at least λ/μ of its measure."""
        rows = {row.name: row for row in first_stage.report.measures}
        assert rows["f_branch_1_persistence"].achieved >= LAM / MU
        assert rows["e_pinned_measure"].achieved >= 1.0 - EPS

    def test_leaves_at_mu_corners(self, first_stage):
        """Test the new leaves are pinned with μ."""
        pinned = [leaf for leaf in field_leaves(first_stage.tree) if leaf.label.pinned]
        assert pinned
        assert {leaf.label.lam for leaf in pinned} == {MU}

    def test_run_stage_returns_tree_and_report(self, two_branch, upper_tree, unit_interval):
        """Test the tuple form agrees with the stage result."""
        tree, report = run_stage(two_branch, upper_tree, unit_interval, LAM, MU, R, S, EPS, grid=2, seed=11)
        assert report.passed
        assert len(tree.roots) == 2

    def test_value_outside_sigma(self, two_branch, unit_interval):
        """Test a field outside Σ^r(λ) fails the precondition."""
        tree = FieldTree(AffineBase.from_value(MatrixPair.scalar(5.0, 0.0)), unit_interval)
        with pytest.raises(PreconditionException):
            apply_stage(two_branch, tree, unit_interval, LAM, MU, R, S, EPS)


class TestStageOnLeaves:
    """Tests for refining labeled leaves of an earlier stage."""

    def test_no_leaves(self, two_branch, upper_tree):
        """Test a bare field has nothing to refine."""
        with pytest.raises(PreconditionException):
            run_stage_on_leaves(two_branch, upper_tree, MU, 0.9, S, 0.1, 0.1, stage=2)

    @pytest.mark.slow
    def test_second_stage(self, two_branch, first_stage):
        """Test a second stage on the leaves passes its bounds and keeps the first branch."""
        result = run_stage_on_leaves(two_branch, first_stage.tree, MU, 0.9, S, 0.1, 0.1, stage=2, seed=11)
        assert result.report.passed
        assert result.report.region == "leaves"
        prior = {row.name: row for row in first_stage.report.measures}
        rows = {row.name: row for row in result.report.measures}
        assert rows["f_branch_1_persistence"].achieved > 0.0
        assert prior["f_branch_1_measure"].achieved > 0.0
