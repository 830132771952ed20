"""Tests for corner staircases and steps inside Σ."""

from dataclasses import replace

import numpy as np
import pytest

from app.models.geometry import Box, MatrixPair
from app.models.scenario import Decomposition
from app.services.scenario_service import config_at, decompose_Sigma, zeta
from app.services.staircase_service import (
    oscillate_to_corners,
    plan_staircase,
    step_in_sigma,
    step_weights,
    verify_staircase,
    verify_step,
)
from app.services.tn_service import corner_weights, scaled_tn
from core.exceptions import DomainException, PreconditionException

SEGMENT = Box([0.5], [0.5])


class TestPlanStaircase:
    """Tests for round counts and block tolerances."""

    @pytest.mark.parametrize("delta, ell, eps", [(0.5, 1, 1 / 32), (0.2, 2, 1 / 128)])
    def test_symmetric_plan(self, symmetric_tn, delta, ell, eps):
        """Test ℓ and the dyadic block tolerance for τ = 1/4."""
        plan = plan_staircase(symmetric_tn, 1, 0.5, delta)
        assert plan.tau == pytest.approx(0.25)
        assert plan.ell == ell
        assert plan.eps_inner == eps
        assert plan.block_count == 1 + 2 * ell

    def test_losses_fit_delta(self, t4_tn):
        """Test the planned losses stay inside the δ budget."""
        plan = plan_staircase(t4_tn, 2, 0.3, 0.1)
        assert plan.block_count * plan.eps_inner < 0.1
        assert (1.0 - plan.eps_inner) ** (2 * plan.block_count) >= np.sqrt(0.9)
        assert 1.0 - plan.tau**plan.ell >= np.sqrt(0.9)

    @pytest.mark.parametrize("lam, delta", [(0.5, 0.0), (0.5, 1.0), (1.5, 0.5)])
    def test_out_of_range(self, symmetric_tn, lam, delta):
        """Test δ and λ outside their ranges are domain errors."""
        with pytest.raises(DomainException):
            plan_staircase(symmetric_tn, 1, lam, delta)


class TestOscillateToCorners:
    """Tests for staircases reaching the corners."""

    @pytest.mark.parametrize("delta", [0.2, 0.5])
    @pytest.mark.parametrize("i, lam", [(1, 0.5), (2, 0.3), (1, 0.0)])
    def test_corner_measures(self, symmetric_tn, i, lam, delta):
        """Test every corner gets at least (1 − δ)ν_j of the box."""
        node, tree = oscillate_to_corners(symmetric_tn, i, lam, SEGMENT, delta, seed=5)
        weights = corner_weights(symmetric_tn, i, lam)
        for j in (1, 2):
            assert tree.measure(j) >= (1.0 - delta) * weights[j - 1] * SEGMENT.volume
        assert tree.measure(1) + tree.measure(2) >= (1.0 - delta) * SEGMENT.volume
        assert node.sup_phi_bound < delta

    def test_entry_value(self, symmetric_tn):
        """Test the staircase starts from λξ_i + (1 − λ)π_i."""
        node, _ = oscillate_to_corners(symmetric_tn, 2, 0.4, SEGMENT, 0.5)
        assert node.base_value.allclose(symmetric_tn.point(2, 0.4))

    def test_lambda_one_is_a_single_corner(self, symmetric_tn):
        """Test λ = 1 needs no walk and pins one corner."""
        node, tree = oscillate_to_corners(symmetric_tn, 2, 1.0, SEGMENT, 0.5)
        assert node.children == ()
        assert tree.measure(1) == 0.0
        assert tree.measure(2) >= 0.5 * SEGMENT.volume

    def test_leaf_values_are_corners(self, symmetric_tn):
        """Test every pinned leaf carries its corner value."""
        _, tree = oscillate_to_corners(symmetric_tn, 1, 0.5, SEGMENT, 0.5)
        for leaf in tree.leaves:
            if leaf.label.pinned:
                assert leaf.label.value.allclose(symmetric_tn.xi(leaf.label.corner), atol=1e-12)

    def test_verify_rows(self, symmetric_tn):
        """Test the verification rows are named and all pass."""
        plan = plan_staircase(symmetric_tn, 1, 0.5, 0.5)
        node, tree = oscillate_to_corners(symmetric_tn, 1, 0.5, SEGMENT, 0.5, verify=False)
        rows = verify_staircase(plan, node, tree, samples=128, seed=2)
        assert [row.name for row in rows] == [
            "corner_1_measure",
            "corner_2_measure",
            "pinned_measure",
            "sup_phi",
            "containment",
        ]
        assert all(row.passed for row in rows)

    @pytest.mark.parametrize("delta", [0.2, 0.5])
    @pytest.mark.parametrize("i, lam", [(1, 0.5), (2, 0.3)])
    def test_t4_corner_measures(self, t4_tn, unit_square, i, lam, delta):
        """Test the four-corner staircase on the unit square gives every corner (1 − δ)ν_j of the square."""
        node, tree = oscillate_to_corners(t4_tn, i, lam, unit_square, delta, seed=5)
        weights = corner_weights(t4_tn, i, lam)
        assert np.all(weights > 0.0)
        for j in range(1, 5):
            assert tree.measure(j) >= (1.0 - delta) * weights[j - 1] * unit_square.volume
        assert node.sup_phi_bound < delta

    def test_t4_nested_boxes_are_near_cubic(self, t4_tn, unit_square):
        """Test every nested block of the four-corner staircase sits on a box of aspect at most 2."""
        node, _ = oscillate_to_corners(t4_tn, 1, 0.5, unit_square, 0.5, seed=5)
        stack, depth = [node], 0
        while stack:
            current = stack.pop()
            assert current.box.radii.max() <= 2.0 * current.box.radii.min()
            depth = max(depth, current.depth)
            stack.extend(placement.node for placement in current.children)
        assert depth == 5


@pytest.fixture(scope="module")
def interior_dec(two_branch):
    target = 0.5 * zeta(two_branch, 1, 0.6, MatrixPair.scalar(0.0, 0.0)) + 0.5 * MatrixPair.scalar(0.0, 0.0)
    return decompose_Sigma(two_branch, 0.05, 0.7, target)


class TestStepInSigma:
    """Tests for one push from Σ^r(λ) into Σ^r(μ)."""

    def test_interior_point(self, two_branch, interior_dec):
        """Test an interior combination reaches the μ-corners on most of the box."""
        assert interior_dec is not None and 0.0 < interior_dec.q < 1.0
        node, tree = step_in_sigma(two_branch, interior_dec, 0.7, 0.85, 0.05, SEGMENT, 0.3, seed=9)
        top = scaled_tn(config_at(two_branch, interior_dec.rho), 0.85)
        bottom = scaled_tn(config_at(two_branch, interior_dec.rho_prime), 0.85)
        weights = step_weights(interior_dec, 0.85, top, bottom)
        assert weights.sum() == pytest.approx(1.0)
        for j in (1, 2):
            assert tree.measure(j) >= 0.7 * weights[j - 1] * SEGMENT.volume
        assert node.sup_phi_bound < 0.3
        assert node.base_value.allclose(interior_dec.target)

    def test_corner_labels_use_mu(self, two_branch, interior_dec):
        """Test pinned leaves sit on ζ_j(μ, ·) and record μ."""
        _, tree = step_in_sigma(two_branch, interior_dec, 0.7, 0.85, 0.05, SEGMENT, 0.3, seed=9, verify=False)
        pinned = [leaf for leaf in tree.leaves if leaf.label.pinned]
        assert pinned
        assert all(leaf.label.lam == 0.85 for leaf in pinned)

    def test_mu_below_lambda_rejected(self, two_branch, interior_dec):
        """Test μ < λ is a domain error."""
        with pytest.raises(DomainException):
            step_in_sigma(two_branch, interior_dec, 0.7, 0.65, 0.05, SEGMENT, 0.3)

    def test_tau_range(self, two_branch, interior_dec):
        """Test τ outside (0, 1) is a domain error."""
        with pytest.raises(DomainException):
            step_in_sigma(two_branch, interior_dec, 0.7, 0.85, 0.05, SEGMENT, 1.0)

    def test_inconsistent_decomposition(self, two_branch, interior_dec):
        """Test a decomposition that misses its target is a precondition failure."""
        broken = replace(interior_dec, target=interior_dec.target + MatrixPair.scalar(0.5, 0.0))
        with pytest.raises(PreconditionException):
            step_in_sigma(two_branch, broken, 0.7, 0.85, 0.05, SEGMENT, 0.3)


@pytest.fixture(scope="module")
def random_decompositions(two_branch):
    """Twenty witnesses with random branch, λ′ ∈ [0.6, 0.7], q ∈ (0.05, 0.95) and ρ = ρ′ in a small square."""
    rng = np.random.default_rng(2024)
    decompositions = []
    for _ in range(20):
        i = int(rng.integers(1, 3))
        lambda_prime = float(rng.uniform(0.6, 0.7))
        q = float(rng.uniform(0.05, 0.95))
        rho = MatrixPair.scalar(*rng.uniform(-0.025, 0.025, size=2))
        target = q * zeta(two_branch, i, lambda_prime, rho) + (1.0 - q) * config_at(two_branch, rho).pi(i)
        decompositions.append(Decomposition(i, lambda_prime, q, rho, rho, target))
    return decompositions


@pytest.mark.slow
class TestStepInSigmaRandom:
    """Tests for steps from random decomposed points."""

    @pytest.mark.parametrize("index", range(20))
    def test_every_bound_holds(self, two_branch, random_decompositions, index):
        """Test the corner, pinned, sup|φ| and membership rows all pass."""
        dec = random_decompositions[index]
        node, tree = step_in_sigma(two_branch, dec, 0.7, 0.85, 0.05, SEGMENT, 0.3, seed=index, verify=False)
        top = scaled_tn(config_at(two_branch, dec.rho), 0.85)
        bottom = scaled_tn(config_at(two_branch, dec.rho_prime), 0.85)
        rows = verify_step(two_branch, dec, 0.85, 0.05, 0.3, node, tree, top, bottom, seed=index)
        assert [row.name for row in rows if not row.passed] == []
        assert node.base_value.allclose(dec.target)
