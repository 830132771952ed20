"""Scenarios and Σ-membership witnesses."""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from app.models.geometry import MatrixPair, WaveVector

KappaMap = Callable[[MatrixPair], Sequence[float]]
GammaMap = Callable[[MatrixPair], Sequence[WaveVector]]
# σ acts on arrays of shape (..., m, n)
SigmaMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Decomposition:
    """Witness Y = q·ζ_i(λ′, ρ) + (1 − q)·π_i(ρ′) of Y ∈ Σ^r(λ); i is 1-based."""

    i: int
    lambda_prime: float
    q: float
    rho: MatrixPair
    rho_prime: MatrixPair
    target: MatrixPair
    residual: float = 0.0


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    Configuration family ρ ↦ (κ_i(ρ), γ_i(ρ)) with a graph map σ.

    `inverter(i, λ, Y)` optionally solves ζ_i(λ, ρ) = Y in closed form and
    returns ρ (or None); `decomposer(scenario, r, λ, Y)` optionally returns a
    Σ^r(λ) witness in closed form. Without them the scenario service falls
    back to seeded least squares.
    """

    name: str
    m: int
    n: int
    N: int
    r0: float
    delta1: float
    delta2: float
    kappa_map: KappaMap = field(repr=False)
    gamma_map: GammaMap = field(repr=False)
    sigma: SigmaMap = field(repr=False)
    inverter: Optional[Callable[[int, float, MatrixPair], Optional[MatrixPair]]] = field(
        default=None, repr=False
    )
    decomposer: Optional[Callable[["Scenario", float, float, MatrixPair], Optional[Decomposition]]] = field(
        default=None, repr=False
    )
    graph_tol: float = 1e-8

    @property
    def rho_dim(self) -> int:
        """Dimension of the parameter ρ ∈ R^{m×n} × R^{m×n}."""
        return 2 * self.m * self.n

    def rho_from_flat(self, vector) -> MatrixPair:
        return MatrixPair.from_flat(vector, self.m, self.n)

    def sigma_of(self, A: np.ndarray) -> np.ndarray:
        return np.asarray(self.sigma(np.asarray(A, dtype=float)), dtype=float)
