"""T_N configurations and their cyclic coefficient matrices."""

from dataclasses import dataclass

import numpy as np

from app.models.geometry import MatrixPair, Segment, WaveVector


@dataclass(frozen=True, eq=False)
class CoeffMatrix:
    """Cyclic barycentric coefficients, nu[i, j] = ν_i^j (0-based storage)."""

    nu: np.ndarray

    @property
    def N(self) -> int:
        return self.nu.shape[0]

    def row(self, i: int) -> np.ndarray:
        """Row of the 1-based index i."""
        return self.nu[(i - 1) % self.N]


@dataclass(frozen=True, eq=False)
class TNConfig:
    """
    A T_N configuration (ρ, {γ_i}, {κ_i}).

    `gammas` keeps the supplied wave vectors; `steps` holds the same jumps as
    pairs with the last one recomputed as minus the sum of the others, so that
    the anchors close up exactly. Indices in the public helpers are 1-based
    and taken mod N.
    """

    rho: MatrixPair
    gammas: tuple[WaveVector, ...]
    kappas: np.ndarray
    steps: tuple[MatrixPair, ...]
    pis: tuple[MatrixPair, ...]
    xis: tuple[MatrixPair, ...]
    chis: np.ndarray

    @property
    def N(self) -> int:
        return len(self.gammas)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rho.shape

    def index(self, i: int) -> int:
        return (i - 1) % self.N

    def xi(self, i: int) -> MatrixPair:
        return self.xis[self.index(i)]

    def pi(self, i: int) -> MatrixPair:
        return self.pis[self.index(i)]

    def gamma(self, i: int) -> WaveVector:
        return self.gammas[self.index(i)]

    def kappa(self, i: int) -> float:
        return float(self.kappas[self.index(i)])

    def chi(self, i: int) -> float:
        return float(self.chis[self.index(i)])

    def segments(self) -> list[Segment]:
        """The segments [ξ_j, π_j] whose union is 𝒯."""
        return [Segment(xi, pi) for xi, pi in zip(self.xis, self.pis)]

    def point(self, i: int, lam: float) -> MatrixPair:
        """λξ_i + (1 − λ)π_i."""
        return lam * self.xi(i) + (1.0 - lam) * self.pi(i)
