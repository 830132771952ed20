"""Oscillation profiles, plateau tilings and building blocks."""

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from app.models.geometry import Box, MatrixPair, WaveVector
from app.utils.smooth import smooth_step, smooth_step_derivative, smooth_step_integral


@dataclass(frozen=True, eq=False)
class Profile:
    """
    A 1-periodic mean-zero profile q with plateaus 1 − λ on I1 and −λ on I2.

    One period is a table of segments; on segment k,
    q = start_k + (end_k − start_k)·S((t − at_k)/length_k), so constant
    segments return their value exactly. f is the antiderivative with f(0) = 0.
    """

    lam: float
    eps: float
    I1: Optional[tuple[float, float]]
    I2: Optional[tuple[float, float]]
    transition_width: float
    at: np.ndarray
    length: np.ndarray
    start: np.ndarray
    end: np.ndarray
    f_at: np.ndarray
    f_max: float

    @property
    def trivial(self) -> bool:
        return self.lam in (0.0, 1.0)

    def _locate(self, t) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        phase = t - np.floor(t)
        index = np.clip(np.searchsorted(self.at, phase, side="right") - 1, 0, self.at.size - 1)
        local = (phase - self.at[index]) / self.length[index]
        return index, local

    def q(self, t) -> np.ndarray:
        if self.trivial:
            return np.zeros(np.shape(t))
        index, local = self._locate(t)
        jump = self.end[index] - self.start[index]
        return self.start[index] + jump * smooth_step(local)

    def dq(self, t) -> np.ndarray:
        """q′ with respect to the phase."""
        if self.trivial:
            return np.zeros(np.shape(t))
        index, local = self._locate(t)
        jump = self.end[index] - self.start[index]
        return jump * smooth_step_derivative(local) / self.length[index]

    def f(self, t) -> np.ndarray:
        if self.trivial:
            return np.zeros(np.shape(t))
        index, local = self._locate(t)
        jump = self.end[index] - self.start[index]
        return self.f_at[index] + self.length[index] * (
            self.start[index] * local + jump * smooth_step_integral(local)
        )


@dataclass(frozen=True, eq=False)
class Tiling:
    """Axis-aligned lattice of translates of one base box."""

    base: Box
    steps: np.ndarray
    counts: tuple[int, ...]

    @classmethod
    def single(cls, box: Box) -> "Tiling":
        return cls(box, np.zeros(box.n), (1,) * box.n)

    @property
    def count(self) -> int:
        return int(np.prod(self.counts))

    @property
    def measure(self) -> float:
        return self.base.volume * self.count

    def offsets(self) -> Iterator[np.ndarray]:
        for index in np.ndindex(*self.counts):
            yield np.array(index) * self.steps

    def instances(self) -> Iterator[Box]:
        for offset in self.offsets():
            yield self.base.translated(offset)

    def locate(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        Rows of X inside some instance, and their coordinates relative to
        that instance's center.
        """
        rel = X - self.base.center
        counts = np.asarray(self.counts)
        moving = counts > 1
        if np.any(moving):
            index = np.zeros_like(rel)
            index[:, moving] = np.clip(
                np.rint(rel[:, moving] / self.steps[moving]), 0, counts[moving] - 1
            )
            rel = rel - index * self.steps
        inside = np.all(np.abs(rel) < self.base.radii, axis=1)
        return inside, rel


@dataclass(frozen=True, eq=False)
class SlabRegion:
    """{x ∈ inner : frac(a·(x − origin)/δ) ∈ interval}, for oblique directions."""

    inner: Box
    a: np.ndarray
    delta: float
    origin: np.ndarray
    interval: tuple[float, float]

    def contains(self, X: np.ndarray) -> np.ndarray:
        phase = (X - self.origin) @ self.a / self.delta
        phase = phase - np.floor(phase)
        s, e = self.interval
        return self.inner.contains(X) & (phase >= s) & (phase <= e)


@dataclass(frozen=True, eq=False)
class PlateauRegion:
    """
    One plateau of a block: (Dφ, Ψ) equals `offset` exactly on it.

    `tilings` describe the region exactly when `exact` is set; oblique
    regions carry a slab descriptor and get tilings from a dyadic cover.
    """

    index: int
    offset: MatrixPair
    measure: float
    tilings: tuple[Tiling, ...]
    exact: bool
    slab: Optional[SlabRegion] = None


@dataclass(frozen=True, eq=False)
class BuildingBlock:
    """
    Compactly supported pair φ = δhp, Ψ = (δ/|a|²)[(a·Dh)B − (BDh)⊗a]
    with h = ζ·f(a·(x − x₀)/δ).
    """

    gamma: WaveVector
    lam: float
    box: Box
    eps: float
    profile: Profile
    delta: float
    ell: int
    axis: Optional[int]
    origin: np.ndarray
    inner: Box
    margins: np.ndarray
    regions: tuple[PlateauRegion, PlateauRegion]
    sup_phi_bound: float
    containment_bound: float

    @property
    def trivial(self) -> bool:
        return self.profile.trivial

    @property
    def free_measure(self) -> float:
        return self.box.volume - sum(region.measure for region in self.regions)

    def cutoff(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """ζ and Dζ at the rows of X."""
        k, n = X.shape
        factors = np.ones((k, n))
        slopes = np.zeros((k, n))
        lo, hi = self.box.lo, self.box.hi
        for j in np.flatnonzero(self.margins > 0.0):
            width = self.margins[j]
            left = (X[:, j] - lo[j]) / width
            right = (hi[j] - X[:, j]) / width
            s_left, s_right = smooth_step(left), smooth_step(right)
            factors[:, j] = s_left * s_right
            slopes[:, j] = (
                smooth_step_derivative(left) * s_right - s_left * smooth_step_derivative(right)
            ) / width
        zeta = np.prod(factors, axis=1)
        gradient = np.empty((k, n))
        for j in range(n):
            others = np.prod(np.delete(factors, j, axis=1), axis=1)
            gradient[:, j] = slopes[:, j] * others
        return zeta, gradient

    def evaluate(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(φ, Dφ, Ψ) at the rows of X, zero outside the box."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        k = X.shape[0]
        p, a, B = self.gamma.p, self.gamma.a, self.gamma.B
        m, n = B.shape
        phi = np.zeros((k, m))
        Dphi = np.zeros((k, m, n))
        Psi = np.zeros((k, m, n))
        if self.trivial:
            return phi, Dphi, Psi
        inside = self.box.contains(X)
        if not np.any(inside):
            return phi, Dphi, Psi

        Y = X[inside]
        phase = (Y - self.origin) @ a / self.delta
        q = self.profile.q(phase)
        f = self.profile.f(phase)
        zeta, Dzeta = self.cutoff(Y)
        Dh = f[:, None] * Dzeta + (zeta * q)[:, None] * (a / self.delta)[None, :]
        phi[inside] = self.delta * (zeta * f)[:, None] * p[None, :]
        Dphi[inside] = self.delta * p[None, :, None] * Dh[:, None, :]
        aDh = Dh @ a
        BDh = Dh @ B.T
        scale = self.delta / float(a @ a)
        Psi[inside] = scale * (aDh[:, None, None] * B[None, :, :] - BDh[:, :, None] * a[None, None, :])
        return phi, Dphi, Psi
