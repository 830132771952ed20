"""Algebra of T_N configurations."""

from typing import Sequence

import numpy as np

from app.models.geometry import MatrixPair, WaveVector
from app.models.tn_config import CoeffMatrix, TNConfig
from app.utils.linalg import points_segment_distance
from core.exceptions import DomainException, ValidationException
from core.logging import get_logger

logger = get_logger(__name__)

# Supplied last jump must match minus the sum of the others to this tolerance
CLOSURE_TOL = 1e-9


def cyclic_coeffs(t: Sequence[float]) -> CoeffMatrix:
    """
    Solve the cyclic recursion P_{k+1} = t_k X_k + (1 − t_k) P_k.

    ν_i^j = t_j (1 − t_{j+1}) ⋯ (1 − t_{i−1}) / (1 − Π(1 − t_k)), indices mod N,
    so that P_i = Σ_j ν_i^j X_j.
    """
    t = np.asarray(t, dtype=float)
    N = t.size
    if N < 2:
        raise DomainException(f"Cyclic coefficients need N ≥ 2, got {N}")
    bad = np.flatnonzero((t <= 0.0) | (t >= 1.0))
    if bad.size:
        raise DomainException(
            f"t_{bad[0] + 1} = {t[bad[0]]} is outside (0, 1)",
            data={"index": int(bad[0]) + 1, "value": float(t[bad[0]])},
        )

    keep = 1.0 - t
    denominator = 1.0 - float(np.prod(keep))
    nu = np.empty((N, N))
    for i in range(N):
        for j in range(N):
            factors = (i - 1 - j) % N
            walk = np.prod([keep[(j + s) % N] for s in range(1, factors + 1)])
            nu[i, j] = t[j] * walk / denominator
    return CoeffMatrix(nu)


def build_tn(rho: MatrixPair, gammas: Sequence[WaveVector], kappas: Sequence[float]) -> TNConfig:
    """Assemble and validate a T_N configuration."""
    gammas = tuple(gammas)
    kappas = np.array(kappas, dtype=float)
    N = len(gammas)
    if N < 2 or kappas.size != N:
        raise ValidationException(f"Need N ≥ 2 jumps with one κ each, got {N} and {kappas.size}")
    for index, kappa in enumerate(kappas, start=1):
        if not kappa > 1.0:
            raise ValidationException(
                f"κ_{index} = {kappa} must exceed 1", data={"index": index, "kappa": float(kappa)}
            )
    for index, gamma in enumerate(gammas, start=1):
        if gamma.as_pair().shape != rho.shape:
            raise ValidationException(f"γ_{index} does not match the shape of ρ", data={"index": index})

    pairs = [gamma.as_pair() for gamma in gammas]
    closing = -sum(pairs[1:-1], pairs[0])
    mismatch = closing.distance(pairs[-1])
    if mismatch > CLOSURE_TOL:
        raise ValidationException(
            f"Σγ_i = {mismatch:.3e} ≠ 0; γ_{N} disagrees with the closure",
            data={"index": N, "mismatch": mismatch},
        )
    steps = tuple(pairs[:-1]) + (closing,)

    pis = [rho]
    for step in steps[:-1]:
        pis.append(pis[-1] + step)
    xis = [pi + kappa * step for pi, kappa, step in zip(pis, kappas, steps)]
    kappas.setflags(write=False)
    chis = 1.0 / kappas
    chis.setflags(write=False)
    return TNConfig(rho, gammas, kappas, steps, tuple(pis), tuple(xis), chis)


def scaled_tn(cfg: TNConfig, factor: float) -> TNConfig:
    """The configuration with every κ_i multiplied by factor (anchors unchanged)."""
    return build_tn(cfg.rho, cfg.gammas, factor * cfg.kappas)


def tn_distance(cfg: TNConfig, x: MatrixPair) -> float:
    """Distance from x to 𝒯 = ⋃ [ξ_j, π_j]."""
    return float(tn_distances(cfg, x.flat()[None, :])[0])


def tn_distances(cfg: TNConfig, X: np.ndarray) -> np.ndarray:
    """Vectorized tn_distance over rows of flattened pairs."""
    distances = [
        points_segment_distance(X, xi.flat(), pi.flat()) for xi, pi in zip(cfg.xis, cfg.pis)
    ]
    return np.min(distances, axis=0)


def corner_weights(cfg: TNConfig, i: int, lam: float) -> np.ndarray:
    """
    Barycentric weights of λξ_i + (1 − λ)π_i over the corners ξ_1 … ξ_N.

    ν_i = λ + (1 − λ)ν_i^i and ν_j = (1 − λ)ν_i^j for j ≠ i.
    """
    if not 0.0 <= lam <= 1.0:
        raise DomainException(f"λ = {lam} is outside [0, 1]")
    row = cyclic_coeffs(cfg.chis).row(i)
    weights = (1.0 - lam) * row
    weights[cfg.index(i)] += lam
    return weights
