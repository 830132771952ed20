"""
C∞ step functions built from exp(−1/t).

S(t) = 0 for t ≤ 0, 1 for t ≥ 1, and exp(−1/t)/(exp(−1/t)+exp(−1/(1−t))) in
between, written as a logistic function so that it never overflows. S is
antisymmetric about t = 1/2: S(t) + S(1 − t) = 1, hence ∫₀¹ S = 1/2 exactly.
"""

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import expit

# Panels of the tabulated integral on [0, 1/2]
_PANELS = 2048
_GAUSS_NODES, _GAUSS_WEIGHTS = leggauss(16)


def smooth_step(t) -> np.ndarray:
    """Evaluate S elementwise."""
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    safe = np.where(inside, t, 0.5)
    with np.errstate(divide="ignore", over="ignore"):
        value = expit(1.0 / (1.0 - safe) - 1.0 / safe)
    return np.where(inside, value, np.where(t >= 1.0, 1.0, 0.0))


def smooth_step_derivative(t) -> np.ndarray:
    """Evaluate S′ = S(1 − S)(1/t² + 1/(1 − t)²) elementwise."""
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    safe = np.where(inside, t, 0.5)
    s = smooth_step(safe)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        value = s * (1.0 - s) * (1.0 / safe**2 + 1.0 / (1.0 - safe) ** 2)
    return np.where(inside, np.nan_to_num(value), 0.0)


def _gauss(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = mid[..., None] + half[..., None] * _GAUSS_NODES
    return half * np.sum(_GAUSS_WEIGHTS * smooth_step(nodes), axis=-1)


_EDGES = np.linspace(0.0, 0.5, _PANELS + 1)
_CUMULATIVE = np.concatenate([[0.0], np.cumsum(_gauss(_EDGES[:-1], _EDGES[1:]))])


def _half_integral(t: np.ndarray) -> np.ndarray:
    # ∫₀ᵗ S for t in [0, 1/2]
    panel = np.minimum((t / 0.5 * _PANELS).astype(int), _PANELS - 1)
    return _CUMULATIVE[panel] + _gauss(_EDGES[panel], t)


def smooth_step_integral(t) -> np.ndarray:
    """
    Evaluate ∫₀ᵗ S elementwise.

    Values on [1/2, 1] come from the reflection identity, so the integral over
    [0, 1] is exactly 1/2 and beyond 1 it grows linearly.
    """
    t = np.asarray(t, dtype=float)
    clipped = np.clip(t, 0.0, 1.0)
    lower = clipped <= 0.5
    mirrored = np.where(lower, clipped, 1.0 - clipped)
    half = _half_integral(mirrored)
    value = np.where(lower, half, clipped - 0.5 + half)
    return value + np.maximum(t - 1.0, 0.0)


# sup S′, attained at t = 1/2
SMOOTH_STEP_SLOPE = float(np.max(smooth_step_derivative(np.linspace(0.0, 1.0, 20001))))
