"""Small linear-algebra helpers shared by the geometry and block code."""

from typing import Optional

import numpy as np

# Relative tolerance of the wave-cone kernel condition ‖B·a‖ ≤ tol·(‖B‖·|a| + 1)
KERNEL_TOL = 1e-12


def tensor_product(p, a) -> np.ndarray:
    """Return the m×n matrix with entries p_i·a_j."""
    return np.outer(np.asarray(p, dtype=float), np.asarray(a, dtype=float))


def kernel_residual(B: np.ndarray, a: np.ndarray) -> float:
    """Return ‖B·a‖ divided by its admissible scale ‖B‖·|a| + 1."""
    return float(np.linalg.norm(B @ a) / (np.linalg.norm(B) * np.linalg.norm(a) + 1.0))


def rank_one_factors(A: np.ndarray, B: Optional[np.ndarray] = None) -> tuple[np.ndarray, np.ndarray]:
    """
    Split a rank-one matrix as A = p ⊗ a with |a| = 1.

    For A = 0 the direction a is taken from the kernel of B when one is given,
    otherwise e_1. The sign of a is fixed so that its largest entry is positive.
    """
    m, n = A.shape
    if np.linalg.norm(A) == 0.0:
        if B is not None and np.linalg.norm(B) > 0.0:
            _, _, vt = np.linalg.svd(B)
            a = vt[-1]
        else:
            a = np.eye(n)[0]
        p = np.zeros(m)
    else:
        u, s, vt = np.linalg.svd(A)
        a = vt[0]
        p = u[:, 0] * s[0]
    k = int(np.argmax(np.abs(a)))
    if a[k] < 0:
        a, p = -a, -p
    return p, snap_axis(a)


def snap_axis(a: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Replace a unit vector within tol of a coordinate axis by that axis."""
    a = np.asarray(a, dtype=float)
    k = int(np.argmax(np.abs(a)))
    others = np.delete(a, k)
    if others.size == 0 or np.max(np.abs(others)) <= tol * abs(a[k]):
        snapped = np.zeros_like(a)
        snapped[k] = np.sign(a[k]) * np.linalg.norm(a)
        return snapped
    return a


def axis_of(a: np.ndarray) -> Optional[int]:
    """Index k when a is a nonzero multiple of e_k, else None."""
    nonzero = np.flatnonzero(a)
    if nonzero.size == 1:
        return int(nonzero[0])
    return None


def points_segment_distance(X: np.ndarray, alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """
    Euclidean distances from the rows of X to the closed segment [alpha, beta].

    X has shape (k, d); alpha and beta are flat d-vectors.
    """
    X = np.atleast_2d(X)
    direction = beta - alpha
    length_sq = float(direction @ direction)
    if length_sq == 0.0:
        return np.linalg.norm(X - alpha, axis=1)
    t = np.clip((X - alpha) @ direction / length_sq, 0.0, 1.0)
    closest = alpha[None, :] + t[:, None] * direction[None, :]
    return np.linalg.norm(X - closest, axis=1)


def wave_cone_residual(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """
    Two-component residual of (A, B) ∈ Γ.

    The first entry is the distance of A to the rank-one matrices, the second
    is |B·a| for the direction a of A (or the best kernel direction of B when
    A vanishes). Both vanish exactly on the wave cone.
    """
    m, n = A.shape
    if np.linalg.norm(A) > 0.0:
        _, singular, vt = np.linalg.svd(A)
        tail = float(np.sqrt(np.sum(singular[1:] ** 2)))
        return np.array([tail, float(np.linalg.norm(B @ vt[0]))])
    if n > m:
        return np.zeros(2)
    return np.array([0.0, float(np.linalg.svd(B, compute_uv=False)[-1])])


def ball_samples(rng: np.random.Generator, dim: int, radius: float, count: int) -> np.ndarray:
    """
    Points of the closed ball of the given radius.

    Always contains the center and the axis points ±radius·e_j; the rest are
    split between the sphere and the interior.
    """
    axis_points = radius * np.concatenate([np.eye(dim), -np.eye(dim)])
    fixed = np.vstack([np.zeros((1, dim)), axis_points])
    extra = max(count - fixed.shape[0], 0)
    directions = rng.normal(size=(extra, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    on_sphere = extra // 4
    scale = np.ones(extra)
    scale[on_sphere:] = rng.random(extra - on_sphere) ** (1.0 / dim)
    return np.vstack([fixed, radius * scale[:, None] * directions])
