from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

from eigenmax.core.exceptions import ConfigError

type FloatArray = NDArray[np.float64]

FEASIBILITY_SLACK = 1e-12


def _clipped_sum(values: FloatArray, upper: FloatArray, shift: float) -> float:
    return float(np.clip(values - shift, 0.0, upper).sum())


def project_capped_simplex(
    values: ArrayLike, upper: ArrayLike, total: float = 1.0
) -> FloatArray:
    """Euclidean projection onto {x : 0 <= x <= upper, sum(x) = total}.

    The solution is clip(values - tau, 0, upper) for the shift tau at which the
    clipped sum equals `total`. The clipped sum is piecewise linear in tau with
    kinks at values - upper and values, so tau is found by bisection over the
    sorted kinks followed by exact interpolation on the bracketing piece.
    """
    v = np.asarray(values, dtype=np.float64)
    u = np.broadcast_to(np.asarray(upper, dtype=np.float64), v.shape)
    if np.any(u < 0) or not np.all(np.isfinite(u)):
        raise ConfigError("Capped simplex bounds must be finite and nonnegative")
    capacity = float(u.sum())
    if total < 0 or capacity < total * (1 - FEASIBILITY_SLACK):
        raise ConfigError(
            f"Capped simplex is empty: bounds sum to {capacity:.6g} < {total:.6g}"
        )
    if capacity <= total:
        return u.copy()
    if total == 0:
        return np.zeros_like(v)

    kinks = np.unique(np.concatenate([v - u, v]))
    lo, hi = 0, len(kinks) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _clipped_sum(v, u, kinks[mid]) >= total:
            lo = mid
        else:
            hi = mid
    f_lo = _clipped_sum(v, u, kinks[lo])
    f_hi = _clipped_sum(v, u, kinks[hi])
    shift = float(kinks[lo])
    if f_lo > f_hi:
        shift += (f_lo - total) / (f_lo - f_hi) * (kinks[hi] - kinks[lo])
    return np.clip(v - shift, 0.0, u)


def project_spectraplex(
    matrix: ArrayLike, trace: float = 1.0, rank: int | None = None
) -> FloatArray:
    """Nearest PSD matrix with the given trace and at most `rank` nonzero eigenvalues."""
    g = np.asarray(matrix, dtype=np.float64)
    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (g + g.T))
    keep = len(eigenvalues) if rank is None else max(1, min(rank, len(eigenvalues)))
    projected = np.zeros_like(eigenvalues)
    top = np.argsort(eigenvalues)[-keep:]
    projected[top] = project_capped_simplex(eigenvalues[top], trace, trace)
    return (eigenvectors * projected) @ eigenvectors.T


def project_psd(matrix: ArrayLike, rank: int | None = None) -> FloatArray:
    """Nearest PSD matrix of rank at most `rank` in the Frobenius norm."""
    g = np.asarray(matrix, dtype=np.float64)
    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (g + g.T))
    clipped = np.maximum(eigenvalues, 0.0)
    if rank is not None and rank < len(clipped):
        clipped[: len(clipped) - max(rank, 0)] = 0.0
    return (eigenvectors * clipped) @ eigenvectors.T
