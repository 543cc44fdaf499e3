"""Elastic and spectral distances used by the clustering and segmentation stages."""

from __future__ import annotations

from typing import Optional

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not (args and callable(args[0])) else args[0]


@njit(cache=True)
def _dtw_kernel(a: np.ndarray, b: np.ndarray, band: int) -> float:
    n, m = len(a), len(b)
    inf = np.inf
    cost = np.full((n + 1, m + 1), inf)
    cost[0, 0] = 0.0
    for i in range(1, n + 1):
        if band >= 0:
            lo = max(1, i - band)
            hi = min(m, i + band)
        else:
            lo, hi = 1, m
        for j in range(lo, hi + 1):
            d = abs(a[i - 1] - b[j - 1])
            best = cost[i - 1, j - 1]
            if cost[i - 1, j] < best:
                best = cost[i - 1, j]
            if cost[i, j - 1] < best:
                best = cost[i, j - 1]
            cost[i, j] = d + best
    return cost[n, m]


def dtw_distance(a, b, band: Optional[int] = None) -> float:
    """Classic dynamic-time-warping distance with absolute-difference cost.

    `band` is a Sakoe-Chiba radius; None means the full alignment matrix.
    The band is widened to |len(a) - len(b)| when needed so a path exists.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("dtw_distance requires non-empty inputs")
    if band is None:
        radius = -1
    else:
        radius = max(int(band), abs(len(a) - len(b)))
    return float(_dtw_kernel(a, b, radius))


def fourier_distance(a, b, n_coeffs: int) -> float:
    """Euclidean distance between leading DFT magnitudes (DC excluded)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} != {len(b)}")
    if n_coeffs < 1 or n_coeffs > len(a) // 2:
        raise ValueError(f"n_coeffs must be in [1, {len(a) // 2}]")
    mag_a = np.abs(np.fft.rfft(a))[1:n_coeffs + 1]
    mag_b = np.abs(np.fft.rfft(b))[1:n_coeffs + 1]
    return float(np.linalg.norm(mag_a - mag_b))
