"""Attack time series: binning, STL decomposition, resampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from statsmodels.tsa.seasonal import STL

from .packets import BENIGN_LABEL


class SeriesTooShortError(ValueError):
    """Series shorter than 2 * period; retry with a smaller (fallback) period."""


@dataclass(frozen=True)
class TimeSeries:
    """Packet counts per time bin for one attack sequence."""

    values: np.ndarray
    bin_width: float
    origin: float
    attack: str = BENIGN_LABEL

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or len(v) < 2:
            raise ValueError("time series needs at least 2 bins")
        if not np.isfinite(v).all() or (v < 0).any():
            raise ValueError("series values must be finite and non-negative")
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def duration(self) -> float:
        return len(self.values) * self.bin_width


@dataclass(frozen=True)
class DecomposedSeries:
    """Additive split s = trend + seasonal + resid.

    The intensity component is the trend; the mode component is
    seasonal + resid.
    """

    trend: np.ndarray
    seasonal: np.ndarray
    resid: np.ndarray

    @property
    def intensity(self) -> np.ndarray:
        return self.trend

    @property
    def mode(self) -> np.ndarray:
        return self.seasonal + self.resid

    def reconstruct(self) -> np.ndarray:
        return self.trend + self.seasonal + self.resid


def bin_timestamps(ts: Sequence[float], bin_width: float, attack: str = BENIGN_LABEL,
                   origin: Optional[float] = None,
                   n_bins: Optional[int] = None) -> TimeSeries:
    """Count timestamps into [origin + b*w, origin + (b+1)*w) bins.

    The result is padded to at least 2 bins; sum(values) == len(ts).
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    arr = np.asarray(sorted(ts), dtype=float)
    if len(arr) == 0:
        raise ValueError("no timestamps to bin")
    if origin is None:
        origin = float(arr[0])
    offsets = np.floor((arr - origin) / bin_width).astype(int)
    if (offsets < 0).any():
        raise ValueError("timestamp before origin")
    count = int(offsets.max()) + 1 if n_bins is None else n_bins
    count = max(count, 2)
    values = np.bincount(offsets, minlength=count).astype(float)
    if n_bins is not None and len(values) > n_bins >= 2:
        raise ValueError("timestamps fall outside the requested bin range")
    return TimeSeries(values=values, bin_width=bin_width, origin=origin,
                      attack=attack)


def choose_period(values: np.ndarray, min_period: int = 2) -> int:
    """Dominant period via the first autocorrelation peak.

    Falls back to len/8 (at least `min_period`) when no clear peak exists.
    """
    v = np.asarray(values, dtype=float)
    n = len(v)
    fallback = max(min_period, n // 8)
    centered = v - v.mean()
    denom = float(np.dot(centered, centered))
    if denom <= 0:
        return fallback
    acf = np.correlate(centered, centered, mode="full")[n - 1:] / denom
    max_lag = n // 2
    best_lag, best_val = 0, 0.0
    for lag in range(min_period, max_lag):
        if acf[lag] > acf[lag - 1] and acf[lag] >= acf[lag + 1]:
            if acf[lag] > best_val:
                best_lag, best_val = lag, float(acf[lag])
    if best_lag >= min_period and best_val > 0.1:
        return best_lag
    return fallback


def stl_decompose(series: TimeSeries, period: int) -> DecomposedSeries:
    """Seasonal-trend decomposition via loess.

    Requires len >= 2 * period and period >= 2; the additive identity
    trend + seasonal + resid == values holds to float precision.
    """
    if period < 2:
        raise ValueError("period must be >= 2")
    values = series.values
    if len(values) < 2 * period:
        raise SeriesTooShortError(
            f"series length {len(values)} < 2 * period {period}; "
            "retry with a smaller period (e.g. the len/8 fallback)")
    result = STL(values, period=period, robust=False).fit()
    return DecomposedSeries(
        trend=np.asarray(result.trend, dtype=float),
        seasonal=np.asarray(result.seasonal, dtype=float),
        resid=np.asarray(result.resid, dtype=float),
    )


def resample_to(values: np.ndarray, target_len: int) -> np.ndarray:
    """Linear-interpolation resample onto `target_len` evenly spaced points."""
    v = np.asarray(values, dtype=float)
    if target_len < 2:
        raise ValueError("target_len must be >= 2")
    if len(v) == target_len:
        return v.copy()
    if len(v) == 1:
        return np.full(target_len, float(v[0]))
    src = np.linspace(0.0, 1.0, num=len(v))
    dst = np.linspace(0.0, 1.0, num=target_len)
    return np.interp(dst, src, v)
