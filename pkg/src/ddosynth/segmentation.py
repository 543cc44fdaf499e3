"""Greedy recurring-pattern segmentation of attack series into state triplets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .distances import dtw_distance
from .timeseries import TimeSeries, resample_to


@dataclass(frozen=True)
class StateTriplet:
    """(pattern id, segment length alpha, magnitude beta = max - min)."""

    pattern_id: int
    alpha: int
    beta: float

    def __post_init__(self) -> None:
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")


@dataclass
class Pattern:
    """A min-max-normalized reference shape of length l_max."""

    values: np.ndarray
    support: int = 0

    @property
    def span(self) -> float:
        return float(self.values.max() - self.values.min())


@dataclass
class PatternLibrary:
    l_max: int
    patterns: list[Pattern] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.patterns)

    def add(self, values: np.ndarray) -> int:
        self.patterns.append(Pattern(values=np.asarray(values, dtype=float),
                                     support=1))
        return len(self.patterns) - 1

    def get(self, pattern_id: int) -> Pattern:
        return self.patterns[pattern_id]


def normalize_window(window: np.ndarray, l_max: int) -> np.ndarray:
    """Min-max normalize to [0, 1] and resample to l_max samples.

    Constant windows map to all-zeros; they carry beta = 0 and rebuild to a
    flat segment regardless of the matched pattern.
    """
    w = np.asarray(window, dtype=float)
    span = w.max() - w.min()
    if span <= 0:
        return np.zeros(l_max)
    return resample_to((w - w.min()) / span, l_max)


def reconstruct_segment(triplet: StateTriplet, library: PatternLibrary) -> np.ndarray:
    """Rebuild a segment: pattern * beta / span(pattern), first alpha samples."""
    if triplet.beta == 0:
        return np.zeros(triplet.alpha)
    pattern = library.get(triplet.pattern_id)
    span = pattern.span
    if span <= 0:
        raise ValueError(f"pattern {triplet.pattern_id} has zero span")
    scaled = pattern.values * (triplet.beta / span)
    return scaled[: triplet.alpha].copy()


class GreedySegmenter(BaseEstimator):
    """Greedy sweep that tiles series with known or newly registered patterns.

    At each position the next l_min window anchors the search; candidate
    lengths l_min..l_max are matched (longest first) against the library by
    DTW on normalized windows, below `match_threshold`. A failed search
    registers the l_min window as a new pattern. A trailing partial window
    shorter than l_min merges into the last segment, so segments always
    tile the series exactly.
    """

    def __init__(self, l_min: int = 16, l_max: int = 64,
                 match_threshold: float = 1.0, min_support: int = 3):
        self.l_min = l_min
        self.l_max = l_max
        self.match_threshold = match_threshold
        self.min_support = min_support

    def fit(self, series_list: Sequence[TimeSeries]):
        if self.l_min > self.l_max:
            raise ValueError("l_min must not exceed l_max")
        if self.l_min < 2:
            raise ValueError("l_min must be >= 2")
        library = PatternLibrary(l_max=self.l_max)
        chains: list[list[StateTriplet]] = []
        for series in series_list:
            chains.append(self._segment_one(series.values, library))
        self._consolidate(library, chains)
        self.library_ = library
        self.chains_ = chains
        return self

    def transform(self, series_list: Sequence[TimeSeries]) -> list[list[StateTriplet]]:
        self._check_fitted()
        return [self._segment_one(s.values, self.library_, register=False)
                for s in series_list]

    def _check_fitted(self) -> None:
        if not hasattr(self, "library_"):
            raise NotFittedError("call fit() first")

    def _best_match(self, normalized: np.ndarray,
                    library: PatternLibrary) -> tuple[Optional[int], float]:
        best_id, best_d = None, np.inf
        for pid, pattern in enumerate(library.patterns):
            d = dtw_distance(normalized, pattern.values)
            if d < best_d:
                best_id, best_d = pid, d
        return best_id, best_d

    def _segment_one(self, values: np.ndarray, library: PatternLibrary,
                     register: bool = True) -> list[StateTriplet]:
        values = np.asarray(values, dtype=float)
        n = len(values)
        if n < self.l_min:
            raise ValueError(f"series length {n} < l_min {self.l_min}")
        triplets: list[StateTriplet] = []
        pos = 0
        while pos < n:
            remaining = n - pos
            if remaining < self.l_min:
                # trailing partial window: extend the last segment over it
                last = triplets.pop()
                window = values[pos - last.alpha: n]
                triplets.append(StateTriplet(
                    pattern_id=last.pattern_id, alpha=len(window),
                    beta=float(window.max() - window.min())))
                break
            matched = False
            for alpha in range(min(self.l_max, remaining), self.l_min - 1, -1):
                window = values[pos: pos + alpha]
                normalized = normalize_window(window, self.l_max)
                pid, dist = self._best_match(normalized, library)
                if pid is not None and dist < self.match_threshold:
                    library.patterns[pid].support += 1
                    triplets.append(StateTriplet(
                        pattern_id=pid, alpha=alpha,
                        beta=float(window.max() - window.min())))
                    pos += alpha
                    matched = True
                    break
            if not matched:
                window = values[pos: pos + self.l_min]
                normalized = normalize_window(window, self.l_max)
                beta = float(window.max() - window.min())
                if register and normalized.any():
                    pid = library.add(normalized)
                elif library.patterns:
                    # constant window (or frozen library): nearest pattern, or
                    # beta = 0 makes the pattern irrelevant on reconstruction
                    pid, _ = self._best_match(normalized, library)
                    library.patterns[pid].support += 1
                elif register:
                    # first window of an idle series: keep a flat placeholder
                    pid = library.add(normalized)
                else:
                    raise ValueError("cannot segment against an empty library")
                triplets.append(StateTriplet(pattern_id=pid, alpha=self.l_min,
                                             beta=beta))
                pos += self.l_min
        return triplets

    def _consolidate(self, library: PatternLibrary,
                     chains: list[list[StateTriplet]]) -> None:
        """Merge patterns below min_support into their nearest keeper."""
        if self.min_support <= 1 or not library.patterns:
            return
        keep = [pid for pid, p in enumerate(library.patterns)
                if p.support >= self.min_support]
        if not keep:
            keep = [max(range(len(library.patterns)),
                        key=lambda pid: library.patterns[pid].support)]
        remap: dict[int, int] = {}
        for pid, pattern in enumerate(library.patterns):
            if pid in keep:
                remap[pid] = keep.index(pid)
            else:
                nearest = min(keep, key=lambda kid: dtw_distance(
                    pattern.values, library.patterns[kid].values))
                library.patterns[nearest].support += pattern.support
                remap[pid] = keep.index(nearest)
        library.patterns = [library.patterns[pid] for pid in keep]
        for chain in chains:
            for i, t in enumerate(chain):
                chain[i] = StateTriplet(pattern_id=remap[t.pattern_id],
                                        alpha=t.alpha, beta=t.beta)


def segment_series(series: TimeSeries, l_min: int, l_max: int,
                   match_threshold: float, min_support: int = 1,
                   ) -> tuple[list[StateTriplet], PatternLibrary]:
    """Segment one series with a fresh library (functional form)."""
    seg = GreedySegmenter(l_min=l_min, l_max=l_max,
                          match_threshold=match_threshold,
                          min_support=min_support).fit([series])
    return seg.chains_[0], seg.library_


def calibrate_threshold(series_list: Sequence[TimeSeries], l_min: int,
                        l_max: int, percentile: float = 25.0,
                        max_windows: int = 64) -> float:
    """Match threshold = the given percentile of pairwise window DTW."""
    windows = []
    stride = max(1, l_min // 2)
    for series in series_list:
        values = series.values
        for start in range(0, len(values) - l_min + 1, stride):
            windows.append(normalize_window(values[start:start + l_min], l_max))
            if len(windows) >= max_windows:
                break
        if len(windows) >= max_windows:
            break
    if len(windows) < 2:
        raise ValueError("not enough windows to calibrate a threshold")
    dists = [dtw_distance(windows[i], windows[j])
             for i in range(len(windows)) for j in range(i + 1, len(windows))]
    return float(np.percentile(dists, percentile))
