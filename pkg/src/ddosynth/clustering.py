"""Joint clustering of attack series on warped-trend + spectral-mode distances."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .distances import dtw_distance, fourier_distance
from .timeseries import TimeSeries, choose_period, resample_to, stl_decompose


@dataclass(frozen=True)
class Metadata:
    """(attack type, cluster, start, duration) for one attack sequence."""

    attack: str
    cluster: int
    start: float
    duration: float

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError("duration must be positive")


MetadataChain = tuple[Metadata, ...]


def make_chain(items: Sequence[Metadata]) -> MetadataChain:
    return tuple(sorted(items, key=lambda m: m.start))


@dataclass(frozen=True)
class DistanceBundle:
    """Pairwise intensity (DTW), mode (Fourier), and combined distances."""

    d_int: np.ndarray
    d_per: np.ndarray
    d_combined: np.ndarray

    def __post_init__(self) -> None:
        for name in ("d_int", "d_per", "d_combined"):
            m = getattr(self, name)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError(f"{name} must be square")
            if (m < 0).any() or not np.allclose(m, m.T):
                raise ValueError(f"{name} must be symmetric and non-negative")
            if not np.allclose(np.diag(m), 0):
                raise ValueError(f"{name} must have a zero diagonal")


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    medoids: tuple[int, ...]
    empty_clusters: tuple[int, ...] = ()


def _pam_cost(dist: np.ndarray, medoids: np.ndarray) -> float:
    return float(dist[:, medoids].min(axis=1).sum())


def _pam_swap(dist: np.ndarray, medoids: np.ndarray, max_iter: int = 200) -> np.ndarray:
    """Greedy SWAP refinement: apply the best improving (medoid, point) swap."""
    n = dist.shape[0]
    medoids = medoids.copy()
    cost = _pam_cost(dist, medoids)
    for _ in range(max_iter):
        best_cost, best_pair = cost, None
        in_medoids = set(medoids.tolist())
        for mi, med in enumerate(medoids):
            for candidate in range(n):
                if candidate in in_medoids:
                    continue
                trial = medoids.copy()
                trial[mi] = candidate
                c = _pam_cost(dist, trial)
                if c < best_cost - 1e-12:
                    best_cost, best_pair = c, (mi, candidate)
        if best_pair is None:
            break
        medoids[best_pair[0]] = best_pair[1]
        cost = best_cost
    return medoids


def _pam_build(dist: np.ndarray, k: int) -> np.ndarray:
    """Greedy BUILD initialization: repeatedly add the point that most
    reduces the total distance to the nearest medoid."""
    n = dist.shape[0]
    first = int(dist.sum(axis=1).argmin())
    medoids = [first]
    nearest = dist[:, first].copy()
    while len(medoids) < k:
        gains = np.array([
            np.minimum(nearest, dist[:, c]).sum() if c not in medoids else np.inf
            for c in range(n)
        ])
        chosen = int(gains.argmin())
        medoids.append(chosen)
        nearest = np.minimum(nearest, dist[:, chosen])
    return np.array(sorted(medoids))


def kmedoids(dist: np.ndarray, k: int, seed: int = 0,
             n_init: int = 4) -> ClusterAssignment:
    """PAM k-medoids on a precomputed distance matrix.

    Runs BUILD+SWAP plus `n_init` seeded random restarts and keeps the
    lowest-cost solution. Empty clusters (possible when points coincide)
    are reported, not raised.
    """
    n = dist.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    candidates = [_pam_swap(dist, _pam_build(dist, k))]
    for _ in range(n_init):
        init = np.sort(rng.choice(n, size=k, replace=False))
        candidates.append(_pam_swap(dist, init))
    best = min(candidates, key=lambda m: _pam_cost(dist, m))
    labels = dist[:, best].argmin(axis=1)
    empty = tuple(c for c in range(k) if not (labels == c).any())
    return ClusterAssignment(labels=labels.astype(int),
                             medoids=tuple(int(m) for m in best),
                             empty_clusters=empty)


class IFClustering(BaseEstimator):
    """Cluster attack time series on joint intensity/mode features.

    Each series is resampled to a common length, split by STL into an
    intensity (trend) and a mode (seasonal + residual) component, and
    pairwise distances are combined as D = sqrt(D_dtw^2 + D_fourier^2).
    Partitioning runs k-medoids (PAM) on the combined matrix; Euclidean
    k-means is undefined on a DTW distance matrix.
    """

    def __init__(self, k: int = 3, period: Optional[int] = None,
                 n_fourier: int = 32, resample_len: int = 128,
                 band: Optional[int] = None, seed: int = 0, n_init: int = 4):
        self.k = k
        self.period = period
        self.n_fourier = n_fourier
        self.resample_len = resample_len
        self.band = band
        self.seed = seed
        self.n_init = n_init

    def fit(self, seqs: Sequence[TimeSeries]):
        n = len(seqs)
        if n == 0:
            raise ValueError("no series to cluster")
        if self.k > n:
            raise ValueError(f"k={self.k} exceeds the {n} available series")

        intensities, modes = [], []
        for s in seqs:
            values = resample_to(s.values, self.resample_len)
            period = self.period or choose_period(values)
            period = min(period, self.resample_len // 2)
            dec = stl_decompose(
                TimeSeries(values=np.maximum(values, 0.0), bin_width=s.bin_width,
                           origin=s.origin, attack=s.attack),
                period=max(2, period))
            intensities.append(dec.intensity)
            modes.append(dec.mode)

        d_int = np.zeros((n, n))
        d_per = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                d_int[i, j] = d_int[j, i] = dtw_distance(
                    intensities[i], intensities[j], band=self.band)
                d_per[i, j] = d_per[j, i] = fourier_distance(
                    modes[i], modes[j], self.n_fourier)
        combined = np.sqrt(d_int ** 2 + d_per ** 2)

        assignment = kmedoids(combined, self.k, seed=self.seed,
                              n_init=self.n_init)
        self.assignment_ = assignment
        self.labels_ = assignment.labels
        self.distances_ = DistanceBundle(d_int=d_int, d_per=d_per,
                                         d_combined=combined)
        self.metadata_chain_ = make_chain([
            Metadata(attack=s.attack, cluster=int(label),
                     start=s.origin, duration=s.duration)
            for s, label in zip(seqs, assignment.labels)
        ])
        return self

    def fit_predict(self, seqs: Sequence[TimeSeries]) -> np.ndarray:
        return self.fit(seqs).labels_

    def _check_fitted(self) -> None:
        if not hasattr(self, "labels_"):
            raise NotFittedError("call fit() first")


def if_cluster(seqs: Sequence[TimeSeries], k: int, period: Optional[int] = None,
               n_fourier: int = 32, resample_len: int = 128, seed: int = 0,
               ) -> tuple[ClusterAssignment, MetadataChain, DistanceBundle]:
    """Functional form of IFClustering.fit for one-shot use."""
    model = IFClustering(k=k, period=period, n_fourier=n_fourier,
                         resample_len=resample_len, seed=seed).fit(seqs)
    return model.assignment_, model.metadata_chain_, model.distances_
