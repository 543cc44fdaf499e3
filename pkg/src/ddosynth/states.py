"""First-order transition model over segment states, with add-one smoothing."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .segmentation import StateTriplet


class StateChainModel(BaseEstimator):
    """Markov model over pattern ids plus conditional (alpha, beta) draws.

    The transition matrix holds add-one-smoothed empirical frequencies over
    the pattern ids observed in the training chains. For each observed
    transition (current, next) the (alpha, beta) of the next state is kept
    and re-sampled empirically; unobserved transitions (reachable only
    through smoothing) fall back to the next pattern's marginal pool.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def fit(self, chains: Sequence[Sequence[StateTriplet]]):
        chains = [list(c) for c in chains if c]
        if not chains:
            raise ValueError("no training chains")
        ids = sorted({t.pattern_id for chain in chains for t in chain})
        index = {pid: i for i, pid in enumerate(ids)}
        k = len(ids)
        counts = np.zeros((k, k))
        cond: dict[tuple[int, int], list[tuple[int, float]]] = {}
        marginal: dict[int, list[tuple[int, float]]] = {pid: [] for pid in ids}
        for chain in chains:
            for t in chain:
                marginal[t.pattern_id].append((t.alpha, t.beta))
            for cur, nxt in zip(chain, chain[1:]):
                counts[index[cur.pattern_id], index[nxt.pattern_id]] += 1
                cond.setdefault((cur.pattern_id, nxt.pattern_id), []).append(
                    (nxt.alpha, nxt.beta))
        smoothed = counts + 1.0
        self.states_ = tuple(ids)
        self.transition_matrix_ = smoothed / smoothed.sum(axis=1, keepdims=True)
        self.cond_draws_ = cond
        self.marginal_draws_ = marginal
        self.initial_states_ = tuple(chain[0] for chain in chains)
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "transition_matrix_"):
            raise NotFittedError("call fit() first")

    def initial_state(self, rng: np.random.Generator) -> StateTriplet:
        self._check_fitted()
        return self.initial_states_[rng.integers(0, len(self.initial_states_))]

    def evolve(self, start: StateTriplet, length: int,
               seed: int = 0) -> list[StateTriplet]:
        """Sample a chain of `length` states beginning at `start`."""
        self._check_fitted()
        if length < 1:
            raise ValueError("length must be >= 1")
        rng = np.random.default_rng(seed)
        index = {pid: i for i, pid in enumerate(self.states_)}
        chain = [start]
        current = start.pattern_id
        while len(chain) < length:
            row = self.transition_matrix_[index[current]]
            nxt = self.states_[rng.choice(len(self.states_), p=row)]
            pool = self.cond_draws_.get((current, nxt)) \
                or self.marginal_draws_[nxt]
            alpha, beta = pool[rng.integers(0, len(pool))]
            chain.append(StateTriplet(pattern_id=nxt, alpha=alpha, beta=beta))
            current = nxt
        return chain


def fit_state_model(chains: Sequence[Sequence[StateTriplet]],
                    seed: int = 0) -> StateChainModel:
    return StateChainModel(seed=seed).fit(chains)


def evolve_states(model: StateChainModel, start: StateTriplet, length: int,
                  seed: int = 0) -> list[StateTriplet]:
    return model.evolve(start, length, seed=seed)
