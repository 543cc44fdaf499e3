"""Per-cluster temporal generators: state evolution + pattern diffusion."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .clustering import Metadata, MetadataChain, make_chain
from .diffusion import PatternDiffusion
from .packets import BENIGN_LABEL
from .segmentation import (
    GreedySegmenter,
    Pattern,
    PatternLibrary,
    StateTriplet,
    normalize_window,
)
from .states import StateChainModel
from .timeseries import TimeSeries


@dataclass
class ClusterGenerator:
    """Everything needed to generate series for one cluster."""

    library: PatternLibrary
    diffusion: PatternDiffusion
    states: StateChainModel
    bin_width: float = 1.0

    def generate(self, target_len: int, seed: int = 0,
                 attack: str = BENIGN_LABEL, origin: float = 0.0) -> TimeSeries:
        """Alternate state evolution and pattern sampling into one series.

        Segments join with an additive offset so each segment starts where
        the previous one ended; values clamp at 0 and the result truncates
        to target_len.
        """
        if target_len < 2:
            raise ValueError("target_len must be >= 2")
        rng = np.random.default_rng(seed)
        start = self.states.initial_state(rng)
        # enough states to cover target_len even at the minimum alpha
        min_alpha = max(1, min(t.alpha for t in self.states.initial_states_))
        chain = self.states.evolve(
            start, length=max(1, -(-target_len // min_alpha)),
            seed=int(rng.integers(0, 2 ** 32)))
        pieces: list[np.ndarray] = []
        total = 0
        level = 0.0
        for state in chain:
            if total >= target_len:
                break
            pattern = self.library.get(state.pattern_id)
            segment = self.diffusion.sample(
                pattern, state.alpha, state.beta,
                seed=int(rng.integers(0, 2 ** 32)))
            segment = segment + (level - segment[0])
            level = float(segment[-1])
            pieces.append(segment)
            total += len(segment)
        values = np.concatenate(pieces)[:target_len]
        values = np.maximum(values, 0.0)
        return TimeSeries(values=values, bin_width=self.bin_width,
                          origin=origin, attack=attack)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "cluster-generator-v1",
            "bin_width": self.bin_width,
            "library": {
                "l_max": self.library.l_max,
                "patterns": [
                    {"values": p.values.tolist(), "support": p.support}
                    for p in self.library.patterns
                ],
            },
            "diffusion": self.diffusion.to_dict(),
            "states": {
                "states": list(self.states.states_),
                "transition_matrix": self.states.transition_matrix_.tolist(),
                "cond_draws": [
                    {"from": a, "to": b,
                     "draws": [[alpha, beta] for alpha, beta in pool]}
                    for (a, b), pool in sorted(self.states.cond_draws_.items())
                ],
                "marginal_draws": {
                    str(pid): [[alpha, beta] for alpha, beta in pool]
                    for pid, pool in sorted(self.states.marginal_draws_.items())
                },
                "initial_states": [
                    [t.pattern_id, t.alpha, t.beta]
                    for t in self.states.initial_states_
                ],
                "seed": self.states.seed,
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ClusterGenerator":
        if payload.get("format") != "cluster-generator-v1":
            raise ValueError("unsupported generator format")
        lib = PatternLibrary(l_max=payload["library"]["l_max"])
        for entry in payload["library"]["patterns"]:
            lib.patterns.append(Pattern(
                values=np.asarray(entry["values"], dtype=float),
                support=entry["support"]))
        states = StateChainModel(seed=payload["states"]["seed"])
        states.states_ = tuple(payload["states"]["states"])
        states.transition_matrix_ = np.asarray(
            payload["states"]["transition_matrix"], dtype=float)
        states.cond_draws_ = {
            (entry["from"], entry["to"]):
                [(int(a), float(b)) for a, b in entry["draws"]]
            for entry in payload["states"]["cond_draws"]
        }
        states.marginal_draws_ = {
            int(pid): [(int(a), float(b)) for a, b in pool]
            for pid, pool in payload["states"]["marginal_draws"].items()
        }
        states.initial_states_ = tuple(
            StateTriplet(pattern_id=int(p), alpha=int(a), beta=float(b))
            for p, a, b in payload["states"]["initial_states"])
        return cls(
            library=lib,
            diffusion=PatternDiffusion.from_dict(payload["diffusion"]),
            states=states,
            bin_width=payload["bin_width"],
        )


def generate_series(generator: ClusterGenerator, target_len: int,
                    seed: int = 0, attack: str = BENIGN_LABEL) -> TimeSeries:
    return generator.generate(target_len, seed=seed, attack=attack)


@dataclass
class TemporalModel:
    """The trained temporal stream: per-cluster generators + the source chain."""

    generators: dict[int, ClusterGenerator]
    metadata_chain: MetadataChain
    config_hash: str = ""

    def save(self, path) -> None:
        payload = {
            "format": "temporal-model-v1",
            "config_hash": self.config_hash,
            "metadata_chain": [
                {"attack": m.attack, "cluster": m.cluster,
                 "start": m.start, "duration": m.duration}
                for m in self.metadata_chain
            ],
            "generators": {str(cid): gen.to_dict()
                           for cid, gen in sorted(self.generators.items())},
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TemporalModel":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("format") != "temporal-model-v1":
            raise ValueError(f"{path}: unsupported temporal model format")
        chain = make_chain([
            Metadata(attack=m["attack"], cluster=m["cluster"],
                     start=m["start"], duration=m["duration"])
            for m in payload["metadata_chain"]
        ])
        gens = {int(cid): ClusterGenerator.from_dict(g)
                for cid, g in payload["generators"].items()}
        return cls(generators=gens, metadata_chain=chain,
                   config_hash=payload.get("config_hash", ""))


def train_temporal_model(seqs: Sequence[TimeSeries], labels: np.ndarray,
                         chain: MetadataChain, *, l_min: int = 16,
                         l_max: int = 64,
                         match_threshold: Optional[float] = None,
                         min_support: int = 3, diffusion_config: Optional[Mapping] = None,
                         seed: int = 0) -> TemporalModel:
    """Segment each cluster's series and train its diffusion + state models."""
    from .segmentation import calibrate_threshold

    diffusion_config = dict(diffusion_config or {})
    generators: dict[int, ClusterGenerator] = {}
    for cluster in sorted(set(int(c) for c in labels)):
        members = [s for s, c in zip(seqs, labels) if int(c) == cluster]
        threshold = match_threshold
        if threshold is None:
            try:
                threshold = calibrate_threshold(members, l_min, l_max)
            except ValueError:
                # tiny cluster: calibrate over the whole corpus instead
                threshold = calibrate_threshold(seqs, l_min, l_max)
        seg = GreedySegmenter(l_min=l_min, l_max=l_max,
                              match_threshold=threshold,
                              min_support=min_support).fit(members)
        grouped: dict[int, list[np.ndarray]] = {}
        for series, chain_states in zip(members, seg.chains_):
            pos = 0
            for state in chain_states:
                window = series.values[pos: pos + state.alpha]
                grouped.setdefault(state.pattern_id, []).append(
                    normalize_window(window, l_max))
                pos += state.alpha
        diffusion = PatternDiffusion(l_max=l_max, seed=seed,
                                     **diffusion_config)
        diffusion.fit(grouped, seg.library_)
        states = StateChainModel(seed=seed).fit(seg.chains_)
        bin_width = members[0].bin_width
        generators[cluster] = ClusterGenerator(
            library=seg.library_, diffusion=diffusion, states=states,
            bin_width=bin_width)
    return TemporalModel(generators=generators, metadata_chain=chain)
