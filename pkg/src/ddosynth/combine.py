"""Metadata-chain combination methods and final trace assembly."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .clustering import Metadata, MetadataChain, make_chain
from .packets import PacketRecord, TraceDataset
from .timeseries import TimeSeries

COMBINE_METHODS = ("random", "markov", "imitative")


@dataclass(frozen=True)
class CombinationConfig:
    method: str = "imitative"
    total_time: float = 0.0
    seed: int = 0
    counts: int = 1

    def __post_init__(self) -> None:
        if self.method not in COMBINE_METHODS:
            raise ValueError(f"method must be one of {COMBINE_METHODS}")
        if self.counts < 1:
            raise ValueError("counts must be >= 1")


def combine_random(chain: MetadataChain, cfg: CombinationConfig) -> MetadataChain:
    """Fresh (attack, cluster) draws with starts uniform on [0, T - duration].

    Durations are drawn uniformly from the observed duration multiset, so
    the output may contain more tuples than the source chain.
    """
    if cfg.method != "random":
        raise ValueError("config method must be 'random'")
    if not chain:
        raise ValueError("empty source chain")
    max_duration = max(m.duration for m in chain)
    if cfg.total_time <= max_duration:
        raise ValueError(
            f"total_time {cfg.total_time} must exceed the longest duration "
            f"{max_duration}")
    rng = np.random.default_rng(cfg.seed)
    attacks = sorted({m.attack for m in chain})
    clusters = sorted({m.cluster for m in chain})
    durations = [m.duration for m in chain]
    out = []
    for _ in range(cfg.counts):
        duration = durations[rng.integers(0, len(durations))]
        out.append(Metadata(
            attack=attacks[rng.integers(0, len(attacks))],
            cluster=clusters[rng.integers(0, len(clusters))],
            start=float(rng.uniform(0.0, cfg.total_time - duration)),
            duration=duration,
        ))
    return make_chain(out)


def fit_joint_transitions(chain: MetadataChain):
    """Add-one-smoothed first-order transitions over joint (attack, cluster)
    states, plus the empirical gap and per-state duration pools."""
    states = sorted({(m.attack, m.cluster) for m in chain})
    index = {s: i for i, s in enumerate(states)}
    counts = np.ones((len(states), len(states)))
    for cur, nxt in zip(chain, chain[1:]):
        counts[index[(cur.attack, cur.cluster)],
               index[(nxt.attack, nxt.cluster)]] += 1
    matrix = counts / counts.sum(axis=1, keepdims=True)
    gaps = [nxt.start - cur.start for cur, nxt in zip(chain, chain[1:])]
    durations: dict[tuple[str, int], list[float]] = {}
    for m in chain:
        durations.setdefault((m.attack, m.cluster), []).append(m.duration)
    return states, matrix, gaps, durations


def combine_markov(chain: MetadataChain, cfg: CombinationConfig) -> MetadataChain:
    """Walk the smoothed joint-state chain from the source's first state.

    Start times accumulate gaps drawn from the empirical inter-start
    distribution, so the output is sorted by construction.
    """
    if cfg.method != "markov":
        raise ValueError("config method must be 'markov'")
    if len(chain) < 2:
        raise ValueError("markov combination needs at least 2 source tuples")
    rng = np.random.default_rng(cfg.seed)
    states, matrix, gaps, durations = fit_joint_transitions(chain)
    index = {s: i for i, s in enumerate(states)}
    current = (chain[0].attack, chain[0].cluster)
    start = chain[0].start
    out = []
    for i in range(cfg.counts):
        if i > 0:
            current = states[rng.choice(len(states), p=matrix[index[current]])]
            start += gaps[rng.integers(0, len(gaps))]
        pool = durations[current]
        out.append(Metadata(attack=current[0], cluster=current[1],
                            start=float(start),
                            duration=pool[rng.integers(0, len(pool))]))
    return tuple(out)


def combine_imitative(chain: MetadataChain) -> MetadataChain:
    """The paper-exact identity: the synthetic chain is the source chain."""
    return tuple(chain)


def combine(chain: MetadataChain, cfg: CombinationConfig) -> MetadataChain:
    if cfg.method == "random":
        return combine_random(chain, cfg)
    if cfg.method == "markov":
        return combine_markov(chain, cfg)
    return combine_imitative(chain)


def series_to_timestamps(series: TimeSeries, start: float, duration: float,
                         seed: int = 0) -> list[float]:
    """Spread a count series over [start, start + duration) as timestamps.

    Bin counts round half-to-even; each bin's timestamps jitter uniformly
    within the bin, so re-binning at the same width recovers the rounded
    counts exactly.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    counts = np.rint(series.values).astype(int)
    width = duration / len(counts)
    rng = np.random.default_rng(seed)
    out: list[float] = []
    for b, count in enumerate(counts):
        if count <= 0:
            continue
        offsets = np.sort(rng.random(count))
        out.extend(float(t) for t in start + (b + offsets) * width)
    return out


def write_chain_jsonl(chain: MetadataChain, path,
                      config_hash: str = "") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if config_hash:
            fh.write(json.dumps({"config_hash": config_hash}) + "\n")
        for m in chain:
            fh.write(json.dumps(
                {"attack": m.attack, "cluster": m.cluster, "start": m.start,
                 "duration": m.duration}, sort_keys=True) + "\n")


def read_chain_jsonl(path) -> tuple[MetadataChain, str]:
    items = []
    config_hash = ""
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        if "config_hash" in obj and "attack" not in obj:
            config_hash = obj["config_hash"]
            continue
        items.append(Metadata(attack=obj["attack"], cluster=obj["cluster"],
                              start=obj["start"], duration=obj["duration"]))
    return make_chain(items), config_hash


class AssemblyError(RuntimeError):
    pass


def assemble_trace(chain: MetadataChain,
                   series_source: Callable[[int, int, int], TimeSeries],
                   field_source: Callable[[str, int, int], Sequence[PacketRecord]],
                   seed: int = 0, bin_width: float = 1.0,
                   provenance: str = "assembled") -> TraceDataset:
    """Generate a series and matching packets per tuple, then merge by time.

    series_source(cluster, target_len, seed) supplies the timing series for
    a cluster; field_source(attack, n, seed) supplies n packets of an
    attack type. Timestamps pair with packets in order; the merged trace is
    globally sorted.
    """
    rng = np.random.default_rng(seed)
    packets: list[PacketRecord] = []
    for m in chain:
        sub_seed = int(rng.integers(0, 2 ** 32))
        target_len = max(2, int(round(m.duration / bin_width)))
        try:
            series = series_source(m.cluster, target_len, sub_seed)
        except KeyError:
            raise AssemblyError(f"no series generator for cluster {m.cluster}") \
                from None
        timestamps = series_to_timestamps(series, m.start, m.duration,
                                          seed=sub_seed + 1)
        try:
            fields = field_source(m.attack, len(timestamps), sub_seed + 2)
        except KeyError:
            raise AssemblyError(f"no field source for attack {m.attack!r}") \
                from None
        if len(fields) != len(timestamps):
            raise AssemblyError(
                f"field source returned {len(fields)} packets for "
                f"{len(timestamps)} timestamps")
        packets.extend(
            p.with_timestamp(ts).with_label(m.attack)
            for p, ts in zip(fields, timestamps))
    packets.sort(key=lambda p: p.timestamp)
    return TraceDataset(tuple(packets), epoch=0.0, provenance=provenance)
