"""Distributional similarity (JSD / TVD / HD) and validity scoring.

Two granularities are supported. ``column`` keeps one categorical
distribution over {-1, 0, 1} per column; ``field`` keeps one distribution
over observed ternary tuples per named header field. Either way the
reported number is the mean over the scope's units. Field granularity is
the default comparison convention: against uniform random input the
per-column mean is bounded at 2/3 TVD by construction, while field tuples
land near 1 for disjoint data, matching how a worst-case baseline should
score.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .codec import LAYOUT_V1, FieldLayout, decode_vector, encode_packet
from .packets import ProtocolKind, TraceDataset, validate_packet

TERNARY = (-1, 0, 1)
SCOPE_ALL = "all_features"


class ScopeMismatchError(ValueError):
    pass


def _scope_columns(scope: str, layout: FieldLayout) -> range:
    if scope == SCOPE_ALL:
        return range(0, 1088)
    if scope.startswith("protocol:"):
        proto = ProtocolKind.from_name(scope.split(":", 1)[1])
        return layout.protocol_columns(proto)
    raise ValueError(f"unknown scope {scope!r}")


@dataclass
class FeatureDistribution:
    """Empirical distribution of a vector set at one scope and granularity."""

    scope: str
    unit: str  # "column" | "field"
    sample_size: int
    layout_id: str
    column_ids: Optional[np.ndarray] = None
    column_probs: Optional[np.ndarray] = None  # (n_cols, 3), rows sum to 1
    field_probs: Optional[dict[str, dict[tuple, float]]] = None

    def units(self) -> list:
        if self.unit == "column":
            return list(self.column_ids)
        return sorted(self.field_probs)


def feature_distribution(vectors: Sequence[np.ndarray], scope: str = SCOPE_ALL,
                         unit: str = "column",
                         layout: FieldLayout = LAYOUT_V1) -> FeatureDistribution:
    """Per-column (or per-field) empirical frequencies over a vector set."""
    if len(vectors) == 0:
        raise ValueError("empty vector set")
    stack = np.stack([np.asarray(v, dtype=np.int8) for v in vectors])
    cols = _scope_columns(scope, layout)
    if unit == "column":
        sub = stack[:, list(cols)]
        counts = np.stack([(sub == v).sum(axis=0) for v in TERNARY], axis=1)
        probs = counts / counts.sum(axis=1, keepdims=True)
        return FeatureDistribution(
            scope=scope, unit=unit, sample_size=len(stack),
            layout_id=layout.layout_id,
            column_ids=np.asarray(list(cols)), column_probs=probs)
    if unit != "field":
        raise ValueError(f"unknown unit {unit!r}")
    col_set = set(cols)
    fields: dict[str, dict[tuple, float]] = {}
    for region, spec in layout.all_fields():
        if not (spec.start in col_set and (spec.stop - 1) in col_set):
            continue
        values, counts = np.unique(stack[:, spec.start:spec.stop], axis=0,
                                   return_counts=True)
        fields[spec.name] = {
            tuple(int(x) for x in row): c / len(stack)
            for row, c in zip(values, counts)
        }
    return FeatureDistribution(scope=scope, unit=unit, sample_size=len(stack),
                               layout_id=layout.layout_id, field_probs=fields)


def _check_match(p: FeatureDistribution, q: FeatureDistribution) -> None:
    if p.scope != q.scope or p.unit != q.unit or p.layout_id != q.layout_id:
        raise ScopeMismatchError(
            f"distributions disagree: ({p.scope}, {p.unit}, {p.layout_id}) vs "
            f"({q.scope}, {q.unit}, {q.layout_id})")


def _paired_rows(p: FeatureDistribution, q: FeatureDistribution):
    """Yield aligned probability array pairs, one per unit."""
    if p.unit == "column":
        for i in range(len(p.column_ids)):
            yield p.column_probs[i], q.column_probs[i]
    else:
        for name in p.field_probs:
            dp, dq = p.field_probs[name], q.field_probs[name]
            support = sorted(set(dp) | set(dq))
            yield (np.array([dp.get(s, 0.0) for s in support]),
                   np.array([dq.get(s, 0.0) for s in support]))


def _jsd_one(p: np.ndarray, q: np.ndarray) -> float:
    m = 0.5 * (p + q)
    def kl(a, b):
        nz = a > 0
        return float(np.sum(a[nz] * np.log2(a[nz] / b[nz])))
    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def jsd(p: FeatureDistribution, q: FeatureDistribution) -> float:
    """Mean per-unit Jensen-Shannon divergence, base 2, in [0, 1]."""
    _check_match(p, q)
    vals = [_jsd_one(a, b) for a, b in _paired_rows(p, q)]
    return float(np.mean(vals))


def tvd(p: FeatureDistribution, q: FeatureDistribution) -> float:
    """Mean per-unit total variation distance, in [0, 1]."""
    _check_match(p, q)
    vals = [0.5 * float(np.abs(a - b).sum()) for a, b in _paired_rows(p, q)]
    return float(np.mean(vals))


def hellinger(p: FeatureDistribution, q: FeatureDistribution) -> float:
    """Mean per-unit Hellinger distance, (1/sqrt(2))||sqrt(p)-sqrt(q)||."""
    _check_match(p, q)
    vals = [float(np.linalg.norm(np.sqrt(a) - np.sqrt(b)) / math.sqrt(2.0))
            for a, b in _paired_rows(p, q)]
    return float(np.mean(vals))


@dataclass
class MetricReport:
    """JSD/TVD/HD at each scope plus the synthetic validity rate."""

    scopes: dict[str, dict[str, float]]
    validity: float
    n_real: int
    n_synth: int
    unit: str
    layout_id: str
    config_hash: str

    def __post_init__(self) -> None:
        for metrics in self.scopes.values():
            for name, value in metrics.items():
                if not -1e-9 <= value <= 1.0 + 1e-9:
                    raise ValueError(f"{name}={value} outside [0, 1]")
        if not -1e-9 <= self.validity <= 1.0 + 1e-9:
            raise ValueError("validity outside [0, 1]")

    def to_json(self) -> str:
        payload = {
            "scopes": self.scopes, "validity": self.validity,
            "n_real": self.n_real, "n_synth": self.n_synth,
            "unit": self.unit, "layout_id": self.layout_id,
            "config_hash": self.config_hash,
        }
        return json.dumps(payload, sort_keys=True, indent=1)

    def to_text(self) -> str:
        lines = [
            f"{'scope':<22} {'JSD':>8} {'TVD':>8} {'HD':>8}",
            "-" * 50,
        ]
        for scope, m in self.scopes.items():
            lines.append(f"{scope:<22} {m['jsd']:>8.3f} {m['tvd']:>8.3f} "
                         f"{m['hd']:>8.3f}")
        lines.append("-" * 50)
        lines.append(f"{'validity':<22} {self.validity:>8.3f}")
        lines.append(f"samples: real={self.n_real} synth={self.n_synth} "
                     f"unit={self.unit}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        obj = json.loads(text)
        return cls(scopes=obj["scopes"], validity=obj["validity"],
                   n_real=obj["n_real"], n_synth=obj["n_synth"],
                   unit=obj["unit"], layout_id=obj["layout_id"],
                   config_hash=obj["config_hash"])


def _to_vectors(data, layout: FieldLayout) -> tuple[list[np.ndarray], Optional[TraceDataset]]:
    if isinstance(data, TraceDataset):
        return [encode_packet(p, layout) for p in data], data
    return [np.asarray(v, dtype=np.int8) for v in data], None


def _validity_of(vectors: list[np.ndarray], dataset: Optional[TraceDataset],
                 layout: FieldLayout) -> float:
    if dataset is not None:
        return dataset.validity_rate()
    ok = 0
    for vec in vectors:
        result = decode_vector(vec, layout)
        if result.record is not None and validate_packet(result.record).ok:
            ok += 1
    return ok / len(vectors)


def dominant_protocol(dataset_or_vectors, layout: FieldLayout = LAYOUT_V1) -> ProtocolKind:
    if isinstance(dataset_or_vectors, TraceDataset):
        counts = {}
        for p in dataset_or_vectors:
            counts[p.protocol] = counts.get(p.protocol, 0) + 1
        return max(sorted(counts, key=lambda k: k.name),
                   key=lambda k: counts[k])
    protos = {}
    for vec in dataset_or_vectors:
        result = decode_vector(np.asarray(vec, dtype=np.int8), layout)
        if result.record is not None:
            proto = result.record.protocol
            protos[proto] = protos.get(proto, 0) + 1
    if not protos:
        return ProtocolKind.TCP
    return max(sorted(protos, key=lambda k: k.name), key=lambda k: protos[k])


def evaluate(real, synth, layout: FieldLayout = LAYOUT_V1,
             unit: str = "field") -> MetricReport:
    """Score a synthetic set against a real one at both table scopes.

    Either side may be a TraceDataset or raw ternary vectors; the protocol
    scope uses the real side's dominant protocol span. Validity judges the
    synthetic side (undecodable rows count as invalid).
    """
    real_vecs, real_ds = _to_vectors(real, layout)
    synth_vecs, synth_ds = _to_vectors(synth, layout)
    if not real_vecs or not synth_vecs:
        raise ValueError("both datasets must be non-empty")
    proto = dominant_protocol(real_ds if real_ds is not None else real_vecs,
                              layout)
    scopes = {}
    for scope in (SCOPE_ALL, f"protocol:{proto.name.lower()}"):
        p = feature_distribution(real_vecs, scope, unit, layout)
        q = feature_distribution(synth_vecs, scope, unit, layout)
        scopes[scope] = {"jsd": jsd(p, q), "tvd": tvd(p, q),
                         "hd": hellinger(p, q)}
    convention = {"unit": unit, "layout_id": layout.layout_id}
    return MetricReport(
        scopes=scopes,
        validity=_validity_of(synth_vecs, synth_ds, layout),
        n_real=len(real_vecs), n_synth=len(synth_vecs), unit=unit,
        layout_id=layout.layout_id,
        config_hash=hashlib.sha256(
            json.dumps(convention, sort_keys=True).encode()).hexdigest()[:16],
    )


def export_distribution_csv(dist: FeatureDistribution, path) -> None:
    """Column-unit distributions export to CSV for independent recomputation."""
    if dist.unit != "column":
        raise ValueError("only column-unit distributions export to CSV")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["column", "p_neg", "p_zero", "p_pos"])
        for i, col in enumerate(dist.column_ids):
            writer.writerow([int(col)] + [repr(float(x))
                                          for x in dist.column_probs[i]])
