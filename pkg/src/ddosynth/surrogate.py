"""Column-wise statistical surrogate for packet fields.

Stands in for the external image generator so the pipeline runs end to end
on a CPU. Per (protocol, attack label) it keeps one categorical
distribution over {-1, 0, 1} per column; structural columns (everything a
conformance rule reads, the structurally-zero option regions, and the
absent-protocol spans) are pinned to their per-column modal values, the
rest carry add-one smoothing. Columns are sampled independently, so
inter-field correlations are deliberately not modeled.
"""

from __future__ import annotations

import json
import warnings
from pathlib import Path
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .codec import LAYOUT_V1, FieldLayout, decode_vector, encode_packet
from .packets import PacketRecord, ProtocolKind, TraceDataset

TERNARY = np.array([-1, 0, 1], dtype=np.int8)

# fields whose columns are pinned to modal values when sampling
_MASKED_IP_FIELDS = ("ip_ver", "ip_ihl", "ip_tot_len", "ip_flags",
                     "ip_frag_off", "ip_proto")
_MASKED_L4_FIELDS = {
    ProtocolKind.TCP: ("tcp_doff", "tcp_res", "tcp_flags", "tcp_opt"),
    ProtocolKind.UDP: ("udp_len",),
    ProtocolKind.ICMP: ("icmp_type", "icmp_roh"),
}

CategoryKey = tuple[str, str]  # (protocol name, attack label)


def structural_mask(protocol: ProtocolKind,
                    layout: FieldLayout = LAYOUT_V1) -> np.ndarray:
    """Boolean mask of columns pinned for a protocol's samples."""
    mask = np.zeros(1088, dtype=bool)
    for spec in layout.ip_fields:
        if spec.name in _MASKED_IP_FIELDS:
            mask[spec.start:spec.stop] = True
    for spec in layout.l4_fields[protocol]:
        if spec.name in _MASKED_L4_FIELDS[protocol]:
            mask[spec.start:spec.stop] = True
    for other in ProtocolKind:
        if other is not protocol:
            start, stop = layout.l4_span(other)
            mask[start:stop] = True
    start, stop = layout.spans["pad"]
    mask[start:stop] = True
    return mask


class FieldSurrogate(BaseEstimator):
    """Per-category column distributions over encoded packets."""

    def __init__(self, layout_id: str = "nprint-1088-v1"):
        self.layout_id = layout_id

    def fit(self, dataset: TraceDataset, layout: FieldLayout = LAYOUT_V1):
        if layout.layout_id != self.layout_id:
            raise ValueError(f"layout {layout.layout_id} != {self.layout_id}")
        groups: dict[CategoryKey, list[np.ndarray]] = {}
        for p in dataset:
            groups.setdefault((p.protocol.name, p.attack_label), []).append(
                encode_packet(p, layout))
        categories: dict[CategoryKey, dict] = {}
        for key, vectors in sorted(groups.items()):
            if not vectors:
                warnings.warn(f"category {key} is empty, skipped")
                continue
            stack = np.stack(vectors)
            counts = np.stack([(stack == v).sum(axis=0) for v in TERNARY],
                              axis=1).astype(float)  # (1088, 3)
            modal = TERNARY[counts.argmax(axis=1)]
            probs = (counts + 1.0) / (counts.sum(axis=1, keepdims=True) + 3.0)
            mask = structural_mask(ProtocolKind.from_name(key[0]), layout)
            categories[key] = {
                "probs": probs, "modal": modal, "mask": mask,
                "count": len(vectors),
            }
        if not categories:
            raise ValueError("no non-empty categories to fit")
        self.categories_ = categories
        self.layout_ = layout
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "categories_"):
            raise NotFittedError("call fit() first")

    def _resolve(self, category) -> list[CategoryKey]:
        """A category may be a (protocol, label) pair, a protocol name, or a
        label; returns the matching fitted keys."""
        self._check_fitted()
        if isinstance(category, tuple):
            proto, label = category
            name = proto.name if isinstance(proto, ProtocolKind) else str(proto)
            keys = [k for k in self.categories_ if k == (name.upper(), label)]
        elif isinstance(category, ProtocolKind) or \
                str(category).upper() in ProtocolKind.__members__:
            name = category.name if isinstance(category, ProtocolKind) \
                else str(category).upper()
            keys = [k for k in self.categories_ if k[0] == name]
        else:
            keys = [k for k in self.categories_ if k[1] == category]
        if not keys:
            raise KeyError(f"unknown surrogate category {category!r}")
        return keys

    def sample_vectors(self, category, n: int, seed: int = 0) -> list[np.ndarray]:
        """n independent column-wise draws honoring the structural mask."""
        keys = self._resolve(category)
        if n == 0:
            return []
        rng = np.random.default_rng(seed)
        weights = np.array([self.categories_[k]["count"] for k in keys],
                           dtype=float)
        picks = rng.choice(len(keys), size=n, p=weights / weights.sum())
        out: list[Optional[np.ndarray]] = [None] * n
        for ki, key in enumerate(keys):
            idx = np.flatnonzero(picks == ki)
            if len(idx) == 0:
                continue
            cat = self.categories_[key]
            free = ~cat["mask"]
            cum = np.cumsum(cat["probs"][free], axis=1)  # (n_free, 3)
            u = rng.random((len(idx), free.sum()))
            choice = (u[:, :, None] > cum[None, :, :]).sum(axis=2)
            batch = np.tile(cat["modal"], (len(idx), 1))
            batch[:, free] = TERNARY[choice]
            for row, pos in enumerate(idx):
                out[pos] = batch[row].astype(np.int8)
        return [v for v in out if v is not None]

    def sample_packets(self, category, n: int, seed: int = 0,
                       label: Optional[str] = None) -> list[PacketRecord]:
        """Sample vectors and decode them into packet records."""
        records = []
        for vec in self.sample_vectors(category, n, seed):
            result = decode_vector(vec, self.layout_)
            if result.record is None:  # cannot happen: protocol span is pinned
                raise RuntimeError("surrogate produced an undecodable vector")
            record = result.record
            if label is not None:
                record = record.with_label(label)
            elif not isinstance(category, tuple) and \
                    not str(category).upper() in ProtocolKind.__members__:
                record = record.with_label(str(category))
            records.append(record)
        return records

    # -- serialization -----------------------------------------------------

    def save(self, path, config_hash: str = "") -> None:
        self._check_fitted()
        payload = {
            "format": "field-surrogate-v1",
            "layout_id": self.layout_id,
            "config_hash": config_hash,
            "categories": [
                {
                    "protocol": key[0], "label": key[1],
                    "count": cat["count"],
                    "probs": cat["probs"].tolist(),
                    "modal": cat["modal"].tolist(),
                    "mask": cat["mask"].astype(int).tolist(),
                }
                for key, cat in sorted(self.categories_.items())
            ],
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True),
                              encoding="utf-8")

    @classmethod
    def load(cls, path, layout: FieldLayout = LAYOUT_V1) -> "FieldSurrogate":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("format") != "field-surrogate-v1":
            raise ValueError(f"{path}: unsupported surrogate format")
        model = cls(layout_id=payload["layout_id"])
        model.categories_ = {
            (c["protocol"], c["label"]): {
                "probs": np.asarray(c["probs"], dtype=float),
                "modal": np.asarray(c["modal"], dtype=np.int8),
                "mask": np.asarray(c["mask"], dtype=bool),
                "count": c["count"],
            }
            for c in payload["categories"]
        }
        model.layout_ = layout
        model.config_hash = payload.get("config_hash", "")
        return model


def fit_surrogate(dataset: TraceDataset,
                  layout: FieldLayout = LAYOUT_V1) -> FieldSurrogate:
    return FieldSurrogate(layout_id=layout.layout_id).fit(dataset, layout)


def sample_packets(model: FieldSurrogate, category, n: int,
                   seed: int = 0) -> list[np.ndarray]:
    return model.sample_vectors(category, n, seed=seed)
