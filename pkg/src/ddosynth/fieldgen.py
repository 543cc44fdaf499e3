"""File bridge between packet data and the external image generator.

Training pairs go out as PNG rasters plus JSONL manifest rows; generated
images come back through the same manifest schema, get unpacked with
tolerant nearest-color decoding, and are scored for decode quality. The
manifest row shape is the adapter contract:

    {"image_path", "prompt", "phase", "view_categories", "layout_id",
     "row_count"}
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .codec import (
    LAYOUT_V1,
    DecodeResult,
    FieldLayout,
    ImageFormatError,
    decode_vector,
    encode_packet,
    iter_windows,
    pack_image,
    read_png,
    unpack_image,
    write_png,
    write_sidecar,
)
from .colors import ColorTable
from .packets import PacketRecord, TraceDataset, int_to_ip, validate_packet
from .prompts import VIEW_ORDER, ViewCatalog, training_prompt


def _safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", text)


def _category_packets(dataset: TraceDataset, view: str,
                      category: str) -> list[PacketRecord]:
    if view == "protocol":
        return [p for p in dataset if p.protocol.name == category]
    if view == "subnet":
        return [p for p in dataset
                if int_to_ip(p.src_ip & 0xFFFFFF00) + "/24" == category]
    return [p for p in dataset if p.attack_label == category]


def write_manifest(entries: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


def read_manifest(path) -> list[dict]:
    entries = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            entries.append(json.loads(line))
    return entries


def export_training_pairs(dataset: TraceDataset, layout: FieldLayout,
                          catalog: ViewCatalog, table: ColorTable, out_dir,
                          max_rows: int = 1024,
                          config_hash: str = "") -> list[dict]:
    """Write one image + single-view training prompt per populated category.

    Packets of a category pack into consecutive <=1024-row windows, each
    with a PNG raster, a JSON sidecar, and a train-phase manifest row.
    Returns the manifest entries (also written to out_dir/manifest.jsonl).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries: list[dict] = []
    for view in VIEW_ORDER:
        for j, category in enumerate(catalog.categories[view]):
            packets = _category_packets(dataset, view, category)
            if not packets:
                continue
            prompt = training_prompt(view, j, catalog, table)
            vectors = [encode_packet(p, layout) for p in packets]
            for w, window in enumerate(iter_windows(vectors, max_rows)):
                stem = f"{view}_{_safe_name(category)}_{w:03d}"
                rows = packets[w * max_rows:(w + 1) * max_rows]
                write_png(pack_image(window), out_dir / f"{stem}.png")
                write_sidecar(out_dir / f"{stem}.json", layout, rows,
                              dict(prompt.categories), len(window),
                              extra={"config_hash": config_hash}
                              if config_hash else None)
                entries.append({
                    # relative to the manifest so workspaces stay relocatable
                    "image_path": f"{stem}.png",
                    "prompt": prompt.text,
                    "phase": "train",
                    "view_categories": dict(prompt.categories),
                    "layout_id": layout.layout_id,
                    "row_count": len(window),
                })
    write_manifest(entries, out_dir / "manifest.jsonl")
    return entries


@dataclass
class ImageQuality:
    path: str
    rows: int = 0
    undecodable: int = 0
    invalid: int = 0
    ambiguous_pixels: int = 0
    error: Optional[str] = None

    @property
    def validity_rate(self) -> float:
        return 0.0 if self.rows == 0 else (self.rows - self.undecodable
                                           - self.invalid) / self.rows


@dataclass
class ImportReport:
    images: list[ImageQuality] = field(default_factory=list)

    @property
    def total_rows(self) -> int:
        return sum(q.rows for q in self.images)

    @property
    def validity_rate(self) -> float:
        total = self.total_rows
        if total == 0:
            return 0.0
        ok = sum(q.rows - q.undecodable - q.invalid for q in self.images)
        return ok / total


def import_generated_images(manifest, layout: FieldLayout = LAYOUT_V1,
                            base_dir=None,
                            ) -> tuple[list[tuple[PacketRecord, dict]], ImportReport]:
    """Decode manifest-listed images back into packet records.

    Relative image paths resolve against base_dir (or the manifest file's
    directory). Wrong-width images produce a per-file error entry instead
    of aborting the batch. Rows that fail protocol inference count as
    undecodable; decoded rows that fail conformance count as invalid. Both
    stay in the quality report rather than raising.
    """
    if not isinstance(manifest, (list, tuple)):
        if base_dir is None:
            base_dir = Path(manifest).parent
        manifest = read_manifest(manifest)
    base = Path(base_dir) if base_dir is not None else Path(".")
    records: list[tuple[PacketRecord, dict]] = []
    report = ImportReport()
    for entry in manifest:
        image_path = Path(entry["image_path"])
        if not image_path.is_absolute():
            image_path = base / image_path
        quality = ImageQuality(path=str(image_path))
        report.images.append(quality)
        try:
            raster = read_png(image_path)
        except (ImageFormatError, OSError) as exc:
            quality.error = str(exc)
            continue
        unpacked = unpack_image(raster)
        quality.ambiguous_pixels = unpacked.ambiguous
        quality.rows = len(unpacked.vectors)
        for vec in unpacked.vectors:
            result: DecodeResult = decode_vector(vec, layout)
            if result.undecodable or result.record is None:
                quality.undecodable += 1
                continue
            if not validate_packet(result.record).ok:
                quality.invalid += 1
            records.append((result.record, entry.get("view_categories", {})))
    return records, report


def export_surrogate_images(vectors_by_label: dict[str, list[np.ndarray]],
                            layout: FieldLayout, out_dir,
                            prompts: Optional[dict[str, str]] = None,
                            max_rows: int = 1024,
                            config_hash: str = "") -> list[dict]:
    """Write surrogate-sampled vectors through the same image/manifest
    contract the external generator uses, phase=generate."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries: list[dict] = []
    for label, vectors in sorted(vectors_by_label.items()):
        for w, window in enumerate(iter_windows(vectors, max_rows)):
            stem = f"gen_{_safe_name(label)}_{w:03d}"
            write_png(pack_image(window), out_dir / f"{stem}.png")
            write_sidecar(out_dir / f"{stem}.json", layout, None,
                          {"attack_type": label}, len(window),
                          extra={"config_hash": config_hash}
                          if config_hash else None)
            entries.append({
                "image_path": f"{stem}.png",
                "prompt": (prompts or {}).get(label, ""),
                "phase": "generate",
                "view_categories": {"attack_type": label},
                "layout_id": layout.layout_id,
                "row_count": len(window),
            })
    write_manifest(entries, out_dir / "manifest.jsonl")
    return entries
