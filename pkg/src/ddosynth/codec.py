"""Bidirectional packet <-> 1088-column ternary vector <-> RGB image codec.

Each packet becomes a fixed-width row of {-1, 0, 1}: header bits serialize
MSB-first into per-field column spans, columns of absent protocols are -1.
Rows render to RGB with -1 -> blue, 0 -> red, 1 -> green, and images decode
back tolerantly (nearest color) so generated rasters can be re-ingested.

Column map (layout ``nprint-1088-v1``)::

    [0,    160)  IPv4 base header
    [160,  640)  TCP: base header + fixed 320-bit option region (zeros)
    [640,  704)  UDP
    [704,  768)  ICMP: type/code/checksum + 32-bit rest-of-header (zeros)
    [768, 1088)  IP options / padding, absent in this model (always -1)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np
from PIL import Image

from .packets import (
    IPv4Header,
    IcmpFields,
    PacketRecord,
    ProtocolKind,
    TcpFields,
    UdpFields,
)

WIDTH = 1088
MAX_ROWS = 1024

# ternary value -> RGB color (order fixes the nearest-color tie-break)
COLOR_ORDER = (-1, 0, 1)
TERNARY_TO_RGB = {-1: (0, 0, 255), 0: (255, 0, 0), 1: (0, 255, 0)}


class EncodeError(ValueError):
    pass


class ImageFormatError(ValueError):
    pass


@dataclass(frozen=True)
class FieldSpec:
    name: str
    start: int
    width: int

    @property
    def stop(self) -> int:
        return self.start + self.width


@dataclass(frozen=True)
class FieldLayout:
    """Versioned column-span table; spans are disjoint and cover [0, 1088)."""

    layout_id: str
    ip_fields: tuple[FieldSpec, ...]
    l4_fields: dict[ProtocolKind, tuple[FieldSpec, ...]]
    spans: dict[str, tuple[int, int]]  # region name -> (start, stop)

    def l4_span(self, protocol: ProtocolKind) -> tuple[int, int]:
        return self.spans[protocol.name.lower()]

    def protocol_columns(self, protocol: ProtocolKind) -> range:
        start, stop = self.l4_span(protocol)
        return range(start, stop)

    def all_fields(self) -> list[tuple[str, FieldSpec]]:
        """(region, field) pairs covering every named field plus the pad region."""
        out = [("ip", f) for f in self.ip_fields]
        for proto in (ProtocolKind.TCP, ProtocolKind.UDP, ProtocolKind.ICMP):
            region = proto.name.lower()
            out.extend((region, f) for f in self.l4_fields[proto])
        start, stop = self.spans["pad"]
        out.append(("pad", FieldSpec("ip_opt", start, stop - start)))
        return out


def _specs(start: int, pairs: Sequence[tuple[str, int]]) -> tuple[FieldSpec, ...]:
    out = []
    pos = start
    for name, width in pairs:
        out.append(FieldSpec(name, pos, width))
        pos += width
    return tuple(out)


LAYOUT_V1 = FieldLayout(
    layout_id="nprint-1088-v1",
    ip_fields=_specs(0, [
        ("ip_ver", 4), ("ip_ihl", 4), ("ip_tos", 8), ("ip_tot_len", 16),
        ("ip_id", 16), ("ip_flags", 3), ("ip_frag_off", 13), ("ip_ttl", 8),
        ("ip_proto", 8), ("ip_ck", 16), ("ip_src", 32), ("ip_dst", 32),
    ]),
    l4_fields={
        ProtocolKind.TCP: _specs(160, [
            ("tcp_sport", 16), ("tcp_dport", 16), ("tcp_seq", 32),
            ("tcp_ack", 32), ("tcp_doff", 4), ("tcp_res", 4),
            ("tcp_flags", 8), ("tcp_window", 16), ("tcp_ck", 16),
            ("tcp_urg", 16), ("tcp_opt", 320),
        ]),
        ProtocolKind.UDP: _specs(640, [
            ("udp_sport", 16), ("udp_dport", 16), ("udp_len", 16),
            ("udp_ck", 16),
        ]),
        ProtocolKind.ICMP: _specs(704, [
            ("icmp_type", 8), ("icmp_code", 8), ("icmp_ck", 16),
            ("icmp_roh", 32),
        ]),
    },
    spans={"ip": (0, 160), "tcp": (160, 640), "udp": (640, 704),
           "icmp": (704, 768), "pad": (768, 1088)},
)


def _write_bits(vec: np.ndarray, spec: FieldSpec, value: int) -> None:
    if value < 0 or value >= (1 << spec.width):
        raise EncodeError(f"field {spec.name}: value {value} exceeds "
                          f"{spec.width}-bit width")
    for k in range(spec.width):
        vec[spec.start + k] = (value >> (spec.width - 1 - k)) & 1


def _read_bits(vec: np.ndarray, spec: FieldSpec, holes: list[int]) -> int:
    value = 0
    for k in range(spec.width):
        cell = int(vec[spec.start + k])
        if cell == -1:
            holes.append(spec.start + k)
            bit = 0
        else:
            bit = cell
        value = (value << 1) | bit
    return value


def _ip_field_values(p: PacketRecord) -> dict[str, int]:
    ip = p.ip_header
    return {
        "ip_ver": ip.version, "ip_ihl": ip.ihl, "ip_tos": ip.tos,
        "ip_tot_len": ip.total_length, "ip_id": ip.ident,
        "ip_flags": ip.flags, "ip_frag_off": ip.frag_offset,
        "ip_ttl": ip.ttl, "ip_proto": ip.proto_number, "ip_ck": ip.checksum,
        "ip_src": p.src_ip, "ip_dst": p.dst_ip,
    }


def _l4_field_values(p: PacketRecord) -> dict[str, int]:
    f = p.l4_fields
    if isinstance(f, TcpFields):
        return {
            "tcp_sport": p.src_port, "tcp_dport": p.dst_port,
            "tcp_seq": f.seq, "tcp_ack": f.ack, "tcp_doff": f.data_offset,
            "tcp_res": f.reserved, "tcp_flags": f.flags,
            "tcp_window": f.window, "tcp_ck": f.checksum,
            "tcp_urg": f.urgent, "tcp_opt": 0,
        }
    if isinstance(f, UdpFields):
        return {
            "udp_sport": p.src_port, "udp_dport": p.dst_port,
            "udp_len": f.length, "udp_ck": f.checksum,
        }
    return {"icmp_type": f.type, "icmp_code": f.code, "icmp_ck": f.checksum,
            "icmp_roh": 0}


def encode_packet(p: PacketRecord, layout: FieldLayout = LAYOUT_V1) -> np.ndarray:
    """Serialize a packet into its 1088-entry ternary vector (int8)."""
    vec = np.full(WIDTH, -1, dtype=np.int8)
    values = _ip_field_values(p)
    for spec in layout.ip_fields:
        _write_bits(vec, spec, values[spec.name])
    l4_values = _l4_field_values(p)
    for spec in layout.l4_fields[p.protocol]:
        _write_bits(vec, spec, l4_values[spec.name])
    return vec


@dataclass(frozen=True)
class DecodeResult:
    """Decoded packet plus decode-quality annotations.

    ``record`` is None only for undecodable rows (all l4 spans -1-dominated).
    ``holes`` lists columns that read -1 inside a claimed span (read as 0).
    A decoded record may well fail validate_packet; judging that is the
    validity metric's job, not the decoder's.
    """

    record: Optional[PacketRecord]
    holes: tuple[int, ...] = ()
    undecodable: bool = False


def _infer_protocol(vec: np.ndarray, layout: FieldLayout) -> Optional[ProtocolKind]:
    best: Optional[ProtocolKind] = None
    best_frac = 0.5  # spans at or below half non-(-1) are -1-dominated
    for proto in (ProtocolKind.TCP, ProtocolKind.UDP, ProtocolKind.ICMP):
        start, stop = layout.l4_span(proto)
        frac = float(np.mean(vec[start:stop] != -1))
        if frac > best_frac:
            best, best_frac = proto, frac
    return best


def decode_vector(vec: np.ndarray, layout: FieldLayout = LAYOUT_V1) -> DecodeResult:
    """Inverse of encode_packet, total over arbitrary ternary input."""
    vec = np.asarray(vec)
    if vec.shape != (WIDTH,):
        raise ValueError(f"expected a ({WIDTH},) vector, got {vec.shape}")
    protocol = _infer_protocol(vec, layout)
    if protocol is None:
        return DecodeResult(record=None, undecodable=True)

    holes: list[int] = []
    ip_vals = {spec.name: _read_bits(vec, spec, holes) for spec in layout.ip_fields}
    l4_vals = {spec.name: _read_bits(vec, spec, holes)
               for spec in layout.l4_fields[protocol]}

    header = IPv4Header(
        version=ip_vals["ip_ver"], ihl=ip_vals["ip_ihl"], tos=ip_vals["ip_tos"],
        total_length=ip_vals["ip_tot_len"], ident=ip_vals["ip_id"],
        flags=ip_vals["ip_flags"], frag_offset=ip_vals["ip_frag_off"],
        ttl=ip_vals["ip_ttl"], proto_number=ip_vals["ip_proto"],
        checksum=ip_vals["ip_ck"],
    )
    prefix = protocol.name.lower()
    sport = l4_vals.get(f"{prefix}_sport")
    dport = l4_vals.get(f"{prefix}_dport")
    if protocol is ProtocolKind.TCP:
        l4 = TcpFields(l4_vals["tcp_seq"], l4_vals["tcp_ack"], l4_vals["tcp_doff"],
                       l4_vals["tcp_res"], l4_vals["tcp_flags"],
                       l4_vals["tcp_window"], l4_vals["tcp_ck"], l4_vals["tcp_urg"])
    elif protocol is ProtocolKind.UDP:
        l4 = UdpFields(l4_vals["udp_len"], l4_vals["udp_ck"])
    else:
        l4 = IcmpFields(l4_vals["icmp_type"], l4_vals["icmp_code"],
                        l4_vals["icmp_ck"])
    record = PacketRecord(
        timestamp=0.0, protocol=protocol,
        src_ip=ip_vals["ip_src"], dst_ip=ip_vals["ip_dst"],
        src_port=sport, dst_port=dport, ip_header=header, l4_fields=l4,
    )
    return DecodeResult(record=record, holes=tuple(holes))


# ---------------------------------------------------------------------------
# images


@dataclass(frozen=True)
class BitImage:
    """A stack of ternary rows and its RGB raster form."""

    ternary: np.ndarray  # (height, 1088) int8 in {-1, 0, 1}

    def __post_init__(self) -> None:
        t = self.ternary
        if t.ndim != 2 or t.shape[1] != WIDTH:
            raise ImageFormatError(f"ternary matrix must be (h, {WIDTH})")
        if not 1 <= t.shape[0] <= MAX_ROWS:
            raise ImageFormatError(
                f"image height {t.shape[0]} outside [1, {MAX_ROWS}]")
        if not np.isin(t, (-1, 0, 1)).all():
            raise ImageFormatError("ternary entries must be -1, 0, or 1")

    @property
    def height(self) -> int:
        return int(self.ternary.shape[0])

    @property
    def raster(self) -> np.ndarray:
        """(height, 1088, 3) uint8: blue for -1, red for 0, green for 1."""
        img = np.zeros((self.height, WIDTH, 3), dtype=np.uint8)
        for value, rgb in TERNARY_TO_RGB.items():
            img[self.ternary == value] = rgb
        return img


def pack_image(vectors: Sequence[np.ndarray]) -> BitImage:
    if not 1 <= len(vectors) <= MAX_ROWS:
        raise ImageFormatError(
            f"pack_image takes 1..{MAX_ROWS} rows, got {len(vectors)}")
    return BitImage(np.stack([np.asarray(v, dtype=np.int8) for v in vectors]))


@dataclass(frozen=True)
class UnpackResult:
    vectors: list[np.ndarray]
    ambiguous: int  # pixels equidistant from two colors, tie-broken


def unpack_image(raster: np.ndarray) -> UnpackResult:
    """Map each pixel to the nearest of the three pure colors.

    Ties break by the fixed order blue < red < green and are counted, so
    approximate colors from external generators decode deterministically.
    """
    raster = np.asarray(raster)
    if isinstance(raster, np.ndarray) and raster.ndim == 2:
        raise ImageFormatError("expected an RGB raster, got a 2-D array")
    if raster.ndim != 3 or raster.shape[2] != 3 or raster.shape[1] != WIDTH:
        raise ImageFormatError(f"raster must be (h, {WIDTH}, 3)")
    pixels = raster.astype(np.int64)
    dists = np.stack(
        [((pixels - np.array(TERNARY_TO_RGB[v])) ** 2).sum(axis=2)
         for v in COLOR_ORDER]
    )  # (3, h, w); argmin picks the first of tied colors: blue < red < green
    choice = dists.argmin(axis=0)
    sorted_d = np.sort(dists, axis=0)
    ambiguous = int((sorted_d[0] == sorted_d[1]).sum())
    ternary = np.array(COLOR_ORDER, dtype=np.int8)[choice]
    return UnpackResult(vectors=list(ternary), ambiguous=ambiguous)


def iter_windows(vectors: Sequence[np.ndarray],
                 window: int = MAX_ROWS) -> Iterator[list[np.ndarray]]:
    """Split a row stack into consecutive windows of at most `window` rows."""
    for start in range(0, len(vectors), window):
        yield list(vectors[start:start + window])


def write_png(image: BitImage, path) -> None:
    Image.fromarray(image.raster, mode="RGB").save(path, format="PNG")


def read_png(path) -> np.ndarray:
    with Image.open(path) as img:
        raster = np.asarray(img.convert("RGB"))
    if raster.shape[1] != WIDTH:
        raise ImageFormatError(
            f"{path}: image is {raster.shape[1]} px wide, expected {WIDTH}")
    return raster


def write_sidecar(path, layout: FieldLayout, rows: Sequence[PacketRecord] | None,
                  view_categories: dict[str, str], row_count: int,
                  extra: Optional[dict] = None) -> None:
    payload = {
        "layout_id": layout.layout_id,
        "row_count": row_count,
        "view_categories": view_categories,
    }
    if rows is not None:
        payload["row_protocols"] = [p.protocol.name for p in rows]
        payload["row_labels"] = [p.attack_label for p in rows]
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")


def read_sidecar(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
