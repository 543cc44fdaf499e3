"""Trace ingestion: classic pcap and the canonical CSV intermediate.

The CSV schema (header required, UTF-8) is::

    ts,proto,sip,dip,sport,dport,ip_ver,ihl,tos,tot_len,ip_id,ip_flags,
    frag_off,ttl,ip_ck,l4f1,l4f2,l4f3,l4f4,l4f5,l4f6,l4f7,l4f8,label

The protocol-specific l4f columns are:

    proto  l4f1    l4f2      l4f3         l4f4      l4f5   l4f6    l4f7      l4f8
    tcp    seq     ack       data_offset  reserved  flags  window  checksum  urgent
    udp    length  checksum  -            -         -      -       -         -
    icmp   type    code      checksum     -         -      -       -         -

An empty cell means the field is absent for that protocol.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .packets import (
    BENIGN_LABEL,
    EmptyTraceError,
    IPv4Header,
    IcmpFields,
    PacketRecord,
    ProtocolKind,
    TcpFields,
    TraceDataset,
    UdpFields,
    int_to_ip,
    ip_to_int,
)

PCAP_MAGIC_LE = 0xA1B2C3D4
PCAP_MAGIC_BE = 0xD4C3B2A1
LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101

CSV_COLUMNS = (
    "ts,proto,sip,dip,sport,dport,ip_ver,ihl,tos,tot_len,ip_id,ip_flags,"
    "frag_off,ttl,ip_ck,l4f1,l4f2,l4f3,l4f4,l4f5,l4f6,l4f7,l4f8,label"
).split(",")


class IngestError(ValueError):
    """Unreadable or malformed input; carries the byte offset or line number."""


class RowError(IngestError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


# ---------------------------------------------------------------------------
# label rules


@dataclass(frozen=True)
class LabelRule:
    """One `predicate -> label` line; conditions are ANDed, `*` matches all."""

    label: str
    proto: Optional[ProtocolKind] = None
    sport: Optional[int] = None
    dport: Optional[int] = None
    sip_net: Optional[tuple[int, int]] = None  # (network, prefix_len)
    dip_net: Optional[tuple[int, int]] = None

    def matches(self, ts: float, proto: ProtocolKind, sip: int, dip: int,
                sport: Optional[int], dport: Optional[int]) -> bool:
        if self.proto is not None and proto is not self.proto:
            return False
        if self.sport is not None and sport != self.sport:
            return False
        if self.dport is not None and dport != self.dport:
            return False
        for net, addr in ((self.sip_net, sip), (self.dip_net, dip)):
            if net is not None:
                network, bits = net
                mask = 0 if bits == 0 else (0xFFFFFFFF << (32 - bits)) & 0xFFFFFFFF
                if (addr & mask) != (network & mask):
                    return False
        return True


def _parse_net(text: str) -> tuple[int, int]:
    if "/" in text:
        addr, bits = text.split("/", 1)
        return ip_to_int(addr), int(bits)
    return ip_to_int(text), 32


def parse_label_rules(lines: Iterable[str]) -> list[LabelRule]:
    """Parse `predicate -> label` lines; first match wins when applied."""
    rules: list[LabelRule] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "->" not in line:
            raise IngestError(f"rule line {lineno}: missing '->'")
        pred, label = (part.strip() for part in line.rsplit("->", 1))
        if not label:
            raise IngestError(f"rule line {lineno}: empty label")
        kwargs: dict = {}
        if pred != "*":
            for cond in pred.split(" and "):
                if "=" not in cond:
                    raise IngestError(f"rule line {lineno}: bad condition {cond!r}")
                key, value = (s.strip() for s in cond.split("=", 1))
                if key == "proto":
                    kwargs["proto"] = ProtocolKind.from_name(value)
                elif key == "sport":
                    kwargs["sport"] = int(value)
                elif key == "dport":
                    kwargs["dport"] = int(value)
                elif key == "sip":
                    kwargs["sip_net"] = _parse_net(value)
                elif key == "dip":
                    kwargs["dip_net"] = _parse_net(value)
                else:
                    raise IngestError(f"rule line {lineno}: unknown key {key!r}")
        rules.append(LabelRule(label=label, **kwargs))
    return rules


def load_label_rules(path) -> list[LabelRule]:
    return parse_label_rules(Path(path).read_text(encoding="utf-8").splitlines())


def apply_rules(rules: Sequence[LabelRule], ts, proto, sip, dip, sport, dport) -> str:
    for rule in rules:
        if rule.matches(ts, proto, sip, dip, sport, dport):
            return rule.label
    return BENIGN_LABEL


# ---------------------------------------------------------------------------
# pcap


def _parse_ipv4(data: bytes, ts: float, rules: Sequence[LabelRule]) -> Optional[PacketRecord]:
    if len(data) < 20:
        return None
    version = data[0] >> 4
    ihl = data[0] & 0x0F
    if version != 4 or len(data) < ihl * 4:
        return None
    tos = data[1]
    tot_len, ident, flags_frag = struct.unpack(">HHH", data[2:8])
    flags = flags_frag >> 13
    frag_offset = flags_frag & 0x1FFF
    ttl, proto_num, ip_ck = data[8], data[9], struct.unpack(">H", data[10:12])[0]
    sip, dip = struct.unpack(">II", data[12:20])
    if proto_num not in (1, 6, 17):
        return None
    protocol = ProtocolKind.from_number(proto_num)
    payload = data[ihl * 4:]

    sport: Optional[int] = None
    dport: Optional[int] = None
    l4: object
    if protocol is ProtocolKind.TCP:
        if len(payload) < 20:
            return None
        sport, dport, seq, ack = struct.unpack(">HHII", payload[:12])
        data_offset = payload[12] >> 4
        reserved = payload[12] & 0x0F
        tcp_flags = payload[13]
        window, ck, urg = struct.unpack(">HHH", payload[14:20])
        l4 = TcpFields(seq, ack, data_offset, reserved, tcp_flags, window, ck, urg)
    elif protocol is ProtocolKind.UDP:
        if len(payload) < 8:
            return None
        sport, dport, length, ck = struct.unpack(">HHHH", payload[:8])
        l4 = UdpFields(length, ck)
    else:
        if len(payload) < 4:
            return None
        itype, code, ck = payload[0], payload[1], struct.unpack(">H", payload[2:4])[0]
        l4 = IcmpFields(itype, code, ck)

    header = IPv4Header(version, ihl, tos, tot_len, ident, flags, frag_offset,
                        ttl, proto_num, ip_ck)
    label = apply_rules(rules, ts, protocol, sip, dip, sport, dport)
    return PacketRecord(
        timestamp=ts, protocol=protocol, src_ip=sip, dst_ip=dip,
        src_port=sport, dst_port=dport, ip_header=header, l4_fields=l4,
        attack_label=label,
    )


def ingest_pcap(path, label_rules: Sequence[LabelRule] = ()) -> TraceDataset:
    """Read a classic libpcap file into a timestamp-rebased TraceDataset.

    Non-IPv4 frames and protocols other than TCP/UDP/ICMP are counted and
    skipped. Timestamps are rebased so the first packet sits at 0.0.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 24:
        raise IngestError(f"{path}: truncated global header at offset {len(raw)}")
    magic = struct.unpack("<I", raw[:4])[0]
    if magic == PCAP_MAGIC_LE:
        endian = "<"
    elif magic == PCAP_MAGIC_BE:
        endian = ">"
    else:
        raise IngestError(f"{path}: unrecognized pcap magic 0x{magic:08x}")
    linktype = struct.unpack(endian + "I", raw[20:24])[0]
    if linktype not in (LINKTYPE_ETHERNET, LINKTYPE_RAW):
        raise IngestError(f"{path}: unsupported link type {linktype}")

    packets: list[PacketRecord] = []
    skipped = 0
    offset = 24
    while offset < len(raw):
        if offset + 16 > len(raw):
            raise IngestError(f"{path}: truncated record header at offset {offset}")
        ts_sec, ts_usec, incl_len, _orig = struct.unpack(
            endian + "IIII", raw[offset:offset + 16]
        )
        offset += 16
        if offset + incl_len > len(raw):
            raise IngestError(f"{path}: truncated packet data at offset {offset}")
        frame = raw[offset:offset + incl_len]
        offset += incl_len
        ts = ts_sec + ts_usec * 1e-6

        if linktype == LINKTYPE_ETHERNET:
            if len(frame) < 14 or struct.unpack(">H", frame[12:14])[0] != 0x0800:
                skipped += 1
                continue
            ip_bytes = frame[14:]
        else:
            ip_bytes = frame
        record = _parse_ipv4(ip_bytes, ts, label_rules)
        if record is None:
            skipped += 1
            continue
        packets.append(record)

    if not packets:
        raise EmptyTraceError(f"{path}: no admissible IPv4 TCP/UDP/ICMP packets")
    packets.sort(key=lambda p: p.timestamp)
    epoch = packets[0].timestamp
    rebased = [p.with_timestamp(p.timestamp - epoch) for p in packets]
    return TraceDataset(tuple(rebased), epoch=epoch, provenance=str(path),
                        skipped=skipped)


# ---------------------------------------------------------------------------
# CSV


def _pack_l4(p: PacketRecord) -> list[str]:
    f = p.l4_fields
    if isinstance(f, TcpFields):
        vals = [f.seq, f.ack, f.data_offset, f.reserved, f.flags, f.window,
                f.checksum, f.urgent]
    elif isinstance(f, UdpFields):
        vals = [f.length, f.checksum, "", "", "", "", "", ""]
    else:
        vals = [f.type, f.code, f.checksum, "", "", "", "", ""]
    return [str(v) for v in vals]


def export_csv(dataset: TraceDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for p in dataset:
            ip = p.ip_header
            writer.writerow(
                [repr(float(p.timestamp)), p.protocol.name.lower(),
                 int_to_ip(p.src_ip), int_to_ip(p.dst_ip),
                 "" if p.src_port is None else p.src_port,
                 "" if p.dst_port is None else p.dst_port,
                 ip.version, ip.ihl, ip.tos, ip.total_length, ip.ident,
                 ip.flags, ip.frag_offset, ip.ttl, ip.checksum]
                + _pack_l4(p)
                + [p.attack_label]
            )


def _row_to_record(row: dict[str, str], lineno: int) -> PacketRecord:
    def req_int(key: str) -> int:
        cell = row[key].strip()
        if cell == "":
            raise RowError(lineno, f"missing value for {key}")
        return int(cell)

    protocol = ProtocolKind.from_name(row["proto"])
    sport = dport = None
    if protocol is not ProtocolKind.ICMP:
        sport, dport = req_int("sport"), req_int("dport")
        for name, port in (("sport", sport), ("dport", dport)):
            if not 0 <= port <= 65535:
                raise RowError(lineno, f"{name} out of range: {port}")

    header = IPv4Header(
        version=req_int("ip_ver"), ihl=req_int("ihl"), tos=req_int("tos"),
        total_length=req_int("tot_len"), ident=req_int("ip_id"),
        flags=req_int("ip_flags"), frag_offset=req_int("frag_off"),
        ttl=req_int("ttl"), proto_number=protocol.number,
        checksum=req_int("ip_ck"),
    )
    l4 = row["l4f1"], row["l4f2"], row["l4f3"], row["l4f4"], row["l4f5"], \
        row["l4f6"], row["l4f7"], row["l4f8"]
    try:
        if protocol is ProtocolKind.TCP:
            fields = TcpFields(*(int(v) for v in l4))
        elif protocol is ProtocolKind.UDP:
            fields = UdpFields(int(l4[0]), int(l4[1]))
        else:
            fields = IcmpFields(int(l4[0]), int(l4[1]), int(l4[2]))
    except ValueError as exc:
        raise RowError(lineno, f"bad l4 field: {exc}") from None

    ts = float(row["ts"])
    label = row["label"].strip() or BENIGN_LABEL
    try:
        return PacketRecord(
            timestamp=ts, protocol=protocol,
            src_ip=ip_to_int(row["sip"]), dst_ip=ip_to_int(row["dip"]),
            src_port=sport, dst_port=dport, ip_header=header,
            l4_fields=fields, attack_label=label,
        )
    except ValueError as exc:
        raise RowError(lineno, str(exc)) from None


def ingest_csv(path, strict: bool = True) -> TraceDataset:
    """Read the canonical CSV. Strict mode aborts on the first bad row;
    lenient mode skips bad rows and counts them."""
    packets: list[PacketRecord] = []
    skipped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise IngestError(f"{path}: header does not match the canonical schema")
        for lineno, row in enumerate(reader, start=2):
            try:
                packets.append(_row_to_record(row, lineno))
            except RowError:
                if strict:
                    raise
                skipped += 1
    if not packets:
        raise EmptyTraceError(f"{path}: no admissible rows")
    packets.sort(key=lambda p: p.timestamp)
    base = packets[0].timestamp
    if base != 0.0:
        packets = [p.with_timestamp(p.timestamp - base) for p in packets]
    return TraceDataset(tuple(packets), epoch=base, provenance=str(path),
                        skipped=skipped)


# ---------------------------------------------------------------------------
# pcap export


def _serialize_ipv4(p: PacketRecord) -> bytes:
    ip = p.ip_header
    flags_frag = ((ip.flags & 0x7) << 13) | (ip.frag_offset & 0x1FFF)
    head = struct.pack(
        ">BBHHHBBHII",
        ((ip.version & 0xF) << 4) | (ip.ihl & 0xF), ip.tos & 0xFF,
        ip.total_length & 0xFFFF, ip.ident & 0xFFFF, flags_frag,
        ip.ttl & 0xFF, ip.proto_number & 0xFF, ip.checksum & 0xFFFF,
        p.src_ip, p.dst_ip,
    )
    f = p.l4_fields
    if isinstance(f, TcpFields):
        l4 = struct.pack(
            ">HHIIBBHHH", p.src_port, p.dst_port, f.seq & 0xFFFFFFFF,
            f.ack & 0xFFFFFFFF, ((f.data_offset & 0xF) << 4) | (f.reserved & 0xF),
            f.flags & 0xFF, f.window & 0xFFFF, f.checksum & 0xFFFF,
            f.urgent & 0xFFFF,
        )
    elif isinstance(f, UdpFields):
        l4 = struct.pack(">HHHH", p.src_port, p.dst_port,
                         f.length & 0xFFFF, f.checksum & 0xFFFF)
    else:
        l4 = struct.pack(">BBHI", f.type & 0xFF, f.code & 0xFF,
                         f.checksum & 0xFFFF, 0)
    return head + l4


def export_pcap(dataset: TraceDataset, path) -> None:
    """Write the trace as a classic little-endian pcap (raw-IP link type).

    Header bytes are re-serialized from fields; checksum fields are written
    as stored, which is zero for synthetic traffic.
    """
    with open(path, "wb") as fh:
        fh.write(struct.pack("<IHHiIII", PCAP_MAGIC_LE, 2, 4, 0, 0, 65535,
                             LINKTYPE_RAW))
        for p in dataset:
            data = _serialize_ipv4(p)
            absolute = dataset.epoch + p.timestamp
            sec = int(absolute)
            usec = int(round((absolute - sec) * 1e6))
            if usec == 1_000_000:
                sec, usec = sec + 1, 0
            fh.write(struct.pack("<IIII", sec, usec, len(data), len(data)))
            fh.write(data)
