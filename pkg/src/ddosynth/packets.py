"""Canonical packet representation, attack labels, and protocol-conformance rules.

All types here are frozen dataclasses: once constructed they never change,
which keeps downstream processing deterministic and thread-safe.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Union

IP_FLAG_RESERVED = 0b100
IP_FLAG_DF = 0b010
IP_FLAG_MF = 0b001

TCP_FLAG_CWR = 0x80
TCP_FLAG_ECE = 0x40
TCP_FLAG_URG = 0x20
TCP_FLAG_ACK = 0x10
TCP_FLAG_PSH = 0x08
TCP_FLAG_RST = 0x04
TCP_FLAG_SYN = 0x02
TCP_FLAG_FIN = 0x01

# IANA-assigned ICMP type numbers (deprecated-but-assigned values included).
ICMP_ASSIGNED_TYPES = frozenset(
    {0, 3, 4, 5, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 30, 40, 42, 43}
)

BENIGN_LABEL = "benign"


class ProtocolKind(enum.Enum):
    """The three transport protocols the pipeline models."""

    TCP = 6
    UDP = 17
    ICMP = 1

    @property
    def number(self) -> int:
        return self.value

    @classmethod
    def from_number(cls, n: int) -> "ProtocolKind":
        for p in cls:
            if p.value == n:
                return p
        raise ValueError(f"unsupported protocol number {n}")

    @classmethod
    def from_name(cls, name: str) -> "ProtocolKind":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unsupported protocol name {name!r}") from None


@dataclass(frozen=True, order=True)
class AttackType:
    """A named attack category with a dense integer id."""

    id: int
    name: str


@dataclass(frozen=True)
class IPv4Header:
    version: int = 4
    ihl: int = 5
    tos: int = 0
    total_length: int = 20
    ident: int = 0
    flags: int = 0  # 3 bits: reserved | DF | MF
    frag_offset: int = 0
    ttl: int = 64
    proto_number: int = 6
    checksum: int = 0

    @property
    def df(self) -> bool:
        return bool(self.flags & IP_FLAG_DF)

    @property
    def mf(self) -> bool:
        return bool(self.flags & IP_FLAG_MF)


@dataclass(frozen=True)
class TcpFields:
    seq: int = 0
    ack: int = 0
    data_offset: int = 5
    reserved: int = 0  # 4 bits between data offset and the flag byte
    flags: int = 0  # CWR ECE URG ACK PSH RST SYN FIN, MSB first
    window: int = 0
    checksum: int = 0
    urgent: int = 0

    def flag(self, mask: int) -> bool:
        return bool(self.flags & mask)


@dataclass(frozen=True)
class UdpFields:
    length: int = 8
    checksum: int = 0


@dataclass(frozen=True)
class IcmpFields:
    type: int = 8
    code: int = 0
    checksum: int = 0


L4Fields = Union[TcpFields, UdpFields, IcmpFields]

_L4_BY_PROTOCOL = {
    ProtocolKind.TCP: TcpFields,
    ProtocolKind.UDP: UdpFields,
    ProtocolKind.ICMP: IcmpFields,
}


def ip_to_int(dotted: str) -> int:
    parts = dotted.strip().split(".")
    if len(parts) != 4:
        raise ValueError(f"bad IPv4 address {dotted!r}")
    value = 0
    for part in parts:
        octet = int(part)
        if not 0 <= octet <= 255:
            raise ValueError(f"bad IPv4 address {dotted!r}")
        value = (value << 8) | octet
    return value


def int_to_ip(value: int) -> str:
    if not 0 <= value <= 0xFFFFFFFF:
        raise ValueError(f"IPv4 address out of range: {value}")
    return ".".join(str((value >> shift) & 0xFF) for shift in (24, 16, 8, 0))


@dataclass(frozen=True)
class PacketRecord:
    """One parsed packet: header fields plus a trace-relative timestamp.

    Exactly the l4_fields of `protocol` are present; ports are absent for
    ICMP. Timestamps are seconds since the trace epoch.

    proto_number agreement with `protocol` is judged by rule R4, not at
    construction: rows decoded from generated images legitimately carry
    disagreeing values, and the validity metric needs to see them.
    """

    timestamp: float
    protocol: ProtocolKind
    src_ip: int
    dst_ip: int
    src_port: Optional[int]
    dst_port: Optional[int]
    ip_header: IPv4Header
    l4_fields: L4Fields
    attack_label: str = BENIGN_LABEL

    def __post_init__(self) -> None:
        if not math.isfinite(self.timestamp) or self.timestamp < 0:
            raise ValueError(f"timestamp must be finite and >= 0, got {self.timestamp}")
        expected = _L4_BY_PROTOCOL[self.protocol]
        if not isinstance(self.l4_fields, expected):
            raise ValueError(
                f"l4_fields must be {expected.__name__} for {self.protocol.name}"
            )
        if self.protocol is ProtocolKind.ICMP:
            if self.src_port is not None or self.dst_port is not None:
                raise ValueError("ICMP packets carry no ports")
        else:
            for port, side in ((self.src_port, "src"), (self.dst_port, "dst")):
                if port is None or not 0 <= port <= 65535:
                    raise ValueError(f"{side}_port out of range: {port}")

    def with_timestamp(self, ts: float) -> "PacketRecord":
        return replace(self, timestamp=ts)

    def with_label(self, label: str) -> "PacketRecord":
        return replace(self, attack_label=label)


@dataclass(frozen=True)
class ValidityVerdict:
    """Outcome of the structural conformance check: pass/fail + violated rules."""

    ok: bool
    violations: tuple[str, ...] = ()


def validate_packet(p: PacketRecord) -> ValidityVerdict:
    """Apply the fixed structural rule list R1-R10.

    Checksums are deliberately not verified: synthetic packets cannot carry
    consistent checksums, so conformance is judged structurally.
    """
    bad: list[str] = []
    ip = p.ip_header
    if ip.version != 4:
        bad.append("R1")
    if ip.ihl < 5:
        bad.append("R2")
    if ip.total_length < 4 * ip.ihl:
        bad.append("R3")
    if ip.proto_number not in (1, 6, 17) or ip.proto_number != p.protocol.number:
        bad.append("R4")
    if isinstance(p.l4_fields, TcpFields):
        tcp = p.l4_fields
        if tcp.data_offset < 5:
            bad.append("R5")
        if tcp.reserved != 0:
            bad.append("R6")
        syn, fin, rst = (
            tcp.flag(TCP_FLAG_SYN),
            tcp.flag(TCP_FLAG_FIN),
            tcp.flag(TCP_FLAG_RST),
        )
        if (syn and fin) or (syn and rst):
            bad.append("R7")
    elif isinstance(p.l4_fields, UdpFields):
        if p.l4_fields.length < 8:
            bad.append("R8")
    elif isinstance(p.l4_fields, IcmpFields):
        if p.l4_fields.type not in ICMP_ASSIGNED_TYPES:
            bad.append("R9")
    if ip.df and (ip.frag_offset != 0 or ip.mf):
        bad.append("R10")
    return ValidityVerdict(ok=not bad, violations=tuple(bad))


class EmptyTraceError(ValueError):
    pass


@dataclass(frozen=True)
class TraceDataset:
    """An ordered, timestamp-sorted packet trace."""

    packets: tuple[PacketRecord, ...]
    epoch: float = 0.0
    provenance: str = ""
    skipped: int = 0

    def __post_init__(self) -> None:
        if not self.packets:
            raise EmptyTraceError("trace contains no admissible packets")
        for a, b in zip(self.packets, self.packets[1:]):
            if a.timestamp > b.timestamp:
                raise ValueError("packets must be sorted by timestamp")

    def __len__(self) -> int:
        return len(self.packets)

    def __iter__(self):
        return iter(self.packets)

    def attack_types(self) -> list[AttackType]:
        """Observed labels with dense contiguous ids, sorted by name."""
        names = sorted({p.attack_label for p in self.packets})
        return [AttackType(i, name) for i, name in enumerate(names)]

    def by_label(self, label: str) -> list[PacketRecord]:
        return [p for p in self.packets if p.attack_label == label]

    def validity_rate(self) -> float:
        ok = sum(1 for p in self.packets if validate_packet(p).ok)
        return ok / len(self.packets)


def sorted_dataset(
    packets: list[PacketRecord],
    epoch: float = 0.0,
    provenance: str = "",
    skipped: int = 0,
) -> TraceDataset:
    ordered = tuple(sorted(packets, key=lambda p: p.timestamp))
    return TraceDataset(ordered, epoch=epoch, provenance=provenance, skipped=skipped)
