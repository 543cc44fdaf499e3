"""The shipped named-color table and the category -> color-name mappings."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional


class ColorTableError(ValueError):
    pass


@dataclass(frozen=True)
class ColorTable:
    """Named colors sorted ascending by (r, g, b); a versioned data asset."""

    entries: tuple[tuple[str, tuple[int, int, int]], ...]
    checksum: str = ""

    def __post_init__(self) -> None:
        names = [name for name, _ in self.entries]
        if len(names) != len(set(names)):
            raise ColorTableError("color names must be unique")
        rgbs = [rgb for _, rgb in self.entries]
        if rgbs != sorted(rgbs):
            raise ColorTableError("table must be sorted ascending by (r, g, b)")

    def __len__(self) -> int:
        return len(self.entries)

    def name_at(self, index: int) -> str:
        return self.entries[index][0]

    def names(self) -> list[str]:
        return [name for name, _ in self.entries]

    def nearest(self, rgb: tuple[int, int, int]) -> str:
        """Closest entry by Euclidean RGB distance; ties go to table order."""
        best_name = self.entries[0][0]
        best = None
        for name, (r, g, b) in self.entries:
            d = (r - rgb[0]) ** 2 + (g - rgb[1]) ** 2 + (b - rgb[2]) ** 2
            if best is None or d < best:
                best, best_name = d, name
        return best_name


def _parse_rows(text: str) -> list[tuple[str, tuple[int, int, int]]]:
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames != ["name", "r", "g", "b"]:
        raise ColorTableError("color table header must be name,r,g,b")
    rows = []
    for row in reader:
        rgb = (int(row["r"]), int(row["g"]), int(row["b"]))
        if not all(0 <= c <= 255 for c in rgb):
            raise ColorTableError(f"RGB out of range in {row['name']!r}")
        rows.append((row["name"], rgb))
    return rows


def load_color_table(path: Optional[Path] = None, verify: bool = True) -> ColorTable:
    """Load the shipped table (or a custom CSV) and verify its checksum.

    The shipped table is part of the external interface: the worked subnet
    example 153.101.21.0/24 -> "Golden Brown" depends on its content.
    """
    if path is None:
        data = resources.files("ddosynth.data")
        raw = (data / "colors.csv").read_bytes()
        expected = (data / "colors.csv.sha256").read_text().strip()
    else:
        raw = Path(path).read_bytes()
        side = Path(path).with_suffix(Path(path).suffix + ".sha256")
        expected = side.read_text().strip() if side.exists() else ""
    checksum = hashlib.sha256(raw).hexdigest()
    if verify and expected and checksum != expected:
        raise ColorTableError(
            f"color table checksum mismatch: {checksum} != {expected}")
    rows = _parse_rows(raw.decode("utf-8"))
    # sort ascending by RGB (name as a deterministic tie-break)
    rows.sort(key=lambda e: (e[1], e[0]))
    return ColorTable(entries=tuple(rows), checksum=checksum)


def parse_subnet24(subnet: str) -> tuple[int, int, int]:
    """Return the first three octets of an IPv4 /24 prefix."""
    addr, _, bits = subnet.partition("/")
    if bits != "24":
        raise ValueError(f"only /24 prefixes are supported, got {subnet!r}")
    octets = addr.split(".")
    if len(octets) != 4:
        raise ValueError(f"bad subnet {subnet!r}")
    o1, o2, o3, o4 = (int(o) for o in octets)
    for o in (o1, o2, o3, o4):
        if not 0 <= o <= 255:
            raise ValueError(f"bad subnet {subnet!r}")
    return o1, o2, o3


def map_subnet(subnet: str, table: ColorTable) -> str:
    """Map a /24 prefix to the color nearest its (o1, o2, o3) point."""
    return table.nearest(parse_subnet24(subnet))


def map_category(n_categories: int, j: int, table: ColorTable) -> str:
    """Evenly-spaced color pick: table entry floor(j * len(table) / n)."""
    if not 0 <= j < n_categories:
        raise IndexError(f"category index {j} out of range [0, {n_categories})")
    return table.name_at((j * len(table)) // n_categories)
