"""Target lists and prefix metadata (AS numbers, categories, exclusions)."""

from __future__ import annotations

import csv
import ipaddress
import logging
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from pathlib import Path

from siteflip.model import DEFAULT_GRANULARITY, Address, Prefix, prefix_of

log = logging.getLogger(__name__)

UNMAPPED_AS = 0


def _lines(path: str | Path) -> Iterator[tuple[int, str]]:
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


@dataclass
class TargetSet:
    """One probe address per prefix, in first-seen order."""

    family: int
    granularity: int
    entries: dict[Prefix, Address] = field(default_factory=dict)
    skipped: int = 0

    def add(self, addr: Address) -> bool:
        if addr.version != self.family:
            self.skipped += 1
            return False
        prefix = prefix_of(addr, self.granularity)
        if prefix in self.entries:
            return False
        self.entries[prefix] = addr
        return True

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Address]:
        return iter(self.entries.values())

    def addresses(self) -> list[Address]:
        return list(self.entries.values())


def targets_from(addrs: Iterable[Address], family: int = 4,
                 granularity: int | None = None) -> TargetSet:
    ts = TargetSet(family, granularity or DEFAULT_GRANULARITY[family])
    for addr in addrs:
        ts.add(addr)
    return ts


def load_targets(path: str | Path, family: int = 4, granularity: int | None = None) -> TargetSet:
    """Read a hitlist; malformed or wrong-family lines are skipped and counted."""
    ts = TargetSet(family, granularity or DEFAULT_GRANULARITY[family])
    try:
        lines = list(_lines(path))
    except OSError as exc:
        raise OSError(f"cannot read hitlist {path}: {exc}") from exc
    for lineno, line in lines:
        try:
            addr = ipaddress.ip_address(line.split()[0])
        except ValueError:
            log.debug("%s:%d: not an address: %r", path, lineno, line)
            ts.skipped += 1
            continue
        ts.add(addr)
    if not ts.entries:
        raise ValueError(f"{path}: no valid IPv{family} targets")
    return ts


class AsMap:
    """Longest-prefix match from prefix to AS number, plus AS names."""

    def __init__(self) -> None:
        self._tables: dict[tuple[int, int], dict[int, int]] = {}
        self._order: list[tuple[int, int]] | None = None
        self.names: dict[int, str] = {}

    def add(self, prefix: Prefix, asn: int, name: str = "") -> None:
        key = (prefix.version, prefix.prefixlen)
        # first mapping wins, so repeated prefixes cannot make lookups order-dependent
        self._tables.setdefault(key, {}).setdefault(int(prefix.network_address), asn)
        self._order = None
        if name:
            self.names.setdefault(asn, name)

    def lookup(self, addr: Address) -> int:
        bits = 32 if addr.version == 4 else 128
        value = int(addr)
        if self._order is None:
            self._order = sorted(self._tables, key=lambda k: -k[1])
        for version, length in self._order:
            if version != addr.version:
                continue
            mask = ((1 << length) - 1) << (bits - length) if length else 0
            asn = self._tables[(version, length)].get(value & mask)
            if asn is not None:
                return asn
        return UNMAPPED_AS

    def name(self, asn: int) -> str:
        return self.names.get(asn, "")

    def __len__(self) -> int:
        return sum(len(t) for t in self._tables.values())


def load_as_map(path: str | Path) -> AsMap:
    """CSV rows ``prefix,asn,name``; a header row is tolerated."""
    as_map = AsMap()
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            try:
                prefix = ipaddress.ip_network(row[0].strip(), strict=False)
                asn = int(row[1])
            except (ValueError, IndexError):
                if lineno == 1:
                    continue
                raise ValueError(f"{path}:{lineno}: bad AS map row {row}") from None
            as_map.add(prefix, asn, ",".join(row[2:]).strip())
    return as_map


def load_exclusions(path: str | Path) -> set[Prefix]:
    """One prefix per line (anycast census export)."""
    out = set()
    for lineno, line in _lines(path):
        try:
            out.add(ipaddress.ip_network(line.split()[0], strict=False))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: not a prefix: {line!r}") from None
    return out


CATEGORIES = ("residential", "other")


def load_categories(path: str | Path) -> dict[Prefix, str]:
    """CSV rows ``prefix,category`` with category residential or other."""
    out = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            try:
                prefix = ipaddress.ip_network(row[0].strip(), strict=False)
            except ValueError:
                if lineno == 1:
                    continue
                raise ValueError(f"{path}:{lineno}: not a prefix: {row[0]!r}") from None
            category = row[1].strip().lower() if len(row) > 1 else ""
            if category not in CATEGORIES:
                raise ValueError(f"{path}:{lineno}: unknown category {category!r}")
            out[prefix] = category
    return out
