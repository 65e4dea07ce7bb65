"""Shared value types and prefix arithmetic.

Addresses and prefixes are the stdlib ``ipaddress`` objects; they are
immutable, hashable and compare by (family, value, length), which is what
every join across the package relies on.
"""

from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass
from typing import Union

Address = Union[ipaddress.IPv4Address, ipaddress.IPv6Address]
Prefix = Union[ipaddress.IPv4Network, ipaddress.IPv6Network]
SiteId = str

DEFAULT_GRANULARITY = {4: 24, 6: 48}


class Protocol(enum.IntEnum):
    ICMP = 1
    TCP = 6
    UDP = 17

    @classmethod
    def parse(cls, text: str) -> "Protocol":
        text = str(text).strip()
        try:
            return cls(int(text)) if text.isdigit() else cls[text.upper()]
        except (KeyError, ValueError):
            raise ValueError(f"unknown protocol {text!r}") from None


class VariedField(enum.Enum):
    SRC_ADDR = "src-addr"
    SRC_PORT = "src-port"
    DST_PORT = "dst-port"
    SRC_DST_PORT = "src-dst-port"
    ALL = "all"

    @classmethod
    def parse(cls, text: str) -> "VariedField | None":
        if text in ("none", "static", ""):
            return None
        try:
            return cls(text.lower())
        except ValueError:
            raise ValueError(f"unknown varied field {text!r}") from None

    @property
    def varies_ports(self) -> bool:
        return self is not VariedField.SRC_ADDR


def check_combination(protocol: Protocol, varied: VariedField | None) -> None:
    """Raise ValueError for header variations the protocol cannot carry."""
    if varied is None:
        return
    if protocol is Protocol.ICMP and varied is not VariedField.SRC_ADDR:
        raise ValueError(f"ICMP has no ports; cannot vary {varied.value}")
    if protocol is Protocol.UDP and varied in (
        VariedField.DST_PORT,
        VariedField.SRC_DST_PORT,
        VariedField.ALL,
    ):
        raise ValueError(f"DNS probes need destination port 53; cannot vary {varied.value}")


def parse_address(text: str) -> Address:
    return ipaddress.ip_address(text.strip())


def parse_prefix(text: str) -> Prefix:
    return ipaddress.ip_network(text.strip(), strict=True)


def prefix_of(addr: Address, granularity: int) -> Prefix:
    """Mask ``addr`` down to a ``granularity``-bit prefix."""
    if not 0 <= granularity <= addr.max_prefixlen:
        raise ValueError(
            f"granularity {granularity} exceeds {addr.max_prefixlen} for IPv{addr.version}"
        )
    return ipaddress.ip_network((addr, granularity), strict=False)


@dataclass(frozen=True, order=True)
class FlowTuple:
    src: Address
    dst: Address
    protocol: Protocol
    src_port: int = 0
    dst_port: int = 0

    def __post_init__(self) -> None:
        if self.src.version != self.dst.version:
            raise ValueError("src and dst must share an address family")
        for port in (self.src_port, self.dst_port):
            if not 0 <= port <= 0xFFFF:
                raise ValueError(f"port {port} out of range")
        if self.protocol is Protocol.ICMP and (self.src_port or self.dst_port):
            raise ValueError("ICMP flows carry no ports")

    @property
    def family(self) -> int:
        return self.src.version

    def reversed(self) -> "FlowTuple":
        return FlowTuple(self.dst, self.src, self.protocol, self.dst_port, self.src_port)

    def with_dst(self, dst: Address) -> "FlowTuple":
        return FlowTuple(self.src, dst, self.protocol, self.src_port, self.dst_port)
