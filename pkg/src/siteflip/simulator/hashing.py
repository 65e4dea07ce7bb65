"""Next-hop selection for equal-cost groups.

Real vendor hash functions are proprietary; what matters here is which
header fields feed the hash. The hash itself is 64-bit FNV-1a over the
seed followed by the selected fields, reduced modulo the group size.
"""

from __future__ import annotations

import enum
import struct

from siteflip.model import FlowTuple

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK = (1 << 64) - 1


class HashPolicy(enum.Enum):
    L3_SRC_DST = "L3SrcDst"
    FIVE_TUPLE = "FiveTuple"
    L3_SRC_DST_PROTO = "L3SrcDstProto"
    PER_PACKET = "PerPacket"
    PER_DESTINATION = "PerDestination"
    # ports only; used to build layer-4-only test topologies
    L4_PORTS = "L4Ports"

    @classmethod
    def parse(cls, text: str) -> "HashPolicy":
        for member in cls:
            if member.value.lower() == text.lower():
                return member
        raise ValueError(f"unknown hash policy {text!r}")


# Router vendor defaults, keyed by vendor.
VENDOR_DEFAULTS = {
    "Arista": HashPolicy.FIVE_TUPLE,
    "Cisco": HashPolicy.L3_SRC_DST,
    "HPE": HashPolicy.L3_SRC_DST,
    "Huawei": HashPolicy.FIVE_TUPLE,
    "Juniper": HashPolicy.L3_SRC_DST_PROTO,
    "Juniper MX": HashPolicy.FIVE_TUPLE,
    "Nokia": HashPolicy.FIVE_TUPLE,
}


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK
    return h


def hash_input(policy: HashPolicy, flow: FlowTuple, packet_seq: int, seed: int) -> bytes:
    """Canonical byte string hashed for ``policy``."""
    out = struct.pack("!Q", seed & _MASK)
    if policy is HashPolicy.PER_PACKET:
        return out + struct.pack("!Q", packet_seq & _MASK)
    if policy is HashPolicy.PER_DESTINATION:
        return out + flow.dst.packed
    if policy is HashPolicy.L4_PORTS:
        return out + struct.pack("!HH", flow.src_port, flow.dst_port)
    out += flow.src.packed + flow.dst.packed
    if policy is HashPolicy.L3_SRC_DST:
        return out
    out += bytes([flow.protocol])
    if policy is HashPolicy.L3_SRC_DST_PROTO:
        return out
    return out + struct.pack("!HH", flow.src_port, flow.dst_port)


def hash_next_hop(policy: HashPolicy, flow: FlowTuple, packet_seq: int,
                  group_size: int, seed: int) -> int:
    if group_size < 1:
        raise ValueError("equal-cost group is empty")
    if group_size == 1:
        return 0
    return fnv1a64(hash_input(policy, flow, packet_seq, seed)) % group_size
