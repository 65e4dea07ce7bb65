"""Measurement definitions and the header variations each run sends."""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field, replace

from siteflip.model import (
    DEFAULT_GRANULARITY,
    FlowTuple,
    Prefix,
    Protocol,
    SiteId,
    VariedField,
    check_combination,
    parse_prefix,
)

SRC_PORT_BASE = 62000
DST_PORT_BASE = 63000
DEFAULT_DST_PORT = {Protocol.ICMP: 0, Protocol.TCP: 80, Protocol.UDP: 53}
DEFAULT_K = 5
DEFAULT_PPS = 1000
DEFAULT_QUIESCENCE_S = 10.0


@dataclass(frozen=True)
class MeasurementDef:
    run_id: int
    protocol: Protocol
    anycast_prefix: Prefix
    varied: VariedField | None = VariedField.SRC_ADDR
    k: int = DEFAULT_K
    sender_sites: tuple[SiteId, ...] = ()
    granularity: int | None = None
    target_source: str = ""
    pps: int = DEFAULT_PPS
    quiescence_s: float = DEFAULT_QUIESCENCE_S
    src_port_base: int = SRC_PORT_BASE
    dst_port_base: int = DST_PORT_BASE
    opt_out_url: str = ""
    extra: dict[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "sender_sites", tuple(sorted(set(self.sender_sites))))
        if self.granularity is None:
            object.__setattr__(self, "granularity", DEFAULT_GRANULARITY[self.family])
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not self.sender_sites:
            raise ValueError("at least one sender site is required")
        if not 0 <= self.run_id <= 0xFFFFFFFF:
            raise ValueError("run_id must fit in 32 bits")
        if self.k > 256:
            raise ValueError("variation ids are 8-bit; k must be at most 256")
        if self.pps < 1:
            raise ValueError("pps must be positive")
        check_combination(self.protocol, self.varied)
        if self.varied in (VariedField.SRC_ADDR, VariedField.ALL):
            if self.k > self.anycast_prefix.num_addresses - 2:
                raise ValueError(f"{self.anycast_prefix} has too few addresses for k={self.k}")

    @property
    def family(self) -> int:
        return self.anycast_prefix.version

    def variations(self) -> list[FlowTuple]:
        return gen_variations(self)

    def with_run_id(self, run_id: int) -> "MeasurementDef":
        return replace(self, run_id=run_id)

    # manifest form: flat key=value pairs

    def to_manifest(self) -> dict[str, str]:
        out = {
            "run_id": str(self.run_id),
            "protocol": self.protocol.name,
            "family": str(self.family),
            "anycast_prefix": str(self.anycast_prefix),
            "varied": self.varied.value if self.varied else "none",
            "k": str(self.k),
            "sender_sites": ",".join(self.sender_sites),
            "granularity": str(self.granularity),
            "target_source": self.target_source,
            "pps": str(self.pps),
            "quiescence_s": repr(self.quiescence_s),
            "src_port_base": str(self.src_port_base),
            "dst_port_base": str(self.dst_port_base),
            "opt_out_url": self.opt_out_url,
        }
        out.update(self.extra)
        return out

    @classmethod
    def from_manifest(cls, data: dict[str, str]) -> "MeasurementDef":
        known = {
            "run_id", "protocol", "family", "anycast_prefix", "varied", "k",
            "sender_sites", "granularity", "target_source", "pps", "quiescence_s",
            "src_port_base", "dst_port_base", "opt_out_url",
        }
        return cls(
            run_id=int(data["run_id"]),
            protocol=Protocol.parse(data["protocol"]),
            anycast_prefix=parse_prefix(data["anycast_prefix"]),
            varied=VariedField.parse(data.get("varied", "none")),
            k=int(data.get("k", DEFAULT_K)),
            sender_sites=tuple(s for s in data["sender_sites"].split(",") if s),
            granularity=int(data["granularity"]) if data.get("granularity") else None,
            target_source=data.get("target_source", ""),
            pps=int(data.get("pps", DEFAULT_PPS)),
            quiescence_s=float(data.get("quiescence_s", DEFAULT_QUIESCENCE_S)),
            src_port_base=int(data.get("src_port_base", SRC_PORT_BASE)),
            dst_port_base=int(data.get("dst_port_base", DST_PORT_BASE)),
            opt_out_url=data.get("opt_out_url", ""),
            extra={k: v for k, v in data.items() if k not in known},
        )


def gen_variations(mdef: MeasurementDef) -> list[FlowTuple]:
    """The k flow templates of a run; ``dst`` is a placeholder filled per target.

    Varied values are offsets from fixed bases: source addresses
    base+1..base+k of the anycast prefix, source ports 62000+i and
    destination ports 63000+i. Fields that are not varied keep the value
    of variation 0.
    """
    check_combination(mdef.protocol, mdef.varied)
    base = mdef.anycast_prefix.network_address
    placeholder = ipaddress.ip_address(0 if mdef.family == 4 else "::")
    icmp = mdef.protocol is Protocol.ICMP
    default_dst = DEFAULT_DST_PORT[mdef.protocol]
    varied = mdef.varied
    out = []
    for i in range(mdef.k):
        addr_i = port_i = dst_i = 0
        if varied in (VariedField.SRC_ADDR, VariedField.ALL):
            addr_i = i
        if varied in (VariedField.SRC_PORT, VariedField.SRC_DST_PORT, VariedField.ALL):
            port_i = i
        if varied in (VariedField.DST_PORT, VariedField.SRC_DST_PORT, VariedField.ALL):
            dst_i = i
        src_port = 0 if icmp else mdef.src_port_base + port_i
        if icmp:
            dst_port = 0
        elif dst_i or varied in (VariedField.DST_PORT, VariedField.SRC_DST_PORT, VariedField.ALL):
            dst_port = mdef.dst_port_base + dst_i
        else:
            dst_port = default_dst
        out.append(FlowTuple(base + 1 + addr_i, placeholder, mdef.protocol, src_port, dst_port))
    return out
