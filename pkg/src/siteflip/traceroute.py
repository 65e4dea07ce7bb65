"""Paris traceroute from the anycast prefix, divergence search and LB placement.

Every probe of one trace carries the same flow. For IPv4 the whole
transport header is held constant and the TTL travels in the IP
identification field, which routers quote back in Time Exceeded. IPv6
has no such field, so the low bits of the embedded timestamp carry it;
the transport checksum then changes between TTLs but the 5-tuple does not.
"""

from __future__ import annotations

import csv
import enum
import ipaddress
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from siteflip import wire
from siteflip.model import Address, FlowTuple, Protocol, SiteId
from siteflip.prober import Clock, Tap, VirtualClock

INITIAL_TTLS = (64, 128, 255)
HOP_MARGIN = 5
DEFAULT_WAIT_S = 2.0
_POLL_NS = 10_000_000


def estimate_path_length(reply_ttl: int) -> int:
    """Hops travelled by a reply, assuming the sender used a common initial TTL."""
    if not 0 <= reply_ttl <= 255:
        raise ValueError("reply TTL must be within 0..255")
    initial = next(t for t in INITIAL_TTLS if t >= reply_ttl)
    return initial - reply_ttl


@dataclass(frozen=True)
class TraceHop:
    ttl: int
    hop_addr: Address | None  # None: no answer for this TTL
    rx_site: SiteId | None = None
    rtt_ms: float | None = None

    @property
    def timeout(self) -> bool:
        return self.hop_addr is None


@dataclass
class TracePath:
    target: Address
    flow: FlowTuple
    hops: list[TraceHop] = field(default_factory=list)
    dest_reached: bool = False
    probes_sent: int = 0

    def hop(self, ttl: int) -> TraceHop | None:
        if 1 <= ttl <= len(self.hops):
            return self.hops[ttl - 1]
        return None

    def addrs(self) -> list[Address | None]:
        return [h.hop_addr for h in self.hops]


class Tracer:
    """Sends TTL sweeps through one tap and listens on the taps of all sites."""

    def __init__(self, send_tap: Tap, capture_taps: Mapping[SiteId, Tap],
                 clock: Clock | None = None, *, run_id: int = 0,
                 wait_s: float = DEFAULT_WAIT_S, probes_per_ttl: int = 1,
                 domain: str = wire.DEFAULT_DOMAIN, opt_out_url: str = ""):
        if probes_per_ttl < 1:
            raise ValueError("probes_per_ttl must be at least 1")
        self.send_tap = send_tap
        self.capture_taps = dict(capture_taps)
        self.clock = clock or VirtualClock()
        self.run_id = run_id
        self.wait_ns = int(wait_s * 1e9)
        self.probes_per_ttl = probes_per_ttl
        self.domain = domain
        self.opt_out_url = opt_out_url
        self.sent_packets: list[bytes] = []
        self.stray = 0

    def trace(self, target: Address, flow: FlowTuple, est_len: int,
              variation_id: int = 0) -> TracePath:
        if flow.dst != target:
            raise ValueError("flow destination must be the trace target")
        path = TracePath(target, flow)
        base = self.clock.now_ns()
        for ttl in range(1, est_len + HOP_MARGIN + 1):
            hop = TraceHop(ttl, None)
            for _ in range(self.probes_per_ttl):
                tx_stamp = base if flow.family == 4 else base - (base & 0xFFFF) + ttl
                spec = wire.ProbeSpec(flow, self.run_id, variation_id, tx_stamp, ttl=ttl,
                                      opt_out_url=self.opt_out_url)
                packet = wire.build_probe(spec, self.domain)
                sent_at = self.clock.now_ns()
                self.send_tap.send(packet, sent_at)
                self.sent_packets.append(packet)
                path.probes_sent += 1
                answer = self._collect(flow, ttl, tx_stamp, variation_id, sent_at + self.wait_ns)
                if answer is not None:
                    parsed, site, rx_time = answer
                    hop = TraceHop(ttl, parsed.hop_addr or target, site, (rx_time - sent_at) / 1e6)
                    if parsed.kind is not wire.ReplyKind.TIME_EXCEEDED:
                        path.dest_reached = True
                    break
            path.hops.append(hop)
            if path.dest_reached:
                break
        return path

    def _collect(self, flow: FlowTuple, ttl: int, tx_stamp: int, variation_id: int,
                 deadline: int):
        while True:
            for site, tap in self.capture_taps.items():
                while (item := tap.recv(0)) is not None:
                    packet, rx_time = item
                    parsed = wire.parse_reply(packet, flow.family)
                    if parsed is not None and self._matches(parsed, flow, ttl, tx_stamp, variation_id):
                        return parsed, site, rx_time
                    self.stray += 1
            now = self.clock.now_ns()
            if now >= deadline:
                return None
            self.clock.sleep_until(min(deadline, now + _POLL_NS))

    def _matches(self, parsed: wire.ParsedReply, flow: FlowTuple, ttl: int, tx_stamp: int,
                 variation_id: int) -> bool:
        kind = parsed.kind
        if kind is wire.ReplyKind.TIME_EXCEEDED:
            tag = ttl if flow.family == 4 else tx_stamp & 0xFFFF
            return parsed.flow_echo == flow and parsed.tag == tag
        if kind is wire.ReplyKind.TCP_RST:
            return parsed.flow_echo.reversed() == flow and parsed.tag == self.run_id
        if kind in (wire.ReplyKind.ECHO_REPLY, wire.ReplyKind.DNS_RESPONSE):
            meta = parsed.embedded
            return (meta is not None and meta.run_id == self.run_id
                    and meta.variation_id == variation_id and meta.tx_time == tx_stamp
                    and parsed.flow_echo.src == flow.dst)
        return False


# -- divergence ----------------------------------------------------------------


@dataclass(frozen=True)
class Divergence:
    ttl: int
    reason: str  # "address" or "site"
    hop_addrs: tuple[Address, ...]
    sites: tuple[SiteId, ...]
    evidence_addr: Address | None


def find_divergence(traces: Sequence[TracePath]) -> Divergence | None:
    """First TTL where flows see different hops, or one hop answers at several sites.

    The evidence address is the load balancer candidate: for an address
    split it is the last hop all flows still shared; for a site split it
    is the hop whose replies were scattered.
    """
    if len(traces) < 2:
        raise ValueError("divergence needs at least two traces")
    if len({t.target for t in traces}) != 1:
        raise ValueError("traces must share one target")
    longest = max(len(t.hops) for t in traces)
    shared: Address | None = None
    for ttl in range(1, longest + 1):
        hops = [h for t in traces if (h := t.hop(ttl)) is not None and not h.timeout]
        addrs = sorted({h.hop_addr for h in hops}, key=_addr_key)
        sites = sorted({h.rx_site for h in hops if h.rx_site is not None})
        if len(addrs) >= 2:
            return Divergence(ttl, "address", tuple(addrs), tuple(sites), shared)
        if len(sites) >= 2:
            return Divergence(ttl, "site", tuple(addrs), tuple(sites), addrs[0])
        # a TTL where some flows timed out breaks the chain of shared hops
        complete = len(hops) == len(traces)
        shared = addrs[0] if addrs and complete else None
    return None


def _addr_key(addr: Address) -> tuple[int, int]:
    return addr.version, int(addr)


# -- LB placement --------------------------------------------------------------


class LbPlace(enum.Enum):
    HOME_AS = "HomeAS"
    ON_PATH_AS = "OnPathAS"
    UNKNOWN = "Unknown"


CONFIDENCE_NOTE = ("divergent hop is evidence, not proof: its reply may have crossed "
                   "a load balancer elsewhere on the reverse path")


@dataclass(frozen=True)
class LbLocation:
    place: LbPlace
    hop_addr: Address | None = None
    asn: int = 0
    direction: str = "combined"  # forward, reverse or combined
    ttl: int | None = None
    note: str = CONFIDENCE_NOTE


def _locate_one(traces: Sequence[TracePath], as_map, client_as: int, direction: str) -> LbLocation:
    if len(traces) < 2:
        return LbLocation(LbPlace.UNKNOWN, direction=direction)
    div = find_divergence(traces)
    if div is None or div.evidence_addr is None:
        return LbLocation(LbPlace.UNKNOWN, direction=direction,
                          ttl=div.ttl if div else None)
    asn = as_map.lookup(div.evidence_addr)
    if asn == 0:
        place = LbPlace.UNKNOWN
    elif asn == client_as:
        place = LbPlace.HOME_AS
    else:
        place = LbPlace.ON_PATH_AS
    return LbLocation(place, div.evidence_addr, asn, direction, div.ttl)


def locate_lb(forward: Sequence[TracePath] | None, reverse: Sequence[TracePath] | None,
              as_map, client_as: int) -> LbLocation:
    """Place the load balancer in the client's AS, a transit AS, or nowhere known.

    ``forward`` traces run from the client toward the anycast prefix,
    ``reverse`` traces from the anycast prefix toward the client. A
    resolved answer beats Unknown; on conflict the forward one wins.
    """
    if not forward and not reverse:
        raise ValueError("locate_lb needs traces in at least one direction")
    fwd = _locate_one(forward, as_map, client_as, "forward") if forward else None
    rev = _locate_one(reverse, as_map, client_as, "reverse") if reverse else None
    if fwd is None or rev is None:
        return fwd or rev
    fwd_ok, rev_ok = fwd.place is not LbPlace.UNKNOWN, rev.place is not LbPlace.UNKNOWN
    if fwd_ok and rev_ok and fwd.place is rev.place:
        return LbLocation(fwd.place, fwd.hop_addr, fwd.asn, "combined", fwd.ttl)
    if fwd_ok:
        return fwd
    if rev_ok:
        return rev
    return LbLocation(LbPlace.UNKNOWN, direction="combined")


def location_shares(locations: Iterable[LbLocation | LbPlace]) -> dict[LbPlace, tuple[int, float]]:
    """Count and percentage (one decimal) of each placement."""
    counts = Counter(loc.place if isinstance(loc, LbLocation) else loc for loc in locations)
    total = sum(counts.values())
    return {place: (counts[place], round(100.0 * counts[place] / total, 1) if total else 0.0)
            for place in LbPlace}


# -- trace logs ----------------------------------------------------------------


TRACE_COLUMNS = ["target", "protocol", "src_addr", "dst_addr", "src_port", "dst_port",
                 "ttl", "hop_addr", "rx_site", "rtt_ms", "dest_reached"]


def write_traces(path: str | Path, traces: Iterable[TracePath]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for t in traces:
            f = t.flow
            for h in t.hops:
                writer.writerow([
                    t.target, f.protocol.name, f.src, f.dst, f.src_port, f.dst_port, h.ttl,
                    "" if h.hop_addr is None else h.hop_addr, h.rx_site or "",
                    "" if h.rtt_ms is None else f"{h.rtt_ms:.3f}",
                    "1" if t.dest_reached else "0",
                ])


def read_traces(path: str | Path) -> list[TracePath]:
    traces: dict[tuple, TracePath] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected trace log header {reader.fieldnames}")
        for row in reader:
            try:
                flow = FlowTuple(ipaddress.ip_address(row["src_addr"]),
                                 ipaddress.ip_address(row["dst_addr"]),
                                 Protocol.parse(row["protocol"]),
                                 int(row["src_port"]), int(row["dst_port"]))
                hop = TraceHop(int(row["ttl"]),
                               ipaddress.ip_address(row["hop_addr"]) if row["hop_addr"] else None,
                               row["rx_site"] or None,
                               float(row["rtt_ms"]) if row["rtt_ms"] else None)
            except ValueError as exc:
                raise ValueError(f"{path}:{reader.line_num}: {exc}") from None
            key = (row["target"], flow)
            if key not in traces:
                traces[key] = TracePath(flow.dst, flow, dest_reached=row["dest_reached"] == "1")
            traces[key].hops.append(hop)
    return list(traces.values())
