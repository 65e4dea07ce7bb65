"""Per-site worker: paced probe transmission and reply capture.

Every site runs one worker. The sending worker emits one probe per
variation to each admitted target; every worker captures what arrives at
its site and turns it into :class:`ReplyRecord` rows. Probe schedules are
deterministic (``plan_wave``), which lets the orchestrator hand every
site the correlation entries for a wave before it starts.
"""

from __future__ import annotations

import bisect
import csv
import ipaddress
import logging
import threading
import time
from collections import defaultdict
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Protocol as TypingProtocol

from siteflip import wire
from siteflip.model import Address, FlowTuple, Prefix, Protocol, SiteId, prefix_of

log = logging.getLogger(__name__)

SECOND_NS = 1_000_000_000
HOUR_NS = 3600 * SECOND_NS
PROBES_PER_HOUR = 15


class Clock(TypingProtocol):
    def now_ns(self) -> int: ...
    def sleep_until(self, t_ns: int) -> None: ...


class WallClock:
    def now_ns(self) -> int:
        return time.time_ns()

    def sleep_until(self, t_ns: int) -> None:
        delay = (t_ns - time.time_ns()) / SECOND_NS
        if delay > 0:
            time.sleep(delay)


class VirtualClock:
    """Deterministic clock for simulated deployments; sleeping just advances it."""

    def __init__(self, start_ns: int = 1_700_000_000 * SECOND_NS):
        self._now = start_ns
        self._lock = threading.Lock()

    def now_ns(self) -> int:
        return self._now

    def sleep_until(self, t_ns: int) -> None:
        with self._lock:
            self._now = max(self._now, t_ns)


class RateLimiter:
    """Per-target probe budget over a sliding window.

    ``admit`` grants ``n`` probes only if no window of length ``window_ns``
    around ``now`` would then hold more than ``limit`` of them. Counting
    on both sides of ``now`` keeps the bound intact when concurrent
    senders present timestamps out of order; with monotonic timestamps it
    is the usual (now - window, now] check. The check and the bookkeeping
    happen under one lock. A timestamp a full window older than the
    newest one seen is refused. With ``journal`` set, every decision is
    appended to it in lock order as (target, now, n, admitted).
    """

    def __init__(self, limit: int = PROBES_PER_HOUR, window_ns: int = HOUR_NS,
                 journal: list | None = None):
        self.limit = limit
        self.window_ns = window_ns
        self.journal = journal
        self._sent: dict[Address, list[int]] = defaultdict(list)
        self._newest = 0
        self._lock = threading.Lock()

    def admit(self, target: Address, now: int, n: int = 1) -> bool:
        with self._lock:
            times = self._sent[target]
            if now <= self._newest - self.window_ns:
                # too stale to check against pruned history, so refuse it
                if self.journal is not None:
                    self.journal.append((target, now, n, False))
                return False
            self._newest = max(self._newest, now)
            # entries this old cannot fall within a window of any call less
            # than one window behind the newest timestamp seen
            cut = bisect.bisect_right(times, self._newest - 2 * self.window_ns)
            if cut:
                del times[:cut]
            lo = bisect.bisect_right(times, now - self.window_ns)
            hi = bisect.bisect_left(times, now + self.window_ns)
            admitted = hi - lo + n <= self.limit
            if admitted:
                pos = bisect.bisect_right(times, now)
                times[pos:pos] = [now] * n
            if self.journal is not None:
                self.journal.append((target, now, n, admitted))
            return admitted

    def count(self, target: Address, now: int) -> int:
        """Probes charged to ``target`` within (now - window, now]."""
        with self._lock:
            times = self._sent.get(target, [])
            return bisect.bisect_right(times, now) - bisect.bisect_right(times, now - self.window_ns)


# -- records ----------------------------------------------------------------

LOG_COLUMNS = [
    "run_id", "protocol", "target_addr", "target_prefix", "variation_id",
    "src_addr", "src_port", "dst_port", "tx_site", "rx_site", "tx_time_ns",
    "rx_time_ns", "reply_ttl", "kind", "hop_addr",
]
REPLY, TIME_EXCEEDED = "Reply", "TimeExceeded"


class LogFormatError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class ReplyRecord:
    run_id: int
    target_prefix: Prefix
    target_addr: Address
    variation_id: int
    rx_site: SiteId
    kind: str
    tx_site: SiteId
    tx_time: int
    rx_time: int
    reply_ttl: int
    varied_flow: FlowTuple
    hop_addr: Address | None = None

    @property
    def protocol(self) -> Protocol:
        return self.varied_flow.protocol

    @property
    def latency_ns(self) -> int:
        return self.rx_time - self.tx_time

    @property
    def clock_skewed(self) -> bool:
        return self.rx_time < self.tx_time

    def dedup_key(self) -> tuple:
        return (self.run_id, self.target_addr, self.variation_id, self.rx_site, self.kind)

    def to_row(self) -> list[str]:
        f = self.varied_flow
        return [
            str(self.run_id), f.protocol.name, str(self.target_addr), str(self.target_prefix),
            str(self.variation_id), str(f.src), str(f.src_port), str(f.dst_port),
            self.tx_site, self.rx_site, str(self.tx_time), str(self.rx_time),
            str(self.reply_ttl), self.kind, str(self.hop_addr) if self.hop_addr else "",
        ]

    @classmethod
    def from_row(cls, row: Sequence[str]) -> "ReplyRecord":
        if len(row) != len(LOG_COLUMNS):
            raise ValueError(f"expected {len(LOG_COLUMNS)} columns, got {len(row)}")
        (run_id, proto, target, prefix, var, src, sport, dport, tx_site, rx_site,
         tx, rx, ttl, kind, hop) = row
        if kind not in (REPLY, TIME_EXCEEDED):
            raise ValueError(f"unknown kind {kind!r}")
        target_addr = ipaddress.ip_address(target)
        flow = FlowTuple(ipaddress.ip_address(src), target_addr, Protocol.parse(proto),
                         int(sport), int(dport))
        return cls(int(run_id), ipaddress.ip_network(prefix), target_addr, int(var), rx_site,
                   kind, tx_site, int(tx), int(rx), int(ttl), flow,
                   ipaddress.ip_address(hop) if hop else None)


def write_records(dest: str | Path | IO[str], records: Iterable[ReplyRecord]) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as fh:
            write_records(fh, records)
        return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(LOG_COLUMNS)
    for rec in records:
        writer.writerow(rec.to_row())


def read_records(path: str | Path) -> list[ReplyRecord]:
    """Read a reply log, rejecting schema mismatches with the offending line."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != LOG_COLUMNS:
            raise LogFormatError(f"{path}:1: header does not match the reply-log schema")
        for row in reader:
            try:
                out.append(ReplyRecord.from_row(row))
            except ValueError as exc:
                raise LogFormatError(f"{path}:{reader.line_num}: {exc}") from None
    return out


# -- wave planning and correlation -----------------------------------------


@dataclass(frozen=True)
class ScheduledProbe:
    run_id: int
    target: Address
    variation_id: int
    flow: FlowTuple
    tx_time: int
    tx_site: SiteId


def plan_wave(mdef, targets: Sequence[Address], site: SiteId, start_ns: int) -> list[ScheduledProbe]:
    """Deterministic send schedule of ``site`` for one run.

    Probes are paced at ``mdef.pps``; with several senders each one is
    offset by a fraction of the gap so no two probes share a timestamp.
    """
    gap = SECOND_NS // mdef.pps
    senders = list(mdef.sender_sites)
    offset = senders.index(site) * (gap // len(senders)) if site in senders else 0
    templates = mdef.variations()
    out = []
    slot = 0
    for target in targets:
        for var, template in enumerate(templates):
            out.append(ScheduledProbe(mdef.run_id, target, var, template.with_dst(target),
                                      start_ns + offset + slot * gap, site))
            slot += 1
    return out


class CorrelationTable:
    """Maps replies back to scheduled probes.

    TCP RSTs echo nothing but the flow (and our ack number, which is the
    run id), so they are looked up by probe flow; ICMP and DNS replies
    carry run, variation and tx_time, and the table adds the sending site.
    """

    def __init__(self) -> None:
        self._by_flow: dict[FlowTuple, list[ScheduledProbe]] = defaultdict(list)
        self._by_key: dict[tuple, ScheduledProbe] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._by_key)

    def add(self, probes: Iterable[ScheduledProbe]) -> None:
        with self._lock:
            for p in probes:
                key = (p.run_id, p.variation_id, p.target, p.tx_time)
                if key in self._by_key:
                    continue
                self._by_flow[p.flow].append(p)
                self._by_key[key] = p

    def by_flow(self, flow: FlowTuple, run_id: int | None = None) -> ScheduledProbe | None:
        with self._lock:
            for p in self._by_flow.get(flow, ()):
                if run_id is None or p.run_id == run_id:
                    return p
        return None

    def by_key(self, run_id: int, variation_id: int, target: Address, tx_time: int):
        return self._by_key.get((run_id, variation_id, target, tx_time))

    def drop_run(self, run_id: int) -> None:
        with self._lock:
            self._by_key = {k: v for k, v in self._by_key.items() if k[0] != run_id}
            for flow in list(self._by_flow):
                kept = [p for p in self._by_flow[flow] if p.run_id != run_id]
                if kept:
                    self._by_flow[flow] = kept
                else:
                    del self._by_flow[flow]


# -- capture sources ----------------------------------------------------------


class Tap(TypingProtocol):
    def send(self, packet: bytes, tx_time: int) -> None: ...
    def recv(self, timeout: float | None = None) -> tuple[bytes, int] | None: ...


class RawSocketTap:
    """Live interface: raw IP send, raw ICMP/TCP/UDP capture. Needs root."""

    def __init__(self, family: int = 4, clock: Clock | None = None):
        import socket

        self._socket = socket
        self.family = family
        self.clock = clock or WallClock()
        af = socket.AF_INET if family == 4 else socket.AF_INET6
        self._tx = socket.socket(af, socket.SOCK_RAW, socket.IPPROTO_RAW)
        if family == 4:
            self._tx.setsockopt(socket.IPPROTO_IP, socket.IP_HDRINCL, 1)
        icmp = socket.IPPROTO_ICMP if family == 4 else socket.IPPROTO_ICMPV6
        self._rx = [socket.socket(af, socket.SOCK_RAW, p)
                    for p in (icmp, socket.IPPROTO_TCP, socket.IPPROTO_UDP)]

    def send(self, packet: bytes, tx_time: int) -> None:
        flow, _ = wire.packet_flow(packet)
        payload = packet if self.family == 4 else packet[40:]
        self._tx.sendto(payload, (str(flow.dst), 0))

    def recv(self, timeout: float | None = None) -> tuple[bytes, int] | None:
        import select

        ready, _, _ = select.select(self._rx, [], [], timeout or 0)
        if not ready:
            return None
        data = ready[0].recv(65535)
        return data, self.clock.now_ns()


# -- worker -----------------------------------------------------------------


@dataclass
class WorkerStats:
    sent: int = 0
    dropped: int = 0
    rate_limited: int = 0
    unresolved: int = 0
    discarded: int = 0
    unparsed: int = 0


@dataclass
class _RunState:
    mdef: object
    records: list[ReplyRecord] = field(default_factory=list)
    stats: WorkerStats = field(default_factory=WorkerStats)


class Worker:
    def __init__(self, site: SiteId, source_prefix: Prefix, tap: Tap | None = None, *,
                 worker_id: str | None = None, clock: Clock | None = None,
                 limiter: RateLimiter | None = None, endpoint: str = "",
                 domain: str = wire.DEFAULT_DOMAIN):
        if not site:
            raise ValueError("site id must be non-empty")
        self.site = site
        self.worker_id = worker_id or site
        self.source_prefix = source_prefix
        self.tap = tap
        self.clock = clock or WallClock()
        self.limiter = limiter or RateLimiter()
        self.endpoint = endpoint
        self.domain = domain
        self.correlation = CorrelationTable()
        self.runs: dict[int, _RunState] = {}
        self.capture_stats = WorkerStats()
        self._lock = threading.Lock()

    # -- sending --

    def send_wave(self, mdef, targets: Sequence[Address], start_ns: int | None = None) -> int:
        """Send every variation to each admitted target; returns probes sent."""
        if self.tap is None:
            raise RuntimeError("worker has no capture/send tap attached")
        for template in mdef.variations():
            if template.src not in self.source_prefix:
                raise ValueError(f"{template.src} is outside the worker's source prefix")
        state = self._state(mdef)
        start = self.clock.now_ns() if start_ns is None else start_ns
        schedule = plan_wave(mdef, targets, self.site, start)
        self.correlation.add(schedule)
        k = mdef.k
        sent = 0
        for i in range(0, len(schedule), k):
            group = schedule[i:i + k]
            target = group[0].target
            if not self.limiter.admit(target, group[0].tx_time, k):
                state.stats.rate_limited += 1
                continue
            try:
                for probe in group:
                    spec = wire.ProbeSpec(probe.flow, mdef.run_id, probe.variation_id,
                                          probe.tx_time, opt_out_url=mdef.opt_out_url)
                    packet = wire.build_probe(spec, self.domain)
                    self.clock.sleep_until(probe.tx_time)
                    self.tap.send(packet, probe.tx_time)
                    sent += 1
            except OSError as exc:
                log.warning("transmit to %s failed: %s", target, exc)
                state.stats.dropped += 1
        state.stats.sent += sent
        return sent

    # -- capture --

    def _state(self, mdef) -> _RunState:
        with self._lock:
            if mdef.run_id not in self.runs:
                self.runs[mdef.run_id] = _RunState(mdef)
            return self.runs[mdef.run_id]

    def process(self, packet: bytes, rx_time: int) -> ReplyRecord | None:
        """Turn one captured packet into a record, or count why it was not."""
        family = packet[0] >> 4 if packet else 0
        parsed = wire.parse_reply(packet, family)
        if parsed is None:
            self.capture_stats.unparsed += 1
            return None
        if parsed.kind is wire.ReplyKind.DISCARDED:
            # unreachables may come from middleboxes; they say nothing about the path
            self.capture_stats.discarded += 1
            return None
        probe = self._resolve(parsed)
        if probe is None:
            self.capture_stats.unresolved += 1
            return None
        state = self.runs[probe.run_id]
        kind = TIME_EXCEEDED if parsed.kind is wire.ReplyKind.TIME_EXCEEDED else REPLY
        return ReplyRecord(
            run_id=probe.run_id,
            target_prefix=prefix_of(probe.target, state.mdef.granularity),
            target_addr=probe.target,
            variation_id=probe.variation_id,
            rx_site=self.site,
            kind=kind,
            tx_site=probe.tx_site,
            tx_time=probe.tx_time,
            rx_time=rx_time,
            reply_ttl=parsed.reply_ttl,
            varied_flow=probe.flow,
            hop_addr=parsed.hop_addr,
        )

    def _resolve(self, parsed: wire.ParsedReply) -> ScheduledProbe | None:
        kind = parsed.kind
        if kind is wire.ReplyKind.TCP_RST:
            return self.correlation.by_flow(parsed.flow_echo.reversed(), parsed.tag)
        if kind is wire.ReplyKind.TIME_EXCEEDED:
            run = parsed.embedded.run_id if parsed.embedded else None
            return self.correlation.by_flow(parsed.flow_echo, run)
        meta = parsed.embedded
        state = self.runs.get(meta.run_id)
        if state is None:
            return None
        target = meta.target if meta.target is not None else parsed.flow_echo.src
        probe = self.correlation.by_key(meta.run_id, meta.variation_id, target, meta.tx_time)
        if probe is not None:
            return probe
        # no preload: a single-sender run still pins down the transmitting site
        senders = state.mdef.sender_sites
        if len(senders) != 1 or meta.variation_id >= state.mdef.k:
            return None
        flow = FlowTuple(parsed.flow_echo.dst, target, parsed.flow_echo.protocol,
                         parsed.flow_echo.dst_port, parsed.flow_echo.src_port)
        return ScheduledProbe(meta.run_id, target, meta.variation_id, flow, meta.tx_time, senders[0])

    def poll(self) -> int:
        """Process every packet the tap has ready; returns records produced."""
        produced = 0
        while True:
            item = self.tap.recv(0)
            if item is None:
                return produced
            rec = self.process(*item)
            if rec is not None:
                self._emit(rec)
                produced += 1

    def _emit(self, rec: ReplyRecord) -> None:
        with self._lock:
            self.runs[rec.run_id].records.append(rec)

    def capture_loop(self, sink: Callable[[ReplyRecord], None] | None = None,
                     stop: threading.Event | None = None, timeout: float = 0.1) -> None:
        """Capture until ``stop`` is set; records go to ``sink`` or the run outbox."""
        stop = stop or threading.Event()
        while not stop.is_set():
            item = self.tap.recv(timeout)
            if item is None:
                continue
            rec = self.process(*item)
            if rec is not None:
                (sink or self._emit)(rec)

    # -- bookkeeping for the orchestrator --

    def preload(self, mdef, probes: Iterable[ScheduledProbe]) -> None:
        self._state(mdef)
        self.correlation.add(probes)

    def finish(self, run_id: int) -> tuple[list[ReplyRecord], WorkerStats]:
        if self.tap is not None:
            self.poll()
        with self._lock:
            state = self.runs.pop(run_id, None)
        self.correlation.drop_run(run_id)
        stats = state.stats if state is not None else WorkerStats()
        # capture-side counters are not attributable to a run; hand them over once
        stats.unresolved, stats.discarded, stats.unparsed = (
            self.capture_stats.unresolved, self.capture_stats.discarded,
            self.capture_stats.unparsed)
        self.capture_stats = WorkerStats()
        return (state.records if state else []), stats
