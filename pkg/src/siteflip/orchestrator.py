"""Run coordination: plan a wave, drive the senders, merge what every site saw."""

from __future__ import annotations

import ipaddress
import logging
import socket
import socketserver
import threading
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from siteflip import messages as m
from siteflip.measurement import MeasurementDef, gen_variations
from siteflip.model import Address, FlowTuple, Protocol, SiteId
from siteflip.prober import (
    SECOND_NS,
    Clock,
    ReplyRecord,
    ScheduledProbe,
    WallClock,
    Worker,
    plan_wave,
    read_records,
    write_records,
)

__all__ = [
    "MeasurementDef", "gen_variations", "RunLog", "RunAborted", "Orchestrator",
    "WorkerHandle", "RemoteWorker", "serve_worker", "read_manifest", "write_manifest",
    "load_run",
]

log = logging.getLogger(__name__)

DEFAULT_REPEAT_INTERVAL_S = 20 * 60


class RunAborted(RuntimeError):
    def __init__(self, message: str, runlog: "RunLog"):
        super().__init__(message)
        self.runlog = runlog


@dataclass
class RunLog:
    definition: MeasurementDef
    records: list[ReplyRecord]
    sites: list[SiteId]
    partial: bool = False
    stats: dict[str, int] = field(default_factory=dict)

    @property
    def run_id(self) -> int:
        return self.definition.run_id

    def manifest(self) -> dict[str, str]:
        out = self.definition.to_manifest()
        out["sites"] = ",".join(self.sites)
        out["partial"] = "true" if self.partial else "false"
        for key, value in sorted(self.stats.items()):
            out[f"stat.{key}"] = str(value)
        return out

    def save(self, run_dir: str | Path) -> Path:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        write_manifest(run_dir / "manifest", self.manifest())
        write_records(run_dir / "log.csv", self.records)
        return run_dir


def write_manifest(path: Path, data: dict[str, str]) -> None:
    with open(path, "w") as fh:
        for key, value in data.items():
            fh.write(f"{key}={value}\n")


def read_manifest(path: str | Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip() and not line.startswith("#"):
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def load_run(path: str | Path) -> RunLog:
    """Load a run from its directory, or from a bare log with a sibling manifest."""
    path = Path(path)
    log_path = path / "log.csv" if path.is_dir() else path
    manifest_path = log_path.with_name("manifest")
    records = read_records(log_path)
    if manifest_path.exists():
        data = read_manifest(manifest_path)
        mdef = MeasurementDef.from_manifest(data)
        sites = [s for s in data.get("sites", "").split(",") if s]
        partial = data.get("partial") == "true"
        stats = {k[5:]: int(v) for k, v in data.items() if k.startswith("stat.")}
    else:
        mdef = _infer_definition(records, log_path)
        sites = sorted({r.rx_site for r in records})
        partial = False
        stats = {}
    return RunLog(mdef, records, sites, partial, stats)


def _infer_definition(records: list[ReplyRecord], path: Path) -> MeasurementDef:
    if not records:
        raise ValueError(f"{path}: empty log and no manifest")
    first = records[0]
    src = first.varied_flow.src
    anycast = ipaddress.ip_network((src, 24 if src.version == 4 else 48), strict=False)
    return MeasurementDef(
        run_id=first.run_id, protocol=first.protocol, anycast_prefix=anycast, varied=None,
        k=max(r.variation_id for r in records) + 1,
        sender_sites=tuple(sorted({r.tx_site for r in records})),
        granularity=first.target_prefix.prefixlen,
    )


# -- worker handles -------------------------------------------------------------


class WorkerHandle:
    """In-process control endpoint wrapping a :class:`Worker`."""

    def __init__(self, worker: Worker):
        self.worker = worker
        self._definitions: dict[int, MeasurementDef] = {}

    def register(self) -> m.RegisterWorker:
        w = self.worker
        return m.RegisterWorker(w.worker_id, w.site, str(w.source_prefix), w.endpoint)

    def request(self, msg):
        return handle_message(self.worker, msg, self._definitions)


def _entries(probes: Iterable[ScheduledProbe]) -> list[list]:
    return [[str(p.target), p.variation_id, str(p.flow.src), p.flow.src_port,
             p.flow.dst_port, p.tx_time, p.tx_site] for p in probes]


def _probes(run_id: int, protocol: Protocol, rows: list[list]) -> list[ScheduledProbe]:
    out = []
    for target, var, src, sport, dport, tx, site in rows:
        dst = ipaddress.ip_address(target)
        flow = FlowTuple(ipaddress.ip_address(src), dst, protocol, sport, dport)
        out.append(ScheduledProbe(run_id, dst, var, flow, tx, site))
    return out


def handle_message(worker: Worker, msg, definitions: dict[int, MeasurementDef]):
    """Worker-side dispatch of one control message."""
    if isinstance(msg, m.PreloadCorrelation):
        mdef = MeasurementDef.from_manifest(msg.definition)
        definitions[msg.run_id] = mdef
        worker.preload(mdef, _probes(msg.run_id, mdef.protocol, msg.entries))
        return None
    if isinstance(msg, m.StartWave):
        mdef = definitions[msg.run_id]
        targets = [ipaddress.ip_address(t) for t in msg.targets]
        worker.send_wave(mdef, targets, msg.start_ns)
        stats = worker.runs[msg.run_id].stats
        return m.ReplyBatch(msg.run_id, worker.site, [], stats.sent, stats.dropped,
                            stats.rate_limited)
    if isinstance(msg, m.EndRun):
        records, stats = worker.finish(msg.run_id)
        definitions.pop(msg.run_id, None)
        return m.ReplyBatch(msg.run_id, worker.site, [r.to_row() for r in records],
                            stats.sent, stats.dropped, stats.rate_limited,
                            stats.unresolved, stats.discarded, final=True)
    raise ValueError(f"worker cannot handle {type(msg).__name__}")


class RemoteWorker:
    """Control endpoint of a worker reachable over TCP (JSON lines)."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        host, _, port = endpoint.rpartition(":")
        self.address = (host or "127.0.0.1", int(port))
        self.endpoint = endpoint
        self.timeout = timeout

    def _exchange(self, msg):
        with socket.create_connection(self.address, timeout=self.timeout) as sock:
            sock.sendall(m.encode(msg))
            with sock.makefile("rb") as fh:
                line = fh.readline()
        if not line:
            raise ConnectionError(f"worker at {self.endpoint} closed the connection")
        return m.decode(line)

    def register(self) -> m.RegisterWorker:
        return self._exchange(m.RegisterWorker("", "", ""))

    def request(self, msg):
        reply = self._exchange(msg)
        if isinstance(reply, m.RegisterWorker):  # empty acknowledgement
            return None
        return reply


def serve_worker(worker: Worker, host: str = "127.0.0.1", port: int = 0):
    """Serve ``worker`` on a background thread; returns the running server."""
    handle = WorkerHandle(worker)

    class _Handler(socketserver.StreamRequestHandler):
        def handle(self):
            msg = m.decode(self.rfile.readline())
            if isinstance(msg, m.RegisterWorker):
                reply = handle.register()
            else:
                reply = handle.request(msg) or m.RegisterWorker("", "", "")
            self.wfile.write(m.encode(reply))

    server = socketserver.ThreadingTCPServer((host, port), _Handler)
    server.daemon_threads = True
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server


# -- orchestrator -----------------------------------------------------------------


class Orchestrator:
    def __init__(self, clock: Clock | None = None, out_dir: str | Path | None = None,
                 on_run_start: Sequence[Callable[[MeasurementDef], None]] = (),
                 lead_s: float = 0.0):
        self.clock = clock or WallClock()
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.on_run_start = list(on_run_start)
        self.lead_ns = int(lead_s * SECOND_NS)
        self.workers: dict[SiteId, object] = {}
        self.registrations: dict[SiteId, m.RegisterWorker] = {}
        self.used_run_ids: set[int] = set()

    def register(self, handle) -> m.RegisterWorker:
        if isinstance(handle, Worker):
            handle = WorkerHandle(handle)
        info = handle.register()
        if info.site in self.workers:
            raise ValueError(f"site {info.site} already has a worker")
        self.workers[info.site] = handle
        self.registrations[info.site] = info
        return info

    @property
    def sites(self) -> list[SiteId]:
        return sorted(self.workers)

    def _check_run_id(self, run_id: int) -> None:
        taken = run_id in self.used_run_ids
        if self.out_dir is not None and (self.out_dir / str(run_id)).exists():
            taken = True
        if taken:
            raise ValueError(f"run id {run_id} was already used")

    def run(self, mdef: MeasurementDef, targets: Sequence[Address]) -> RunLog:
        self._check_run_id(mdef.run_id)
        missing = set(mdef.sender_sites) - set(self.workers)
        if missing:
            raise ValueError(f"sender sites without a registered worker: {sorted(missing)}")
        self.used_run_ids.add(mdef.run_id)
        for hook in self.on_run_start:
            hook(mdef)

        start = self.clock.now_ns() + self.lead_ns
        schedules = {s: plan_wave(mdef, targets, s, start) for s in mdef.sender_sites}
        preload = m.PreloadCorrelation(mdef.run_id, mdef.to_manifest(),
                                       [row for s in mdef.sender_sites for row in _entries(schedules[s])])
        failed: list[SiteId] = []
        stats = {"sent": 0, "dropped": 0, "rate_limited": 0, "unresolved": 0, "discarded": 0}

        for site in self.sites:
            self._call(site, preload, failed)
        wave = m.StartWave(mdef.run_id, start, [str(t) for t in targets])
        for site in mdef.sender_sites:
            if site in failed:
                continue
            ack = self._call(site, wave, failed)
            if ack is not None:
                for key in ("sent", "dropped", "rate_limited"):
                    stats[key] += getattr(ack, key)

        last_tx = max((p.tx_time for sched in schedules.values() for p in sched), default=start)
        self.clock.sleep_until(last_tx + int(mdef.quiescence_s * SECOND_NS))

        records: dict[tuple, ReplyRecord] = {}
        for site in self.sites:
            if site in failed:
                continue
            batch = self._call(site, m.EndRun(mdef.run_id), failed)
            if batch is None:
                continue
            stats["unresolved"] += batch.unresolved
            stats["discarded"] += batch.discarded
            for row in batch.records:
                rec = ReplyRecord.from_row(row)
                records.setdefault(rec.dedup_key(), rec)

        runlog = RunLog(mdef, sorted(records.values()), self.sites, bool(failed), stats)
        if self.out_dir is not None:
            runlog.save(self.out_dir / str(mdef.run_id))
        if failed:
            raise RunAborted(f"run {mdef.run_id}: unreachable workers {sorted(set(failed))}", runlog)
        return runlog

    def _call(self, site: SiteId, msg, failed: list[SiteId]):
        try:
            return self.workers[site].request(msg)
        except (OSError, ConnectionError) as exc:
            log.error("worker %s unreachable: %s", site, exc)
            failed.append(site)
            return None

    def repeat(self, mdef: MeasurementDef, targets: Sequence[Address], n: int,
               interval_s: float = DEFAULT_REPEAT_INTERVAL_S) -> list[RunLog]:
        """``n`` runs with consecutive run ids, started ``interval_s`` apart."""
        if n < 2:
            raise ValueError("repeat needs at least two runs")
        ids = [mdef.run_id + i for i in range(n)]
        for run_id in ids:
            self._check_run_id(run_id)
        first = self.clock.now_ns()
        logs = []
        for i, run_id in enumerate(ids):
            self.clock.sleep_until(first + int(i * interval_s * SECOND_NS))
            logs.append(self.run(mdef.with_run_id(run_id), targets))
        return logs
