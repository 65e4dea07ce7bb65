"""Command-line driver: measurements, traces and analyses.

Exit codes: 0 success, 1 usage error, 2 runtime error, 3 partial data.
"""

from __future__ import annotations

import argparse
import ipaddress
import logging
import sys
import threading
from pathlib import Path

from siteflip import analysis
from siteflip.hitlist import AsMap, load_as_map, load_categories, load_exclusions, load_targets
from siteflip.measurement import DEFAULT_K, DEFAULT_PPS, DEFAULT_QUIESCENCE_S, MeasurementDef
from siteflip.model import Protocol, VariedField, check_combination, parse_address, parse_prefix
from siteflip.orchestrator import (
    DEFAULT_REPEAT_INTERVAL_S,
    Orchestrator,
    RemoteWorker,
    RunAborted,
    RunLog,
    load_run,
    serve_worker,
)
from siteflip.prober import LogFormatError, VirtualClock, WallClock, Worker
from siteflip.traceroute import (
    HOP_MARGIN,
    Tracer,
    estimate_path_length,
    find_divergence,
    locate_lb,
    write_traces,
)

log = logging.getLogger("siteflip")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3
DEFAULT_OUT = "runs"
UNREACHABLE_EST = 25


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- configuration -------------------------------------------------------------


def read_config(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


CONFIG_KEYS = {"k", "granularity", "quiescence_s", "pps", "hitlist", "as_map", "exclusions",
               "categories", "out", "senders", "workers", "anycast_prefix", "seed", "sim",
               "opt_out_url", "interval_s"}


def _apply_config(args) -> None:
    if not args.config:
        return
    cfg = read_config(args.config)
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key, value in cfg.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)


def _int(args, name, default):
    value = getattr(args, name, None)
    try:
        return default if value is None else int(value)
    except ValueError:
        raise UsageError(f"{name} must be an integer, got {value!r}") from None


def _float(args, name, default):
    value = getattr(args, name, None)
    try:
        return default if value is None else float(value)
    except ValueError:
        raise UsageError(f"{name} must be a number, got {value!r}") from None


# -- deployments ---------------------------------------------------------------


class SimDeployment:
    """All sites of a topology, wired to one simulator and a virtual clock."""

    def __init__(self, topo_path: str, seed: int, flip_prob: float | None):
        from siteflip.simulator import Perturbation, Simulator, load_topology

        self.topology = load_topology(topo_path)
        self.sim = Simulator(self.topology, Perturbation(route_flip_prob=flip_prob, seed=seed))
        self.clock = VirtualClock()
        self.workers = {s: Worker(s, self.topology.anycast, clock=self.clock)
                        for s in self.topology.sites}
        for w in self.workers.values():
            self.sim.attach(w)

    def orchestrator(self, out_dir: Path) -> Orchestrator:
        orch = Orchestrator(self.clock, out_dir, on_run_start=[lambda _: self.sim.begin_run()])
        for w in self.workers.values():
            orch.register(w)
        return orch

    def default_targets(self):
        from siteflip.simulator import topology_targets

        return topology_targets(self.topology)

    def as_map(self) -> AsMap:
        topo = self.topology
        as_map = AsMap()
        for node in topo.nodes.values():
            as_map.add(ipaddress.ip_network(node.addr), node.asn, topo.as_names.get(node.asn, ""))
        for site in topo.sites.values():
            asn = topo.nodes[site.node].asn
            as_map.add(ipaddress.ip_network(site.fake_addr), asn, topo.as_names.get(asn, ""))
        for origin in topo.origins:
            asn = topo.nodes[origin.node].asn
            as_map.add(origin.prefix, asn, topo.as_names.get(asn, ""))
        return as_map


def _deployment(args):
    if args.sim:
        return SimDeployment(args.sim, _int(args, "seed", 0), args.flip_prob)
    return None


def _live_orchestrator(args, out_dir: Path) -> Orchestrator:
    if not args.workers:
        raise UsageError("live runs need --workers SITE=HOST:PORT,... (or --sim TOPOLOGY)")
    orch = Orchestrator(WallClock(), out_dir, lead_s=1.0)
    for item in str(args.workers).split(","):
        _, _, endpoint = item.partition("=")
        orch.register(RemoteWorker(endpoint or item))
    return orch


def _next_run_id(out_dir: Path) -> int:
    taken = [int(p.name) for p in out_dir.glob("*") if p.is_dir() and p.name.isdigit()]
    return max(taken, default=0) + 1


def _definition(args, anycast, senders, run_id: int) -> MeasurementDef:
    protocol = Protocol.parse(args.proto)
    varied = VariedField.parse(args.vary)
    try:
        check_combination(protocol, varied)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    k = _int(args, "k", DEFAULT_K)
    if varied is None and args.k is None:
        k = 1
    granularity = _int(args, "granularity", None)
    try:
        return MeasurementDef(
            run_id=run_id, protocol=protocol, anycast_prefix=anycast, varied=varied, k=k,
            sender_sites=tuple(senders), granularity=granularity,
            target_source=str(args.hitlist or ""), pps=_int(args, "pps", DEFAULT_PPS),
            quiescence_s=_float(args, "quiescence_s", DEFAULT_QUIESCENCE_S),
            opt_out_url=str(args.opt_out_url or ""),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _targets(args, deployment, family: int, granularity: int):
    if args.target:
        return [parse_address(t) for t in args.target]
    if args.hitlist:
        ts = load_targets(args.hitlist, family, granularity)
        if ts.skipped:
            log.warning("hitlist: skipped %d lines", ts.skipped)
        return ts.addresses()
    if deployment is not None:
        return deployment.default_targets()
    raise UsageError("no targets: give --target or --hitlist")


def _setup_run(args):
    out_dir = Path(args.out or DEFAULT_OUT)
    deployment = _deployment(args)
    if deployment is not None:
        orch = deployment.orchestrator(out_dir)
        anycast = deployment.topology.anycast
        senders = _senders(args) or [next(iter(deployment.topology.sites))]
        unknown = set(senders) - set(deployment.topology.sites)
        if unknown:
            raise UsageError(f"unknown sender sites: {', '.join(sorted(unknown))}")
    else:
        orch = _live_orchestrator(args, out_dir)
        if not args.anycast_prefix:
            raise UsageError("live runs need --anycast-prefix")
        anycast = parse_prefix(str(args.anycast_prefix))
        senders = _senders(args) or orch.sites[:1]
    run_id = _int(args, "run_id", None) or _next_run_id(out_dir)
    mdef = _definition(args, anycast, senders, run_id)
    targets = _targets(args, deployment, mdef.family, mdef.granularity)
    return deployment, orch, mdef, targets, out_dir


def _senders(args) -> list[str]:
    return [s for s in str(args.senders or "").split(",") if s]


def _report_run(runlog: RunLog, out_dir: Path) -> None:
    report = analysis.detect_flips(runlog)
    responsive, flipped, pct = report.summary()
    reports = out_dir / str(runlog.run_id) / "reports"
    _write_flip_reports(report, reports)
    partial = " partial=true" if runlog.partial else ""
    print(f"run={runlog.run_id} protocol={runlog.definition.protocol.name} "
          f"responsive={responsive} flipped={flipped} pct={pct:.1f}{partial}")


def _write_flip_reports(report: analysis.FlipReport, reports: Path) -> None:
    responsive, flipped, pct = report.summary()
    proto = report.protocol.name if report.protocol else ""
    analysis.write_table(reports / "flips.csv",
                         ["run_id", "protocol", "family", "responsive", "flipped", "pct"],
                         [[report.run_id, proto, report.family, responsive, flipped, f"{pct:.1f}"]])
    analysis.write_table(reports / "prefixes.csv",
                         ["prefix", "variations", "sites", "flipped"], analysis.flip_rows(report))


# -- commands ------------------------------------------------------------------


def cmd_measure(args) -> int:
    _, orch, mdef, targets, out_dir = _setup_run(args)
    try:
        runlog = orch.run(mdef, targets)
    except RunAborted as exc:
        log.error("%s", exc)
        _report_run(exc.runlog, out_dir)
        return EXIT_PARTIAL
    _report_run(runlog, out_dir)
    return EXIT_OK


def cmd_repeat(args) -> int:
    _, orch, mdef, targets, out_dir = _setup_run(args)
    count = _int(args, "count", 10)
    try:
        logs = orch.repeat(mdef, targets, count,
                           _float(args, "interval_s", DEFAULT_REPEAT_INTERVAL_S))
    except RunAborted as exc:
        log.error("%s", exc)
        _report_run(exc.runlog, out_dir)
        return EXIT_PARTIAL
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for runlog in logs:
        _report_run(runlog, out_dir)
    return EXIT_OK


def _client_flows(mdef: MeasurementDef, target, anycast_dst):
    """Flows a client-side vantage point would vary toward the anycast prefix."""
    from siteflip.model import FlowTuple

    out = []
    for i in range(mdef.k):
        if mdef.protocol is Protocol.ICMP:
            out.append(FlowTuple(target, anycast_dst + i, Protocol.ICMP))
        else:
            dport = 53 if mdef.protocol is Protocol.UDP else 80
            out.append(FlowTuple(target, anycast_dst, mdef.protocol, 33434 + i, dport))
    return out


def cmd_trace(args) -> int:
    if not args.target and not args.hitlist:
        raise UsageError("trace needs --target or --hitlist")
    deployment = _deployment(args)
    if deployment is None:
        raise UsageError("traces are supported with --sim only; live traces need a raw-socket "
                         "tap per site, see the worker command")
    topo = deployment.topology
    sender = (_senders(args) or [next(iter(topo.sites))])[0]
    if sender not in topo.sites:
        raise UsageError(f"unknown sender site {sender}")
    out_dir = Path(args.out or DEFAULT_OUT)
    run_id = _int(args, "run_id", None) or _next_run_id(out_dir)
    mdef = _definition(args, topo.anycast, [sender], run_id)
    targets = _targets(args, deployment, mdef.family, mdef.granularity)
    sim = deployment.sim
    taps = {s: sim.tap(s) for s in topo.sites}
    tracer = Tracer(taps[sender], taps, deployment.clock, run_id=run_id)
    as_map = load_as_map(args.as_map) if args.as_map else deployment.as_map()
    est_override = _int(args, "est_len", None)

    paths = []
    for target in targets:
        flows = [tpl.with_dst(target) for tpl in mdef.variations()]
        est = est_override
        if est is None:
            reply_ttl = _probe_reply_ttl(tracer, target, flows[0])
            est = UNREACHABLE_EST if reply_ttl is None else estimate_path_length(reply_ttl)
        traces = [tracer.trace(target, f, est, variation_id=i) for i, f in enumerate(flows)]
        paths.extend(traces)
        line = f"target={target} est_len={est} dest_reached={int(any(t.dest_reached for t in traces))}"
        if len(traces) >= 2:
            div = find_divergence(traces)
            if div is None:
                line += " divergence=none"
            else:
                line += (f" divergence_ttl={div.ttl} reason={div.reason} "
                         f"sites={';'.join(div.sites)} evidence={div.evidence_addr or ''}")
            if args.locate:
                origin = topo.origin_of(target)
                client_as = topo.nodes[origin.node].asn if origin else 0
                forward = None
                if origin is not None:
                    dst = topo.anycast_source()
                    forward = [sim.client_trace(f, est + HOP_MARGIN, target=dst)
                               for f in _client_flows(mdef, target, dst)]
                loc = locate_lb(forward, traces, as_map, client_as)
                line += (f" location={loc.place.value} direction={loc.direction}"
                         f" lb_hop={loc.hop_addr or ''} lb_as={loc.asn}")
        print(line)
    trace_dir = out_dir / str(run_id)
    trace_dir.mkdir(parents=True, exist_ok=True)
    write_traces(trace_dir / "traces.csv", paths)
    print(f"trace log: {trace_dir / 'traces.csv'}")
    return EXIT_OK


def _probe_reply_ttl(tracer: Tracer, target, flow) -> int | None:
    """Send one full-TTL probe and return the TTL the target's reply arrived with."""
    from siteflip import wire

    spec = wire.ProbeSpec(flow, tracer.run_id, 0, tracer.clock.now_ns())
    tracer.send_tap.send(wire.build_probe(spec), spec.tx_time)
    deadline = spec.tx_time + tracer.wait_ns
    while True:
        for tap in tracer.capture_taps.values():
            while (item := tap.recv(0)) is not None:
                parsed = wire.parse_reply(item[0], flow.family)
                if (parsed is not None and parsed.kind is not wire.ReplyKind.TIME_EXCEEDED
                        and parsed.flow_echo.src == target):
                    return parsed.reply_ttl
        now = tracer.clock.now_ns()
        if now >= deadline:
            return None
        tracer.clock.sleep_until(deadline)


def cmd_worker(args) -> int:
    from siteflip.prober import RawSocketTap

    prefix = parse_prefix(args.prefix)
    tap = RawSocketTap(prefix.version)
    worker = Worker(args.site, prefix, tap, endpoint=args.listen)
    host, _, port = args.listen.rpartition(":")
    server = serve_worker(worker, host or "0.0.0.0", int(port))
    stop = threading.Event()
    log.info("worker %s listening on %s:%d", args.site, *server.server_address[:2])
    try:
        worker.capture_loop(stop=stop)
    except KeyboardInterrupt:
        stop.set()
    finally:
        server.shutdown()
    return EXIT_OK


# -- analyses --------------------------------------------------------------------


def _reports_dir(args, first_log: str) -> Path:
    if args.reports:
        return Path(args.reports)
    path = Path(first_log)
    return (path if path.is_dir() else path.parent) / "reports"


def _load_reports(paths):
    return [analysis.detect_flips(load_run(p)) for p in paths]


def analyze_flips(args) -> int:
    for path in args.logs:
        report = analysis.detect_flips(load_run(path))
        responsive, flipped, pct = report.summary()
        _write_flip_reports(report, _reports_dir(args, path))
        print(f"run={report.run_id} responsive={responsive} flipped={flipped} pct={pct:.1f}")
    return EXIT_OK


def analyze_intersect(args) -> int:
    a, b = _load_reports([args.a, args.b])
    inter = analysis.intersect_runs(a, b)
    only_a, only_b, both = inter.counts()
    names = [Path(args.a).stem if Path(args.a).is_file() else Path(args.a).name,
             Path(args.b).stem if Path(args.b).is_file() else Path(args.b).name]
    analysis.write_intersections(_reports_dir(args, args.a) / "intersections.csv", names, [a, b])
    print(f"only_a={only_a} only_b={only_b} both={both}")
    return EXIT_OK


def analyze_layers(args) -> int:
    ip_run, *l4_runs = _load_reports([args.ip_log, *args.l4_logs])
    result = analysis.classify_layers(ip_run, l4_runs)
    counts = result.counts()
    rows = [[cls.value, counts[cls]] for cls in analysis.LayerClass]
    analysis.write_table(_reports_dir(args, args.ip_log) / "layers.csv", ["class", "count"], rows)
    print(f"ip_varied={result.ip_flipped} port_varied={result.l4_flipped} "
          + " ".join(f"{cls.value}={counts[cls]}" for cls in analysis.LayerClass))
    return EXIT_OK


def analyze_as(args) -> int:
    if not args.as_map:
        raise UsageError("analyze as needs --as-map")
    (report,) = _load_reports([args.log])
    categories = load_categories(args.categories) if args.categories else None
    agg = analysis.aggregate_as(report, load_as_map(args.as_map), categories)
    reports = _reports_dir(args, args.log)
    analysis.write_table(reports / "as.csv", ["asn", "name", "flipped", "responsive", "ratio"],
                         [[r.asn, r.name, r.flipped, r.responsive, f"{r.ratio:.3f}"]
                          for r in agg.rows])
    analysis.write_cdf(reports / "as_ratio_cdf_all.csv", agg.cdf_all)
    analysis.write_cdf(reports / "as_ratio_cdf_over10.csv", agg.cdf_over10)
    for r in agg.rows[:args.top]:
        print(f"asn={r.asn} name={r.name} flipped={r.flipped} responsive={r.responsive} "
              f"ratio={r.ratio:.3f}")
    if agg.residential is not None:
        print(f"residential={agg.residential} share={agg.residential_share:.1f}")
    return EXIT_OK


def analyze_consistency(args) -> int:
    result = analysis.classify_consistency(_load_reports(args.logs))
    counts, shares = result.counts(), result.shares()
    rows = [[cls.value, counts[cls], f"{shares[cls]:.1f}"] for cls in analysis.ConsistencyClass]
    analysis.write_table(_reports_dir(args, args.logs[0]) / "consistency.csv",
                         ["class", "count", "share"], rows)
    print(f"runs={result.runs} prefixes={len(result.classes)}")
    for name, count, share in rows:
        print(f"{name}={count} share={share}")
    return EXIT_OK


def analyze_longevity(args) -> int:
    t0, t1 = _load_reports([args.t0, args.t1])
    both, share = analysis.longevity(t0, t1)
    analysis.write_table(_reports_dir(args, args.t0) / "longevity.csv",
                         ["flipped_t0", "flipped_t1", "both", "share_of_t0"],
                         [[len(t0.flipped), len(t1.flipped), both, f"{share:.1f}"]])
    print(f"flipped_t0={len(t0.flipped)} flipped_t1={len(t1.flipped)} both={both} share={share:.1f}")
    return EXIT_OK


def analyze_latency(args) -> int:
    stats = analysis.latency_stats(load_run(args.log))
    reports = _reports_dir(args, args.log)
    analysis.write_table(reports / "latency.csv",
                         ["prefix", "min_path_ms", "max_path_ms", "oneway_diff_ms", "rtt_diff_ms"],
                         [[p.prefix, f"{p.min_path_ms:.3f}", f"{p.max_path_ms:.3f}",
                           f"{p.oneway_diff_ms:.3f}", f"{p.rtt_diff_ms:.3f}"]
                          for p in stats.prefixes])
    analysis.write_cdf(reports / "rtt_diff_cdf.csv", stats.rtt_cdf())
    print(stats.summary_line())
    print(f"prefixes={len(stats.prefixes)} skewed_samples={stats.skewed}")
    print(f"# {stats.assumption}")
    return EXIT_OK


def analyze_multiclient(args) -> int:
    runlog = load_run(args.log)
    exclusions = load_exclusions(args.exclusions) if args.exclusions else set()
    try:
        remaining = analysis.multi_client_filter(runlog, exclusions)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    flipped = analysis.detect_flips(runlog).flipped
    analysis.write_table(_reports_dir(args, args.log) / "multiclient.csv", ["prefix"],
                         [[p] for p in sorted(remaining, key=analysis._sort_key)])
    print(f"flipped={len(flipped)} excluded={len(flipped) - len(remaining)} "
          f"remaining={len(remaining)}")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------------


def _run_options(p: argparse.ArgumentParser, *, vary_default: str = "src-addr") -> None:
    p.add_argument("--proto", default="icmp", help="icmp, tcp or udp")
    p.add_argument("--vary", default=vary_default,
                   help="src-addr, src-port, dst-port, src-dst-port, all or none")
    p.add_argument("--k", type=int, help=f"header variations per target (default {DEFAULT_K})")
    p.add_argument("--senders", help="comma-separated sending sites")
    p.add_argument("--target", action="append", help="target address (repeatable)")
    p.add_argument("--hitlist", help="file with one target address per line")
    p.add_argument("--granularity", type=int, help="prefix length for aggregation")
    p.add_argument("--run-id", type=int)
    p.add_argument("--pps", type=int)
    p.add_argument("--quiescence-s", type=float, dest="quiescence_s")
    p.add_argument("--opt-out-url", dest="opt_out_url")
    p.add_argument("--sim", help="topology file or bundled scenario name")
    p.add_argument("--flip-prob", type=float, help="override route flip probability (simulator)")
    p.add_argument("--workers", help="live deployment: SITE=HOST:PORT,...")
    p.add_argument("--anycast-prefix", dest="anycast_prefix")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="siteflip", description="Detect anycast site flipping.")
    parser.add_argument("--config", help="flat key=value configuration file")
    parser.add_argument("--seed", type=int, help="seed for every randomised component")
    parser.add_argument("--out", help=f"output directory (default {DEFAULT_OUT})")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("measure", help="run one measurement")
    _run_options(p)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("repeat", help="run back-to-back measurements")
    _run_options(p)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--interval-s", type=float, dest="interval_s")
    p.set_defaults(func=cmd_repeat)

    p = sub.add_parser("trace", help="Paris traceroute from the anycast prefix")
    _run_options(p)
    p.add_argument("--est-len", type=int, dest="est_len", help="skip the path-length probe")
    p.add_argument("--locate", action="store_true", help="classify where the LB sits")
    p.add_argument("--as-map", dest="as_map")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("worker", help="serve a live site worker (needs raw sockets)")
    p.add_argument("--site", required=True)
    p.add_argument("--prefix", required=True, help="anycast prefix this site announces")
    p.add_argument("--listen", default="0.0.0.0:7000")
    p.set_defaults(func=cmd_worker)

    p = sub.add_parser("analyze", help="analyse run logs")
    asub = p.add_subparsers(dest="analysis", required=True, parser_class=_Parser)

    def analysis_parser(name, func, help_text):
        q = asub.add_parser(name, help=help_text)
        q.add_argument("--reports", help="report directory (default: next to the first log)")
        q.set_defaults(func=func)
        return q

    q = analysis_parser("flips", analyze_flips, "responsive and flipped prefixes per run")
    q.add_argument("logs", nargs="+")
    q = analysis_parser("intersect", analyze_intersect, "compare the flips of two runs")
    q.add_argument("a")
    q.add_argument("b")
    q = analysis_parser("layers", analyze_layers, "address- versus port-dependent flips")
    q.add_argument("ip_log")
    q.add_argument("l4_logs", nargs="+")
    q = analysis_parser("as", analyze_as, "flip ratios per AS")
    q.add_argument("log")
    q.add_argument("--as-map", dest="as_map")
    q.add_argument("--categories")
    q.add_argument("--top", type=int, default=10)
    q = analysis_parser("consistency", analyze_consistency, "persistence over repeated runs")
    q.add_argument("logs", nargs="+")
    q = analysis_parser("longevity", analyze_longevity, "flips shared by two distant runs")
    q.add_argument("t0")
    q.add_argument("t1")
    q = analysis_parser("latency", analyze_latency, "latency of the paths a prefix reaches")
    q.add_argument("log")
    q = analysis_parser("multiclient", analyze_multiclient, "several-sender run minus exclusions")
    q.add_argument("log")
    q.add_argument("--exclusions")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _apply_config(args)
        return args.func(args)
    except UsageError as exc:
        print(f"siteflip: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LogFormatError, ValueError, OSError) as exc:
        print(f"siteflip: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
