"""Shared builders for the test suite."""

from __future__ import annotations

import ipaddress

from siteflip.measurement import MeasurementDef
from siteflip.model import Protocol, VariedField
from siteflip.orchestrator import Orchestrator
from siteflip.prober import ReplyRecord, VirtualClock, Worker
from siteflip.simulator import Perturbation, Simulator, parse_topology
from siteflip.simulator.topology import SCENARIO_DIR

ip = ipaddress.ip_address
net = ipaddress.ip_network


def scenario_text(name: str) -> str:
    return (SCENARIO_DIR / f"{name}.topo").read_text()


def sim_deployment(topo, perturbation: Perturbation | None = None, out_dir=None):
    sim = Simulator(topo, perturbation)
    clock = VirtualClock()
    orch = Orchestrator(clock, out_dir, on_run_start=[lambda _: sim.begin_run()])
    workers = {}
    for site in topo.sites:
        w = Worker(site, topo.anycast, clock=clock)
        sim.attach(w)
        orch.register(w)
        workers[site] = w
    return sim, orch, workers


def make_def(topo, protocol=Protocol.ICMP, varied=VariedField.SRC_ADDR, run_id=1,
             senders=None, k=5):
    senders = senders or (next(iter(topo.sites)),)
    return MeasurementDef(run_id, protocol, topo.anycast, varied, k, tuple(senders))


def lb_topology(policy: str, seed: int, origin: str = "10.9.0.0/24") -> object:
    """Scenario 1 with the client's border router using ``policy``."""
    text = scenario_text("scenario1").replace(
        "policy=FiveTuple seed=7", f"policy={policy} seed={seed}")
    text = text.replace("10.9.0.0/24", origin)
    return parse_topology(text)


def chain_topology(routers: int, silent: bool = False):
    """A site, then ``routers`` routers in a row, the last one originating 10.77.0.0/24.

    The first router is the site's own router, so a target sits at hop
    ``routers + 1``.
    """
    lines = ["anycast 198.51.100.0/24"]
    for i in range(routers):
        lines.append(f"node r{i} {64500 + i} 192.0.2.{i + 1}")
    for i in range(routers - 1):
        lines.append(f"link r{i} r{i + 1} {i + 1}")
    lines.append("site S0 r0 192.0.2.250")
    lines.append(f"origin r{routers - 1} 10.77.0.0/24" + (" silent" if silent else ""))
    lines.append("route r0 198.51.100.0/24 site:S0")
    for i in range(1, routers):
        lines.append(f"route r{i} 198.51.100.0/24 r{i - 1}")
    for i in range(routers - 1):
        lines.append(f"route r{i} 10.77.0.0/24 r{i + 1}")
    return parse_topology("\n".join(lines) + "\n")


def record(prefix="192.0.2.0/24", var=0, site="AMS", run_id=1, tx=1_000, rx=2_000,
           kind="Reply", target=None, protocol=Protocol.ICMP, tx_site="AMS") -> ReplyRecord:
    from siteflip.model import FlowTuple

    prefix = net(prefix)
    target = ip(target) if target else prefix.network_address + 1
    flow = FlowTuple(ip("198.51.100.1") + var, target, protocol,
                     0 if protocol is Protocol.ICMP else 62000,
                     0 if protocol is Protocol.ICMP else 80)
    return ReplyRecord(run_id, prefix, target, var, site, kind, tx_site, tx, rx, 60, flow,
                       None if kind == "Reply" else ip("203.0.113.1"))


def id_prefix(i: int):
    """A distinct /24 for each integer fixture id."""
    return ipaddress.IPv4Network(((0x0A000000 + (i << 8)) & 0xFFFFFFFF, 24))


def save_report_log(run_dir, run_id, responsive, flipped, protocol=Protocol.ICMP,
                    varied=VariedField.SRC_ADDR, latency_ms=None):
    """Write a run directory whose flips reproduce the given id sets.

    Flipped ids get replies at AMS and TYO, the rest only at AMS.
    ``latency_ms`` maps an id to (AMS, TYO) one-way delays.
    """
    from siteflip.model import FlowTuple
    from siteflip.orchestrator import RunLog

    anycast = net("198.51.100.0/24")
    mdef = MeasurementDef(run_id, protocol, anycast, varied, 2, ("AMS",))
    flipped = set(flipped)
    latency_ms = latency_ms or {}
    records = []
    for i in sorted(set(responsive) | flipped):
        prefix = id_prefix(i)
        target = prefix.network_address + 1
        delays = latency_ms.get(i, (10.0, 20.0))
        sites = ("AMS", "TYO") if i in flipped else ("AMS",)
        for var, (site, delay) in enumerate(zip(sites, delays)):
            flow = FlowTuple(anycast.network_address + 1 + var, target, protocol,
                             0 if protocol is Protocol.ICMP else 62000,
                             0 if protocol is Protocol.ICMP else 80)
            records.append(ReplyRecord(run_id, prefix, target, var, site, "Reply", "AMS",
                                       0, int(delay * 1_000_000), 60, flow))
    RunLog(mdef, records, ["AMS", "TYO"]).save(run_dir)
    return run_dir
