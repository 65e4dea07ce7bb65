"""Ground-truth flip sets computed straight from the routing tables."""

from __future__ import annotations

from collections.abc import Iterable

from siteflip.model import Address, Prefix, Protocol, SiteId, prefix_of
from siteflip.orchestrator import MeasurementDef, gen_variations
from siteflip.simulator.engine import HOST_TTL, Simulator
from siteflip.simulator.topology import Topology
from siteflip.wire import DEFAULT_TTL


def reached_sites(sim: Simulator, mdef: MeasurementDef, target: Address) -> list[SiteId | None]:
    """Site reached by the reply to each (variation, sender) probe."""
    out: list[SiteId | None] = []
    for template in gen_variations(mdef):
        flow = template.with_dst(target)
        for sender in sorted(mdef.sender_sites):
            fwd = sim.forward(sim.topology.sites[sender].node, flow, DEFAULT_TTL)
            origin = sim.topology.origin_of(target)
            answers = not (flow.protocol is Protocol.UDP and flow.dst_port != 53)
            if fwd.outcome != "host" or origin.silent or not answers:
                out.append(None)
                continue
            back = sim.forward(origin.node, flow.reversed(), HOST_TTL)
            out.append(back.site if back.outcome == "site" else None)
    return out


def oracle_flip_set(topology: Topology, mdef: MeasurementDef,
                    targets: Iterable[Address]) -> set[Prefix]:
    """Prefixes whose probes, enumerated exhaustively, reach two or more sites."""
    sim = Simulator(topology)
    if sim.is_random():
        raise ValueError("oracle needs deterministic routing: disable flips, "
                         "load dependence and per-packet policies")
    flipped = set()
    for target in targets:
        sites = {s for s in reached_sites(sim, mdef, target) if s is not None}
        if len(sites) >= 2:
            flipped.add(prefix_of(target, mdef.granularity))
    return flipped
