"""Packet forwarding over a :class:`Topology`.

Routers decrement the TTL of every packet they forward, including the
last router before a host and the fake host in front of each site. ICMP
errors a router generates itself leave through the first next hop of
the group, without hashing, as locally originated traffic usually does.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field

from siteflip import wire
from siteflip.model import Address, FlowTuple, Protocol, SiteId
from siteflip.simulator.hashing import HashPolicy, hash_next_hop
from siteflip.simulator.topology import Topology, TopologyError, site_hop

HOST_TTL = 64
ROUTER_TTL = 255


@dataclass
class Perturbation:
    """Randomised departures from the static routing tables.

    ``route_flip_prob`` overrides the per-route probabilities declared in
    the topology; it is the chance, per packet using a flagged route,
    that the route toggles to its alternate. ``load_dependent`` maps a
    router to a threshold: its hash policy is only active in runs whose
    drawn load exceeds the threshold. Load values are synthetic.
    """

    route_flip_prob: float | None = None
    load_dependent: dict[str, float] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.route_flip_prob is not None and not 0.0 <= self.route_flip_prob <= 1.0:
            raise ValueError("route_flip_prob must be within [0, 1]")


@dataclass(frozen=True)
class Hop:
    node: str
    addr: Address
    delay_ns: int  # delay of the link into this hop


@dataclass
class Leg:
    """Outcome of forwarding one packet."""

    outcome: str  # "host", "site", "expired" or "dropped"
    hops: list[Hop] = field(default_factory=list)
    site: SiteId | None = None
    expired_at: Address | None = None
    expired_node: str | None = None
    ttl: int = 0

    @property
    def delay_ns(self) -> int:
        return sum(h.delay_ns for h in self.hops)


@dataclass
class Arrival:
    """A packet handed to an anycast site."""

    site: SiteId
    packet: bytes
    delay_ns: int


class Simulator:
    def __init__(self, topology: Topology, perturbation: Perturbation | None = None):
        self.topology = topology
        self.perturbation = perturbation or Perturbation()
        self.rng = random.Random(self.perturbation.seed)
        self.packet_seq = 0
        self.dropped = 0
        self.load = 1.0
        self._flipped: dict[tuple, bool] = {}
        self._taps: dict[SiteId, "SimTap"] = {}

    # -- perturbation state --

    def flip_probability(self, key) -> float:
        if self.perturbation.route_flip_prob is not None:
            return self.perturbation.route_flip_prob
        return self.topology.flips[key].probability

    def load_thresholds(self) -> dict[str, float]:
        if self.perturbation.load_dependent is not None:
            return self.perturbation.load_dependent
        return self.topology.load_thresholds

    def is_random(self) -> bool:
        if any(self.flip_probability(k) > 0 for k in self.topology.flips):
            return True
        if self.load_thresholds():
            return True
        return any(n.policy is HashPolicy.PER_PACKET for n in self.topology.nodes.values())

    def begin_run(self) -> None:
        """Draw the synthetic load level for the next measurement run."""
        self.load = self.rng.random()

    # -- forwarding --

    def _next_hop(self, node: str, flow: FlowTuple, local: bool) -> str | None:
        route = self.topology.lookup(node, flow.dst)
        if route is None:
            return None
        hops = route.next_hops
        key = (node, route.prefix)
        if key in self.topology.flips:
            p = self.flip_probability(key)
            if p > 0 and self.rng.random() < p:
                self._flipped[key] = not self._flipped.get(key, False)
            if self._flipped.get(key, False):
                hops = (self.topology.flips[key].alt,)
        router = self.topology.nodes[node]
        if local or router.policy is None or len(hops) == 1:
            return hops[0]
        threshold = self.load_thresholds().get(node)
        if threshold is not None and self.load <= threshold:
            return hops[0]
        return hops[hash_next_hop(router.policy, flow, self.packet_seq, len(hops), router.seed)]

    def forward(self, start: str, flow: FlowTuple, ttl: int, *, local: bool = False) -> Leg:
        """Forward a packet entering router ``start``.

        ``local`` marks a packet generated by ``start`` itself: it is not
        TTL-decremented or hashed there.
        """
        topo = self.topology
        self.packet_seq += 1
        node = start
        leg = Leg("dropped")
        delay = 0
        for _ in range(512):
            leg.hops.append(Hop(node, topo.nodes[node].addr, delay))
            origin = topo.origin_of(flow.dst)
            at_origin = origin is not None and origin.node == node
            if not at_origin and topo.lookup(node, flow.dst) is None:
                break  # no route: discarded before TTL processing
            if not local:
                ttl -= 1
                if ttl <= 0:
                    leg.outcome, leg.expired_node = "expired", node
                    leg.expired_at = topo.nodes[node].addr
                    return leg
            if at_origin:
                leg.outcome, leg.ttl = "host", ttl
                return leg
            hop = self._next_hop(node, flow, local)
            local = False
            if hop is None:
                break
            site = site_hop(hop)
            if site is not None:
                fake = topo.sites[site].fake_addr
                leg.hops.append(Hop(f"fake:{site}", fake, 0))
                ttl -= 1
                if ttl <= 0:
                    leg.outcome, leg.expired_at = "expired", fake
                    leg.expired_node = f"fake:{site}"
                    return leg
                if flow.dst not in topo.anycast:
                    break
                leg.outcome, leg.site, leg.ttl = "site", site, ttl
                return leg
            delay = topo.delay_ns(node, hop)
            node = hop
        self.dropped += 1
        leg.outcome = "dropped"
        return leg

    def client_node(self, addr: Address) -> str:
        origin = self.topology.origin_of(addr)
        if origin is None:
            raise TopologyError(f"{addr} is not originated by any node")
        return origin.node

    def route_packet(self, packet: bytes, site: SiteId) -> tuple[Leg, Leg | None, Arrival | None]:
        """Send ``packet`` from the host of ``site`` and follow the response.

        Returns the forward leg, the leg of whatever came back (target
        reply or Time Exceeded), and the arrival at an anycast site.
        """
        flow, ttl = wire.packet_flow(packet)
        start = self.topology.sites[site].node
        fwd = self.forward(start, flow, ttl)
        if fwd.outcome == "expired":
            if fwd.expired_node in self.topology.te_silent or fwd.expired_node.startswith("fake:"):
                return fwd, None, None
            received = wire.set_ttl(packet, 1)
            reply = wire.build_time_exceeded(received, fwd.expired_at, ROUTER_TTL)
            back = self.forward(fwd.expired_node, FlowTuple(fwd.expired_at, flow.src, Protocol.ICMP),
                                ROUTER_TTL, local=True)
        elif fwd.outcome == "host":
            origin = self.topology.origin_of(flow.dst)
            if origin.silent:
                return fwd, None, None
            reply = _host_reply(wire.set_ttl(packet, fwd.ttl))
            if reply is None:
                return fwd, None, None
            back = self.forward(origin.node, flow.reversed(), HOST_TTL)
        else:
            return fwd, None, None
        if back.outcome != "site":
            return fwd, back, None
        arrived = wire.set_ttl(reply, back.ttl)
        return fwd, back, Arrival(back.site, arrived, fwd.delay_ns + back.delay_ns)

    def client_trace(self, flow: FlowTuple, max_ttl: int = 30, target: Address | None = None):
        """Traceroute from the client owning ``flow.src`` toward an anycast address.

        Stands in for a traceroute run on a client-side vantage point. A
        hop expiring at a site's fake host reveals the site; RTTs are
        twice the one-way delay. ``target`` labels the trace when flows
        address different hosts of the anycast prefix.
        """
        from siteflip.traceroute import TraceHop, TracePath

        start = self.client_node(flow.src)
        path = TracePath(target or flow.dst, flow)
        for ttl in range(1, max_ttl + 1):
            leg = self.forward(start, flow, ttl)
            path.probes_sent += 1
            rtt = 2 * leg.delay_ns / 1e6
            if leg.outcome == "expired":
                node = leg.expired_node
                if node in self.topology.te_silent:
                    path.hops.append(TraceHop(ttl, None))
                    continue
                site = self.topology.site_by_fake(leg.expired_at)
                path.hops.append(TraceHop(ttl, leg.expired_at, site.site_id if site else None, rtt))
            elif leg.outcome == "site":
                path.hops.append(TraceHop(ttl, flow.dst, leg.site, rtt))
                path.dest_reached = True
                break
            else:
                path.hops.append(TraceHop(ttl, None))
        return path

    # -- taps --

    def tap(self, site: SiteId) -> "SimTap":
        if site not in self.topology.sites:
            raise TopologyError(f"unknown site {site!r}")
        if site not in self._taps:
            self._taps[site] = SimTap(self, site)
        return self._taps[site]

    def attach(self, worker) -> "SimTap":
        """Bind a worker (anything with ``site`` and ``tap``) to its site."""
        worker.tap = self.tap(worker.site)
        return worker.tap

    def inject(self, site: SiteId, packet: bytes, tx_time: int) -> None:
        _, _, arrival = self.route_packet(packet, site)
        if arrival is not None:
            self.tap(arrival.site).deliver(arrival.packet, tx_time + arrival.delay_ns)


def _host_reply(probe: bytes) -> bytes | None:
    flow, _ = wire.packet_flow(probe)
    if flow.protocol is Protocol.ICMP:
        return wire.build_echo_reply(probe, HOST_TTL)
    if flow.protocol is Protocol.TCP:
        return wire.build_tcp_rst(probe, HOST_TTL)
    if flow.dst_port == 53:
        return wire.build_dns_response(probe, HOST_TTL)
    return None


class SimTap:
    """Send/capture endpoint of one site, backed by the simulator.

    Sending is synchronous: the simulated network delivers every
    resulting packet to the capturing site's queue before ``send``
    returns, stamped with ``tx_time`` plus the accumulated link delay.
    """

    def __init__(self, sim: Simulator, site: SiteId):
        self.sim = sim
        self.site = site
        self._queue: deque[tuple[bytes, int]] = deque()

    def send(self, packet: bytes, tx_time: int) -> None:
        self.sim.inject(self.site, packet, tx_time)

    def deliver(self, packet: bytes, rx_time: int) -> None:
        self._queue.append((packet, rx_time))

    def recv(self, timeout: float | None = None) -> tuple[bytes, int] | None:
        return self._queue.popleft() if self._queue else None

    def pending(self) -> int:
        return len(self._queue)
