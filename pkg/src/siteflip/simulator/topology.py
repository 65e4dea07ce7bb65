"""Topology model and its line-oriented text format.

One declaration per line, keyword first, ``#`` starts a comment::

    anycast 198.51.100.0/24
    node    <name> <asn> <addr> [policy=<HashPolicy>] [seed=<int>]
    policy  <node> <HashPolicy> [seed]
    link    <a> <b> <delay_ms>
    site    <SiteId> <node> <fake-host-addr>
    origin  <node> <prefix> [silent]
    route   <node> <prefix> <next-hop> [<next-hop> ...]
    flip    <node> <prefix> <alt-next-hop> [probability]
    load    <node> <threshold>
    drop    <node> time-exceeded
    asname  <asn> <name...>

A next hop is a neighbour node name, or ``site:<SiteId>`` for a site
attached to the node. Sites sit behind a fake host whose address shows
up as the last hop before the site.
"""

from __future__ import annotations

import ipaddress
import shlex
from dataclasses import dataclass, field
from pathlib import Path

from siteflip.model import Address, Prefix, SiteId
from siteflip.simulator.hashing import HashPolicy


class TopologyError(ValueError):
    pass


@dataclass
class Node:
    name: str
    asn: int
    addr: Address
    policy: HashPolicy | None = None
    seed: int = 0


@dataclass(frozen=True)
class Site:
    site_id: SiteId
    node: str
    fake_addr: Address


@dataclass(frozen=True)
class Origin:
    node: str
    prefix: Prefix
    silent: bool = False


@dataclass(frozen=True)
class Route:
    prefix: Prefix
    next_hops: tuple[str, ...]


@dataclass(frozen=True)
class Flip:
    alt: str
    probability: float = 0.0


def site_hop(token: str) -> SiteId | None:
    return token[5:] if token.startswith("site:") else None


def ms_to_ns(ms: float) -> int:
    return round(ms * 1_000_000)


@dataclass
class Topology:
    anycast: Prefix | None = None
    nodes: dict[str, Node] = field(default_factory=dict)
    links: dict[frozenset, int] = field(default_factory=dict)
    sites: dict[SiteId, Site] = field(default_factory=dict)
    origins: list[Origin] = field(default_factory=list)
    routes: dict[str, list[Route]] = field(default_factory=dict)
    flips: dict[tuple[str, Prefix], Flip] = field(default_factory=dict)
    load_thresholds: dict[str, float] = field(default_factory=dict)
    te_silent: set[str] = field(default_factory=set)
    as_names: dict[int, str] = field(default_factory=dict)

    # -- queries --

    def delay_ns(self, a: str, b: str) -> int:
        try:
            return self.links[frozenset((a, b))]
        except KeyError:
            raise TopologyError(f"no link between {a} and {b}") from None

    def neighbours(self, name: str) -> list[str]:
        out = []
        for pair in self.links:
            if name in pair:
                (other,) = pair - {name} or {name}
                out.append(other)
        return sorted(out)

    def lookup(self, node: str, addr: Address) -> Route | None:
        best = None
        for route in self.routes.get(node, ()):
            if route.prefix.version == addr.version and addr in route.prefix:
                if best is None or route.prefix.prefixlen > best.prefix.prefixlen:
                    best = route
        return best

    def origin_of(self, addr: Address) -> Origin | None:
        best = None
        for origin in self.origins:
            if origin.prefix.version == addr.version and addr in origin.prefix:
                if best is None or origin.prefix.prefixlen > best.prefix.prefixlen:
                    best = origin
        return best

    def node_by_addr(self, addr: Address) -> Node | None:
        for node in self.nodes.values():
            if node.addr == addr:
                return node
        return None

    def site_by_fake(self, addr: Address) -> Site | None:
        for site in self.sites.values():
            if site.fake_addr == addr:
                return site
        return None

    def anycast_source(self) -> Address:
        if self.anycast is None:
            raise TopologyError("topology declares no anycast prefix")
        return self.anycast.network_address + 1

    # -- validation --

    def validate(self) -> None:
        if self.anycast is None:
            raise TopologyError("missing 'anycast' declaration")
        if not self.sites:
            raise TopologyError("topology has no sites")
        for pair, delay in self.links.items():
            if delay <= 0:
                raise TopologyError(f"link {sorted(pair)} needs a positive delay")
        for node, routes in self.routes.items():
            for route in routes:
                if not route.next_hops:
                    raise TopologyError(f"empty next-hop group at {node} for {route.prefix}")
                for hop in route.next_hops:
                    self._check_hop(node, hop)
        for (node, _), flip in self.flips.items():
            self._check_hop(node, flip.alt)
            if not 0.0 <= flip.probability <= 1.0:
                raise TopologyError("flip probability must be within [0, 1]")
        for origin in self.origins:
            if self._reaches_site(origin.node) is False:
                raise TopologyError(f"client node {origin.node} reaches no anycast site")

    def _check_hop(self, node: str, hop: str) -> None:
        site = site_hop(hop)
        if site is not None:
            if site not in self.sites or self.sites[site].node != node:
                raise TopologyError(f"site {site} is not attached to {node}")
        elif frozenset((node, hop)) not in self.links:
            raise TopologyError(f"route at {node} uses {hop}, which is not a neighbour")

    def _reaches_site(self, start: str) -> bool:
        target = self.anycast_source()
        seen, stack = set(), [start]
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            route = self.lookup(node, target)
            if route is None:
                continue
            hops = list(route.next_hops)
            flip = self.flips.get((node, route.prefix))
            if flip is not None:
                hops.append(flip.alt)
            for hop in hops:
                if site_hop(hop) is not None:
                    return True
                stack.append(hop)
        return False

    # -- serialisation --

    def to_text(self) -> str:
        lines = [f"anycast {self.anycast}"]
        for asn, name in sorted(self.as_names.items()):
            lines.append(f"asname {asn} {name}")
        for node in self.nodes.values():
            extra = ""
            if node.policy is not None:
                extra = f" policy={node.policy.value} seed={node.seed}"
            lines.append(f"node {node.name} {node.asn} {node.addr}{extra}")
        for pair, delay in self.links.items():
            a, b = sorted(pair)
            lines.append(f"link {a} {b} {delay / 1_000_000:g}")
        for site in self.sites.values():
            lines.append(f"site {site.site_id} {site.node} {site.fake_addr}")
        for origin in self.origins:
            lines.append(f"origin {origin.node} {origin.prefix}" + (" silent" if origin.silent else ""))
        for node, routes in self.routes.items():
            for route in routes:
                lines.append(f"route {node} {route.prefix} {' '.join(route.next_hops)}")
        for (node, prefix), flip in self.flips.items():
            lines.append(f"flip {node} {prefix} {flip.alt} {flip.probability:g}")
        for node, threshold in self.load_thresholds.items():
            lines.append(f"load {node} {threshold:g}")
        for node in sorted(self.te_silent):
            lines.append(f"drop {node} time-exceeded")
        return "\n".join(lines) + "\n"


def _node_options(tokens: list[str], node: Node, lineno: int) -> None:
    for token in tokens:
        key, _, value = token.partition("=")
        if key == "policy":
            node.policy = HashPolicy.parse(value)
        elif key == "seed":
            node.seed = int(value)
        else:
            raise TopologyError(f"line {lineno}: unknown node option {token!r}")


def parse_topology(text: str) -> Topology:
    topo = Topology()
    for lineno, raw in enumerate(text.splitlines(), 1):
        tokens = shlex.split(raw, comments=True)
        if not tokens:
            continue
        keyword, args = tokens[0], tokens[1:]
        try:
            _apply(topo, keyword, args, lineno)
        except (ValueError, IndexError) as exc:
            if isinstance(exc, TopologyError):
                raise
            raise TopologyError(f"line {lineno}: {raw.strip()!r}: {exc}") from None
    topo.validate()
    return topo


def _apply(topo: Topology, keyword: str, args: list[str], lineno: int) -> None:
    if keyword == "anycast":
        topo.anycast = ipaddress.ip_network(args[0])
    elif keyword == "node":
        name, asn, addr = args[:3]
        if name in topo.nodes:
            raise TopologyError(f"line {lineno}: duplicate node {name}")
        node = Node(name, int(asn), ipaddress.ip_address(addr))
        _node_options(args[3:], node, lineno)
        topo.nodes[name] = node
    elif keyword == "policy":
        node = _known(topo, args[0], lineno)
        node.policy = HashPolicy.parse(args[1])
        if len(args) > 2:
            node.seed = int(args[2])
    elif keyword == "link":
        a, b = _known(topo, args[0], lineno).name, _known(topo, args[1], lineno).name
        topo.links[frozenset((a, b))] = ms_to_ns(float(args[2]))
    elif keyword == "site":
        _known(topo, args[1], lineno)
        topo.sites[args[0]] = Site(args[0], args[1], ipaddress.ip_address(args[2]))
    elif keyword == "origin":
        _known(topo, args[0], lineno)
        silent = len(args) > 2 and args[2] == "silent"
        topo.origins.append(Origin(args[0], ipaddress.ip_network(args[1]), silent))
    elif keyword == "route":
        _known(topo, args[0], lineno)
        if len(args) < 3:
            raise TopologyError(f"line {lineno}: route needs at least one next hop")
        topo.routes.setdefault(args[0], []).append(
            Route(ipaddress.ip_network(args[1]), tuple(args[2:])))
    elif keyword == "flip":
        _known(topo, args[0], lineno)
        prob = float(args[3]) if len(args) > 3 else 0.0
        topo.flips[(args[0], ipaddress.ip_network(args[1]))] = Flip(args[2], prob)
    elif keyword == "load":
        _known(topo, args[0], lineno)
        topo.load_thresholds[args[0]] = float(args[1])
    elif keyword == "drop":
        _known(topo, args[0], lineno)
        if args[1] != "time-exceeded":
            raise TopologyError(f"line {lineno}: unknown drop rule {args[1]!r}")
        topo.te_silent.add(args[0])
    elif keyword == "asname":
        topo.as_names[int(args[0])] = " ".join(args[1:])
    else:
        raise TopologyError(f"line {lineno}: unknown keyword {keyword!r}")


def _known(topo: Topology, name: str, lineno: int) -> Node:
    try:
        return topo.nodes[name]
    except KeyError:
        raise TopologyError(f"line {lineno}: unknown node {name!r}") from None


SCENARIO_DIR = Path(__file__).with_name("scenarios")


def load_topology(path: str | Path) -> Topology:
    """Load a topology file; bare scenario names resolve to bundled fixtures."""
    path = Path(path)
    if not path.exists():
        for name in (path.name, f"{path.name}.topo"):
            if (SCENARIO_DIR / name).exists():
                path = SCENARIO_DIR / name
                break
    return parse_topology(path.read_text())
