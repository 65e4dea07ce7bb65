"""Seeded random topologies for property and oracle tests."""

from __future__ import annotations

import ipaddress
import random
from collections import deque

from siteflip.simulator.hashing import HashPolicy
from siteflip.simulator.topology import Node, Origin, Route, Site, Topology, ms_to_ns

ANYCAST = ipaddress.ip_network("198.51.100.0/24")
VENDOR_POLICIES = [HashPolicy.L3_SRC_DST, HashPolicy.L3_SRC_DST_PROTO, HashPolicy.FIVE_TUPLE]


def _distances(topo: Topology, sources: list[str]) -> dict[str, int]:
    dist = {s: 0 for s in sources}
    queue = deque(sources)
    while queue:
        node = queue.popleft()
        for nb in topo.neighbours(node):
            if nb not in dist:
                dist[nb] = dist[node] + 1
                queue.append(nb)
    return dist


def _ecmp_routes(topo: Topology, prefix, dest_nodes: list[str]) -> None:
    """Install shortest-hop-count routes with every equal-cost next hop."""
    dist = _distances(topo, dest_nodes)
    for name in topo.nodes:
        if name in dest_nodes:
            continue
        group = tuple(nb for nb in topo.neighbours(name) if dist[nb] == dist[name] - 1)
        topo.routes.setdefault(name, []).append(Route(prefix, group))


def random_topology(seed: int, max_nodes: int = 30, max_sites: int = 4,
                    policies: list[HashPolicy] | None = None) -> Topology:
    rng = random.Random(seed)
    policies = policies or VENDOR_POLICIES + [HashPolicy.PER_DESTINATION]
    n = rng.randint(max(4, max_sites + 1), max_nodes)
    n_as = rng.randint(2, max(2, n // 4))
    topo = Topology(anycast=ANYCAST)
    for i in range(n):
        policy = rng.choice(policies + [None])
        topo.nodes[f"r{i}"] = Node(f"r{i}", 64500 + rng.randrange(n_as),
                                   ipaddress.ip_address(f"172.16.{i // 250}.{i % 250 + 1}"),
                                   policy, rng.randrange(1 << 16) if policy else 0)
    names = list(topo.nodes)
    for i in range(1, n):
        topo.links[frozenset((names[i], names[rng.randrange(i)]))] = ms_to_ns(rng.randint(1, 40))
    for _ in range(rng.randint(0, n)):
        a, b = rng.sample(names, 2)
        topo.links.setdefault(frozenset((a, b)), ms_to_ns(rng.randint(1, 40)))

    n_sites = rng.randint(2, max_sites)
    site_nodes = rng.sample(names, n_sites)
    for j, node in enumerate(site_nodes):
        site_id = f"S{j}"
        topo.sites[site_id] = Site(site_id, node, ipaddress.ip_address(f"192.0.2.{100 + j}"))
        topo.routes.setdefault(node, []).append(Route(ANYCAST, (f"site:{site_id}",)))
    _ecmp_routes(topo, ANYCAST, site_nodes)

    others = [x for x in names if x not in site_nodes]
    for c, node in enumerate(rng.sample(others, rng.randint(1, min(5, len(others))))):
        prefix = ipaddress.ip_network(f"10.{c}.0.0/22")
        topo.origins.append(Origin(node, prefix))
        _ecmp_routes(topo, prefix, [node])
    topo.validate()
    return topo


def topology_targets(topo: Topology, per_origin: int = 4) -> list[ipaddress.IPv4Address]:
    """One probe address in each of the first ``per_origin`` /24s of every origin."""
    out = []
    for origin in topo.origins:
        for i, sub in enumerate(origin.prefix.subnets(new_prefix=max(24, origin.prefix.prefixlen))):
            if i >= per_origin:
                break
            out.append(sub.network_address + 1)
    return out
