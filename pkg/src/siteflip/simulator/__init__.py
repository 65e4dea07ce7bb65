"""Deterministic network simulator used as ground truth for the measurement pipeline."""

from siteflip.simulator.engine import Perturbation, SimTap, Simulator
from siteflip.simulator.generate import random_topology, topology_targets
from siteflip.simulator.hashing import HashPolicy, hash_next_hop
from siteflip.simulator.topology import Topology, TopologyError, load_topology, parse_topology

__all__ = [
    "Perturbation", "SimTap", "Simulator", "random_topology", "topology_targets",
    "HashPolicy", "hash_next_hop", "Topology", "TopologyError", "load_topology",
    "parse_topology", "oracle_flip_set",
]


def oracle_flip_set(topology, mdef, targets):
    from siteflip.simulator.oracle import oracle_flip_set as _oracle

    return _oracle(topology, mdef, targets)
