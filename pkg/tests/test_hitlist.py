import ipaddress
import random

import pytest
from hypothesis import given, settings, strategies as st

from helpers import ip, net
from siteflip.hitlist import (
    UNMAPPED_AS,
    AsMap,
    load_as_map,
    load_categories,
    load_exclusions,
    load_targets,
    targets_from,
)


def test_one_target_per_prefix_first_wins(tmp_path):
    path = tmp_path / "hits.txt"
    path.write_text("# comment\n10.0.0.5\n10.0.0.9\n2001:db8::1\nbogus\n10.0.1.7  extra\n")
    ts = load_targets(path)
    assert ts.addresses() == [ip("10.0.0.5"), ip("10.0.1.7")]
    assert ts.skipped == 2
    assert list(ts.entries) == [net("10.0.0.0/24"), net("10.0.1.0/24")]


def test_ipv6_hitlist_uses_48s(tmp_path):
    path = tmp_path / "hits6.txt"
    path.write_text("2001:db8:1::1\n2001:db8:1:ff::2\n2001:db8:2::1\n10.0.0.1\n")
    ts = load_targets(path, family=6)
    assert len(ts) == 2 and ts.skipped == 1
    assert net("2001:db8:1::/48") in ts.entries


def test_empty_or_missing_hitlist_fails(tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("# nothing\n")
    with pytest.raises(ValueError):
        load_targets(path)
    with pytest.raises(OSError):
        load_targets(tmp_path / "missing.txt")


def test_large_hitlist_matches_set_oracle(tmp_path):
    rng = random.Random(5)
    addrs = [ipaddress.IPv4Address(rng.getrandbits(32) & 0xFFFF0FFF) for _ in range(50_000)]
    path = tmp_path / "big.txt"
    path.write_text("\n".join(map(str, addrs)) + "\n")
    ts = load_targets(path)
    expected = {}
    for a in addrs:
        expected.setdefault(int(a) >> 8, a)
    assert len(ts) == len(expected)
    assert {int(p.network_address) >> 8: a for p, a in ts.entries.items()} == expected


def test_targets_from_respects_granularity():
    ts = targets_from([ip("10.0.0.1"), ip("10.0.3.1"), ip("10.1.0.1")], granularity=16)
    assert len(ts) == 2


def linear_lookup(table, addr):
    best = None
    for prefix, asn in table:
        if addr.version == prefix.version and addr in prefix:
            if best is None or prefix.prefixlen > best[0].prefixlen:
                best = (prefix, asn)
    return best[1] if best else UNMAPPED_AS


def random_table(rng, n):
    seen, table = set(), []
    while len(table) < n:
        length = rng.choice([8, 12, 16, 20, 22, 24])
        prefix = ipaddress.ip_network((rng.getrandbits(32), length), strict=False)
        if prefix not in seen:
            seen.add(prefix)
            table.append((prefix, rng.randint(1, 65000)))
    return table


def test_longest_prefix_match_agrees_with_linear_scan():
    rng = random.Random(11)
    table = random_table(rng, 400)
    as_map = AsMap()
    for prefix, asn in table:
        as_map.add(prefix, asn)
    probes = [ipaddress.IPv4Address(rng.getrandbits(32)) for _ in range(8_000)]
    # addresses inside known prefixes exercise the nested cases
    probes += [p.network_address + rng.randrange(p.num_addresses) for p, _ in table for _ in range(5)]
    assert all(as_map.lookup(a) == linear_lookup(table, a) for a in probes)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32))
def test_lookup_does_not_depend_on_insertion_order(seed):
    rnd = random.Random(seed)
    table = random_table(rnd, 40)
    a, b = AsMap(), AsMap()
    for prefix, asn in table:
        a.add(prefix, asn)
    shuffled = table[:]
    rnd.shuffle(shuffled)
    for prefix, asn in shuffled:
        b.add(prefix, asn)
    for prefix, _ in table:
        for addr in (prefix.network_address, prefix.broadcast_address):
            assert a.lookup(addr) == b.lookup(addr)


def test_as_map_file(tmp_path):
    path = tmp_path / "as.csv"
    path.write_text("prefix,asn,name\n10.0.0.0/8,64500,Big Net, Inc\n10.1.0.0/16,64501,Small\n"
                    "2001:db8::/32,64502,Six\n10.1.0.0/16,64999,Later\n")
    as_map = load_as_map(path)
    assert as_map.lookup(ip("10.1.2.3")) == 64501
    assert as_map.lookup(ip("10.2.2.3")) == 64500
    assert as_map.lookup(ip("2001:db8::1")) == 64502
    assert as_map.lookup(ip("192.0.2.1")) == UNMAPPED_AS
    assert as_map.name(64500) == "Big Net, Inc"
    path.write_text("10.0.0.0/8,64500\nnope,1\n")
    with pytest.raises(ValueError, match=":2:"):
        load_as_map(path)


def test_exclusions_and_categories(tmp_path):
    ex = tmp_path / "anycast.txt"
    ex.write_text("192.0.2.0/24\n# c\n2001:db8::/32\n")
    assert load_exclusions(ex) == {net("192.0.2.0/24"), net("2001:db8::/32")}
    ex.write_text("junk\n")
    with pytest.raises(ValueError):
        load_exclusions(ex)
    cats = tmp_path / "cats.csv"
    cats.write_text("prefix,category\n10.0.0.0/24,Residential\n10.0.1.0/24,other\n")
    assert load_categories(cats) == {net("10.0.0.0/24"): "residential", net("10.0.1.0/24"): "other"}
    cats.write_text("10.0.0.0/24,business\n")
    with pytest.raises(ValueError, match="unknown category"):
        load_categories(cats)
