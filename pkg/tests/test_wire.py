import ipaddress
import json
import struct
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from siteflip import wire
from siteflip.model import FlowTuple, Protocol

ip = ipaddress.ip_address
GOLDEN = json.loads((Path(__file__).parent / "fixtures" / "golden_packets.json").read_text())


def spec_from(case) -> wire.ProbeSpec:
    flow = FlowTuple(ip(case["src"]), ip(case["dst"]), Protocol.parse(case["protocol"]),
                     case["src_port"], case["dst_port"])
    return wire.ProbeSpec(flow, case["run_id"], case["variation_id"], case["tx_time"],
                          case["ttl"], case["opt_out_url"])


def slow_checksum(data: bytes) -> int:
    """Byte-at-a-time one's-complement sum, written independently of the module."""
    total = 0
    for i in range(0, len(data), 2):
        hi = data[i]
        lo = data[i + 1] if i + 1 < len(data) else 0
        total += (hi << 8) | lo
        total = (total & 0xFFFF) + (total >> 16)
    return (~total) & 0xFFFF


def verifies(packet: bytes) -> bool:
    """True when every checksum in the packet sums to zero."""
    version = packet[0] >> 4
    if version == 4:
        ihl = (packet[0] & 0x0F) * 4
        if slow_checksum(packet[:ihl]) != 0:
            return False
        proto, src, dst, seg = packet[9], packet[12:16], packet[16:20], packet[ihl:]
        pseudo = src + dst + struct.pack("!BBH", 0, proto, len(seg))
        if proto == 1:
            return slow_checksum(seg) == 0
    else:
        proto, src, dst, seg = packet[6], packet[8:24], packet[24:40], packet[40:]
        pseudo = src + dst + struct.pack("!I3xB", len(seg), proto)
    return slow_checksum(pseudo + seg) == 0


@pytest.mark.parametrize("case", GOLDEN, ids=[c["name"] for c in GOLDEN])
def test_golden_packets(case):
    packet = wire.build_probe(spec_from(case))
    assert packet.hex() == case["hex"]
    assert verifies(packet)


def test_checksum_matches_slow_oracle():
    for data in [b"", b"\x01", b"\x45\x00\x00\x1c", bytes(range(255)), b"\xff" * 31]:
        assert wire.internet_checksum(data) == slow_checksum(data)


@given(st.binary(max_size=300))
def test_checksum_property(data):
    assert wire.internet_checksum(data) == slow_checksum(data)


addrs4 = st.integers(1, 2**32 - 2).map(ipaddress.IPv4Address)
addrs6 = st.integers(1, 2**128 - 2).map(ipaddress.IPv6Address)
urls = st.text(alphabet="abcdefghijklmnopqrstuvwxyz:/.-", max_size=40)


@st.composite
def probe_specs(draw, protocols=(Protocol.ICMP, Protocol.TCP, Protocol.UDP)):
    family = draw(st.sampled_from([4, 6]))
    addrs = addrs4 if family == 4 else addrs6
    proto = draw(st.sampled_from(protocols))
    if proto is Protocol.ICMP:
        sport = dport = 0
    else:
        sport = draw(st.integers(1, 65535))
        dport = 53 if proto is Protocol.UDP else draw(st.integers(1, 65535))
    flow = FlowTuple(draw(addrs), draw(addrs), proto, sport, dport)
    return wire.ProbeSpec(flow, draw(st.integers(0, 2**32 - 1)), draw(st.integers(0, 255)),
                          draw(st.integers(0, 2**63)), draw(st.integers(1, 255)), draw(urls))


@settings(max_examples=300)
@given(probe_specs())
def test_every_probe_verifies(spec):
    assert verifies(wire.build_probe(spec))


@settings(max_examples=300)
@given(probe_specs(protocols=(Protocol.ICMP, Protocol.UDP)))
def test_decode_inverts_build(spec):
    assert wire.decode_probe(wire.build_probe(spec)) == spec


def test_decode_refuses_tcp():
    spec = spec_from(next(c for c in GOLDEN if c["protocol"] == "TCP"))
    with pytest.raises(ValueError):
        wire.decode_probe(wire.build_probe(spec))


def test_oversized_probe_rejected():
    flow = FlowTuple(ip("198.51.100.1"), ip("192.0.2.1"), Protocol.ICMP)
    with pytest.raises(ValueError):
        wire.build_probe(wire.ProbeSpec(flow, 1, 0, 0, opt_out_url="x" * 1200))


def test_ipv4_identification_carries_ttl():
    spec = spec_from(GOLDEN[1])
    packet = wire.build_probe(spec)
    assert struct.unpack_from("!H", packet, 4)[0] == spec.ttl
    assert packet[8] == spec.ttl
    assert struct.unpack_from("!H", packet, 6)[0] == 0x4000  # DF


@settings(max_examples=200)
@given(probe_specs())
def test_replies_parse_back(spec):
    probe = wire.build_probe(spec)
    flow = spec.flow
    if flow.protocol is Protocol.ICMP:
        reply = wire.build_echo_reply(probe, 50)
        parsed = wire.parse_reply(reply, flow.family)
        assert parsed.kind is wire.ReplyKind.ECHO_REPLY
        assert parsed.embedded == wire.Embedded(spec.run_id, spec.variation_id, spec.tx_time,
                                                flow.dst, spec.opt_out_url)
    elif flow.protocol is Protocol.TCP:
        reply = wire.build_tcp_rst(probe, 50)
        parsed = wire.parse_reply(reply, flow.family)
        assert parsed.kind is wire.ReplyKind.TCP_RST
        assert parsed.tag == spec.run_id
        assert parsed.flow_echo.reversed() == flow
    else:
        reply = wire.build_dns_response(probe, 50)
        parsed = wire.parse_reply(reply, flow.family)
        assert parsed.kind is wire.ReplyKind.DNS_RESPONSE
        assert (parsed.embedded.run_id, parsed.embedded.variation_id,
                parsed.embedded.tx_time) == (spec.run_id, spec.variation_id, spec.tx_time)
    assert verifies(reply)
    assert parsed.reply_ttl == 50


@settings(max_examples=200)
@given(probe_specs())
def test_time_exceeded_quotes_probe(spec):
    router = ip("203.0.113.9") if spec.flow.family == 4 else ip("2001:db8:ffff::9")
    te = wire.build_time_exceeded(wire.set_ttl(wire.build_probe(spec), 1), router)
    assert verifies(te)
    parsed = wire.parse_reply(te, spec.flow.family)
    assert parsed.kind is wire.ReplyKind.TIME_EXCEEDED
    assert parsed.flow_echo == spec.flow
    assert parsed.hop_addr == router
    if spec.flow.family == 4:
        assert parsed.tag == spec.ttl
    else:
        assert parsed.tag == spec.tx_time & 0xFFFF


def test_unreachable_is_discarded():
    spec = spec_from(GOLDEN[0])
    msg = wire.build_unreachable(wire.build_probe(spec), ip("203.0.113.1"))
    assert wire.parse_reply(msg, 4).kind is wire.ReplyKind.DISCARDED


@given(st.binary(max_size=200))
def test_parse_reply_never_raises(data):
    for family in (4, 6):
        wire.parse_reply(data, family)


@settings(max_examples=100)
@given(probe_specs(), st.integers(1, 255))
def test_set_ttl_keeps_checksums_valid(spec, ttl):
    packet = wire.set_ttl(wire.build_probe(spec), ttl)
    assert verifies(packet)
    assert wire.packet_flow(packet) == (spec.flow, ttl)


def test_scapy_agrees_when_available():
    scapy = pytest.importorskip("scapy.all")
    for case in GOLDEN:
        packet = wire.build_probe(spec_from(case))
        layer = scapy.IP if case["src"].count(".") == 3 else scapy.IPv6
        parsed = layer(packet)
        rebuilt = layer(bytes(parsed))
        assert bytes(rebuilt) == packet
