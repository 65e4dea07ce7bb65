"""Bit-exact probe construction and reply parsing.

Probe layouts (all integers big-endian):

* IPv4 header: no options, DF set, identification = initial TTL of the
  probe. Routers quote the IP header in Time Exceeded messages, so the
  identification field is how a traceroute reply is matched to its TTL.
* ICMP echo: identifier = run_id & 0xFFFF, sequence = variation_id,
  payload = tx_time(8) | target address(4/16) | run_id(4) |
  variation_id(1) | opt-out URL.
* TCP: SYN|ACK, no options, seq = tx_time & 0xFFFFFFFF, ack = run_id,
  window 65535, payload = opt-out URL. The RST a host returns carries
  our ack number as its sequence number.
* UDP: DNS A query, id = tx_time & 0xFFFF, RD set, QNAME
  ``<variation_id>-<run_id>-<tx_time>.<domain>``, followed by the
  opt-out URL as trailing bytes.
"""

from __future__ import annotations

import enum
import ipaddress
import re
import struct
from dataclasses import dataclass

from siteflip.model import Address, FlowTuple, Protocol

MAX_PACKET = 1200
DEFAULT_DOMAIN = "lb-probe.example.net"
DEFAULT_TTL = 64

IPV4 = struct.Struct("!BBHHHBBH4s4s")
IPV6 = struct.Struct("!IHBB16s16s")
ICMP_ECHO = struct.Struct("!BBHHH")
TCP = struct.Struct("!HHIIBBHHH")
UDP = struct.Struct("!HHHH")
DNS = struct.Struct("!HHHHHH")

ICMPV6_NH = 58
TCP_SYN, TCP_RST, TCP_ACK = 0x02, 0x04, 0x10

ECHO_REQUEST = {4: 8, 6: 128}
ECHO_REPLY = {4: 0, 6: 129}
TIME_EXCEEDED = {4: 11, 6: 3}
UNREACHABLE = {4: 3, 6: 1}

_QNAME_LABEL = re.compile(r"^(\d{1,3})-(\d{1,10})-(\d{1,20})$")


def internet_checksum(data: bytes) -> int:
    """One's-complement sum of 16-bit words, complemented."""
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


@dataclass(frozen=True)
class ProbeSpec:
    flow: FlowTuple
    run_id: int
    variation_id: int
    tx_time: int
    ttl: int = DEFAULT_TTL
    opt_out_url: str = ""

    def __post_init__(self) -> None:
        if not 0 <= self.run_id <= 0xFFFFFFFF:
            raise ValueError("run_id must fit in 32 bits")
        if not 0 <= self.variation_id <= 0xFF:
            raise ValueError("variation_id must fit in 8 bits")
        if not 0 <= self.tx_time < 1 << 64:
            raise ValueError("tx_time must fit in 64 bits")
        if not 1 <= self.ttl <= 255:
            raise ValueError("ttl must be in 1..255")
        if not self.opt_out_url.isascii():
            raise ValueError("opt-out URL must be ASCII")


class ReplyKind(enum.Enum):
    ECHO_REPLY = "EchoReply"
    TCP_RST = "TcpRst"
    DNS_RESPONSE = "DnsResponse"
    TIME_EXCEEDED = "TimeExceeded"
    DISCARDED = "Discarded"


@dataclass(frozen=True)
class Embedded:
    """Probe metadata recovered from a reply or a quoted probe."""

    run_id: int
    variation_id: int
    tx_time: int
    target: Address | None = None
    opt_out_url: str = ""


@dataclass(frozen=True)
class ParsedReply:
    kind: ReplyKind
    flow_echo: FlowTuple
    reply_ttl: int
    embedded: Embedded | None = None
    hop_addr: Address | None = None
    # TimeExceeded: IPv4 identification of the quoted probe, or the low
    # 16 bits of its tx_time for IPv6. TcpRst: the RST sequence number.
    tag: int | None = None


# -- IP layer ---------------------------------------------------------------


def _pseudo_header(src: Address, dst: Address, proto: int, length: int) -> bytes:
    if src.version == 4:
        return src.packed + dst.packed + struct.pack("!BBH", 0, proto, length)
    return src.packed + dst.packed + struct.pack("!I3xB", length, proto)


def _ip_wrap(src: Address, dst: Address, proto: int, ttl: int, payload: bytes,
             ident: int = 0) -> bytes:
    if src.version == 4:
        header = IPV4.pack(0x45, 0, IPV4.size + len(payload), ident, 0x4000,
                           ttl, proto, 0, src.packed, dst.packed)
        csum = internet_checksum(header)
        return header[:10] + struct.pack("!H", csum) + header[12:] + payload
    nh = ICMPV6_NH if proto == Protocol.ICMP else proto
    return IPV6.pack(6 << 28, len(payload), nh, ttl, src.packed, dst.packed) + payload


def _with_checksum(segment: bytes, offset: int, pseudo: bytes = b"") -> bytes:
    csum = internet_checksum(pseudo + segment)
    return segment[:offset] + struct.pack("!H", csum) + segment[offset + 2:]


def _icmp(src: Address, dst: Address, body: bytes) -> bytes:
    # ICMPv6 checksums cover a pseudo-header, ICMPv4 ones do not
    pseudo = b"" if src.version == 4 else _pseudo_header(src, dst, ICMPV6_NH, len(body))
    return _with_checksum(body, 2, pseudo)


def set_ttl(packet: bytes, ttl: int) -> bytes:
    """Rewrite the TTL / hop limit, fixing the IPv4 header checksum."""
    if packet[0] >> 4 == 4:
        ihl = (packet[0] & 0x0F) * 4
        header = bytearray(packet[:ihl])
        header[8] = ttl
        header[10:12] = b"\x00\x00"
        header[10:12] = struct.pack("!H", internet_checksum(bytes(header)))
        return bytes(header) + packet[ihl:]
    return packet[:7] + bytes([ttl]) + packet[8:]


# -- probes -----------------------------------------------------------------


def _dns_question(qname: str) -> bytes:
    out = bytearray()
    for label in qname.rstrip(".").split("."):
        raw = label.encode("ascii")
        if not 0 < len(raw) < 64:
            raise ValueError(f"bad DNS label {label!r}")
        out.append(len(raw))
        out += raw
    return bytes(out) + b"\x00" + struct.pack("!HH", 1, 1)


def probe_qname(variation_id: int, run_id: int, tx_time: int, domain: str) -> str:
    return f"{variation_id}-{run_id}-{tx_time}.{domain}"


def build_probe(spec: ProbeSpec, domain: str = DEFAULT_DOMAIN) -> bytes:
    flow = spec.flow
    url = spec.opt_out_url.encode("ascii")
    if flow.protocol is Protocol.ICMP:
        if flow.src_port or flow.dst_port:
            raise ValueError("ICMP probes carry no ports")
        payload = (struct.pack("!Q", spec.tx_time) + flow.dst.packed
                   + struct.pack("!IB", spec.run_id, spec.variation_id) + url)
        body = ICMP_ECHO.pack(ECHO_REQUEST[flow.family], 0, 0,
                              spec.run_id & 0xFFFF, spec.variation_id) + payload
        segment = _icmp(flow.src, flow.dst, body)
    elif flow.protocol is Protocol.TCP:
        header = TCP.pack(flow.src_port, flow.dst_port, spec.tx_time & 0xFFFFFFFF,
                          spec.run_id, 5 << 4, TCP_SYN | TCP_ACK, 0xFFFF, 0, 0)
        segment = header + url
        pseudo = _pseudo_header(flow.src, flow.dst, Protocol.TCP, len(segment))
        segment = _with_checksum(segment, 16, pseudo)
    else:
        dns = (DNS.pack(spec.tx_time & 0xFFFF, 0x0100, 1, 0, 0, 0)
               + _dns_question(probe_qname(spec.variation_id, spec.run_id,
                                           spec.tx_time, domain)) + url)
        segment = UDP.pack(flow.src_port, flow.dst_port, UDP.size + len(dns), 0) + dns
        pseudo = _pseudo_header(flow.src, flow.dst, Protocol.UDP, len(segment))
        segment = _with_checksum(segment, 6, pseudo)
        if segment[6:8] == b"\x00\x00":
            segment = segment[:6] + b"\xff\xff" + segment[8:]
    packet = _ip_wrap(flow.src, flow.dst, flow.protocol, spec.ttl, segment, ident=spec.ttl)
    if len(packet) > MAX_PACKET:
        raise ValueError(f"probe is {len(packet)} bytes, over the {MAX_PACKET}-byte budget")
    return packet


# -- header access ----------------------------------------------------------


@dataclass(frozen=True)
class _IpView:
    version: int
    src: Address
    dst: Address
    proto: int
    ttl: int
    ident: int
    header_len: int
    payload: bytes


def _ip_view(data: bytes) -> _IpView:
    version = data[0] >> 4
    if version == 4:
        ver_ihl, _, total, ident, _, ttl, proto, _, src, dst = IPV4.unpack_from(data)
        ihl = (ver_ihl & 0x0F) * 4
        if ihl < IPV4.size:
            raise ValueError("bad IHL")
        end = min(total, len(data)) if total else len(data)
        return _IpView(4, ipaddress.IPv4Address(src), ipaddress.IPv4Address(dst),
                       proto, ttl, ident, ihl, data[ihl:end])
    if version == 6:
        _, plen, nh, hlim, src, dst = IPV6.unpack_from(data)
        proto = Protocol.ICMP if nh == ICMPV6_NH else nh
        return _IpView(6, ipaddress.IPv6Address(src), ipaddress.IPv6Address(dst),
                       proto, hlim, 0, IPV6.size, data[IPV6.size:IPV6.size + plen])
    raise ValueError(f"not an IP packet (version {version})")


def _flow_from(ip: _IpView) -> FlowTuple:
    proto = Protocol(ip.proto)
    if proto is Protocol.ICMP:
        return FlowTuple(ip.src, ip.dst, proto)
    sport, dport = struct.unpack_from("!HH", ip.payload)
    return FlowTuple(ip.src, ip.dst, proto, sport, dport)


def packet_flow(data: bytes) -> tuple[FlowTuple, int]:
    """Return the flow tuple and TTL of a raw IP packet."""
    ip = _ip_view(data)
    return _flow_from(ip), ip.ttl


def _decode_icmp_payload(payload: bytes, family: int) -> Embedded:
    alen = 4 if family == 4 else 16
    (tx_time,) = struct.unpack_from("!Q", payload)
    target = ipaddress.ip_address(payload[8:8 + alen])
    run_id, variation_id = struct.unpack_from("!IB", payload, 8 + alen)
    url = payload[13 + alen:].decode("ascii")
    return Embedded(run_id, variation_id, tx_time, target, url)


def _read_qname(dns: bytes) -> tuple[str, int]:
    labels, pos = [], DNS.size
    while True:
        n = dns[pos]
        if n == 0:
            return ".".join(labels), pos + 1
        if n & 0xC0:
            raise ValueError("compressed QNAME")
        labels.append(dns[pos + 1:pos + 1 + n].decode("ascii"))
        pos += 1 + n


def _decode_dns(dns: bytes) -> tuple[Embedded, int, int]:
    """Return metadata, header flags and the offset past the question."""
    _, flags, qdcount, _, _, _ = DNS.unpack_from(dns)
    if qdcount < 1:
        raise ValueError("no question")
    qname, pos = _read_qname(dns)
    match = _QNAME_LABEL.match(qname.split(".", 1)[0])
    if match is None:
        raise ValueError("QNAME does not follow the probe grammar")
    var, run, tx = (int(g) for g in match.groups())
    return Embedded(run, var, tx), flags, pos + 4


def decode_probe(data: bytes) -> ProbeSpec:
    """Invert :func:`build_probe` for ICMP and UDP probes."""
    ip = _ip_view(data)
    flow = _flow_from(ip)
    if flow.protocol is Protocol.ICMP:
        meta = _decode_icmp_payload(ip.payload[ICMP_ECHO.size:], ip.version)
        url = meta.opt_out_url
    elif flow.protocol is Protocol.UDP:
        meta, _, end = _decode_dns(ip.payload[UDP.size:])
        url = ip.payload[UDP.size + end:].decode("ascii")
    else:
        raise ValueError("TCP probes are resolved through the correlation table")
    return ProbeSpec(flow, meta.run_id, meta.variation_id, meta.tx_time, ip.ttl, url)


# -- replies (what targets and routers send back) ---------------------------


def build_echo_reply(probe: bytes, ttl: int = 64) -> bytes:
    ip = _ip_view(probe)
    body = bytes([ECHO_REPLY[ip.version], 0, 0, 0]) + ip.payload[4:]
    return _ip_wrap(ip.dst, ip.src, Protocol.ICMP, ttl, _icmp(ip.dst, ip.src, body))


def build_tcp_rst(probe: bytes, ttl: int = 64) -> bytes:
    ip = _ip_view(probe)
    sport, dport, _, ack = struct.unpack_from("!HHII", ip.payload)
    segment = TCP.pack(dport, sport, ack, 0, 5 << 4, TCP_RST, 0, 0, 0)
    segment = _with_checksum(segment, 16, _pseudo_header(ip.dst, ip.src, Protocol.TCP, len(segment)))
    return _ip_wrap(ip.dst, ip.src, Protocol.TCP, ttl, segment)


def build_dns_response(probe: bytes, ttl: int = 64) -> bytes:
    ip = _ip_view(probe)
    sport, dport = struct.unpack_from("!HH", ip.payload)
    query = ip.payload[UDP.size:]
    _, _, end = _decode_dns(query)
    dns = DNS.pack(struct.unpack_from("!H", query)[0], 0x8180, 1, 0, 0, 0) + query[DNS.size:end]
    segment = UDP.pack(dport, sport, UDP.size + len(dns), 0) + dns
    segment = _with_checksum(segment, 6, _pseudo_header(ip.dst, ip.src, Protocol.UDP, len(segment)))
    return _ip_wrap(ip.dst, ip.src, Protocol.UDP, ttl, segment)


def _icmp_error(icmp_type: int, code: int, probe: bytes, router: Address, ttl: int) -> bytes:
    ip = _ip_view(probe)
    if ip.version == 4:
        quote = probe[:ip.header_len + 8]
    else:
        quote = probe[:1280 - IPV6.size - 8]
    body = bytes([icmp_type, code, 0, 0, 0, 0, 0, 0]) + quote
    return _ip_wrap(router, ip.src, Protocol.ICMP, ttl, _icmp(router, ip.src, body))


def build_time_exceeded(probe: bytes, router: Address, ttl: int = 255) -> bytes:
    """Time Exceeded quoting the probe as received (IPv4: header + 8 bytes)."""
    return _icmp_error(TIME_EXCEEDED[router.version], 0, probe, router, ttl)


def build_unreachable(probe: bytes, router: Address, ttl: int = 255, code: int = 1) -> bytes:
    return _icmp_error(UNREACHABLE[router.version], code, probe, router, ttl)


# -- parsing ----------------------------------------------------------------


def _parse_quote(quote: bytes, family: int) -> tuple[FlowTuple, Embedded | None, int | None]:
    inner = _ip_view(quote)
    if inner.version != family:
        raise ValueError("family mismatch in quote")
    flow = _flow_from(inner)
    embedded = None
    try:
        if flow.protocol is Protocol.ICMP:
            embedded = _decode_icmp_payload(inner.payload[ICMP_ECHO.size:], family)
        elif flow.protocol is Protocol.UDP:
            embedded = _decode_dns(inner.payload[UDP.size:])[0]
    except (struct.error, IndexError, ValueError, UnicodeDecodeError):
        embedded = None
    if family == 4:
        tag = inner.ident
    elif embedded is not None:
        tag = embedded.tx_time & 0xFFFF
    elif flow.protocol is Protocol.TCP and len(inner.payload) >= 8:
        tag = struct.unpack_from("!I", inner.payload, 4)[0] & 0xFFFF
    else:
        tag = None
    return flow, embedded, tag


def parse_reply(data: bytes, family: int) -> ParsedReply | None:
    """Classify a captured packet; ``None`` for anything unrelated or broken."""
    try:
        return _parse_reply(data, family)
    except (struct.error, IndexError, ValueError, UnicodeDecodeError):
        return None


def _parse_reply(data: bytes, family: int) -> ParsedReply | None:
    ip = _ip_view(data)
    if ip.version != family:
        return None
    if ip.proto == Protocol.ICMP:
        icmp_type = ip.payload[0]
        flow = FlowTuple(ip.src, ip.dst, Protocol.ICMP)
        if icmp_type == ECHO_REPLY[family]:
            meta = _decode_icmp_payload(ip.payload[ICMP_ECHO.size:], family)
            return ParsedReply(ReplyKind.ECHO_REPLY, flow, ip.ttl, meta)
        if icmp_type == TIME_EXCEEDED[family]:
            inner, meta, tag = _parse_quote(ip.payload[8:], family)
            return ParsedReply(ReplyKind.TIME_EXCEEDED, inner, ip.ttl, meta, ip.src, tag)
        if icmp_type == UNREACHABLE[family]:
            return ParsedReply(ReplyKind.DISCARDED, flow, ip.ttl)
        return None
    if ip.proto == Protocol.TCP:
        flow = _flow_from(ip)
        seq, _, _, flags = struct.unpack_from("!IIBB", ip.payload, 4)
        if flags & TCP_RST:
            return ParsedReply(ReplyKind.TCP_RST, flow, ip.ttl, tag=seq)
        return None
    if ip.proto == Protocol.UDP:
        flow = _flow_from(ip)
        meta, flags, _ = _decode_dns(ip.payload[UDP.size:])
        if not flags & 0x8000:
            return None
        return ParsedReply(ReplyKind.DNS_RESPONSE, flow, ip.ttl, meta)
    return None
