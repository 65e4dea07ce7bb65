"""Regenerate golden_packets.json with scapy as an independent packet builder.

Run by hand only; the test suite reads the frozen JSON.
"""

import ipaddress
import json
from pathlib import Path

from scapy.all import DNS, DNSQR, ICMP, IP, TCP, UDP, IPv6, ICMPv6EchoRequest, Raw, raw

DOMAIN = "lb-probe.example.net"

CASES = [
    # name, family, proto, src, dst, sport, dport, run, var, tx, ttl, url
    ("icmp4_basic", 4, "ICMP", "198.51.100.1", "192.0.2.9", 0, 0, 7, 0, 1_700_000_000_000_000_000, 64, ""),
    ("icmp4_url", 4, "ICMP", "198.51.100.5", "203.0.113.77", 0, 0, 0x12345678, 4, 42, 9,
     "https://example.org/opt-out"),
    ("tcp4_basic", 4, "TCP", "198.51.100.1", "192.0.2.9", 62000, 80, 7, 0, 1_700_000_000_123_456_789, 64, ""),
    ("tcp4_url", 4, "TCP", "198.51.100.3", "192.0.2.200", 62002, 63002, 99, 2, 5, 3,
     "https://example.org/opt-out"),
    ("udp4_basic", 4, "UDP", "198.51.100.1", "192.0.2.9", 62000, 53, 7, 0, 1_700_000_000_000_000_000, 64, ""),
    ("udp4_url", 4, "UDP", "198.51.100.2", "192.0.2.53", 62004, 53, 31337, 1, 987654321, 17,
     "https://example.org/opt-out"),
    ("icmp6_basic", 6, "ICMP", "2001:db8:ac::1", "2001:db8:1::9", 0, 0, 7, 3, 1_700_000_000_000_000_000, 64, ""),
    ("tcp6_basic", 6, "TCP", "2001:db8:ac::2", "2001:db8:1::9", 62001, 443, 8, 1, 123456789012, 30, ""),
    ("udp6_url", 6, "UDP", "2001:db8:ac::4", "2001:db8:1::35", 62003, 53, 11, 3, 77, 64,
     "https://example.org/opt-out"),
]


def scapy_packet(family, proto, src, dst, sport, dport, run, var, tx, ttl, url):
    if family == 4:
        ip = IP(src=src, dst=dst, ttl=ttl, id=ttl, flags="DF")
    else:
        ip = IPv6(src=src, dst=dst, hlim=ttl)
    target = ipaddress.ip_address(dst).packed
    if proto == "ICMP":
        payload = tx.to_bytes(8, "big") + target + run.to_bytes(4, "big") + bytes([var]) + url.encode()
        if family == 4:
            return raw(ip / ICMP(type=8, code=0, id=run & 0xFFFF, seq=var) / Raw(payload))
        return raw(ip / ICMPv6EchoRequest(id=run & 0xFFFF, seq=var, data=payload))
    if proto == "TCP":
        seg = TCP(sport=sport, dport=dport, seq=tx & 0xFFFFFFFF, ack=run, flags="SA",
                  window=65535, options=[])
        return raw(ip / seg / Raw(url.encode())) if url else raw(ip / seg)
    qname = f"{var}-{run}-{tx}.{DOMAIN}"
    dns = DNS(id=tx & 0xFFFF, rd=1, qd=DNSQR(qname=qname, qtype="A", qclass="IN"))
    pkt = ip / UDP(sport=sport, dport=dport) / dns
    if url:
        pkt = pkt / Raw(url.encode())
    return raw(pkt)


def main():
    out = []
    for name, family, proto, src, dst, sport, dport, run, var, tx, ttl, url in CASES:
        data = scapy_packet(family, proto, src, dst, sport, dport, run, var, tx, ttl, url)
        out.append({"name": name, "protocol": proto, "src": src, "dst": dst, "src_port": sport,
                    "dst_port": dport, "run_id": run, "variation_id": var, "tx_time": tx,
                    "ttl": ttl, "opt_out_url": url, "hex": data.hex()})
    path = Path(__file__).with_name("golden_packets.json")
    path.write_text(json.dumps(out, indent=1) + "\n")
    print(f"wrote {len(out)} packets to {path}")


if __name__ == "__main__":
    main()
