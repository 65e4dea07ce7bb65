"""Count-level fixtures holding the published measurement numbers.

Prefixes are plain integer ids; only set sizes and overlaps matter.
"""

from __future__ import annotations

from siteflip.analysis import FlipReport

# protocol -> (responsive, flipped), IPv4
PROTOCOL_COUNTS = {"ICMP": (3_708_348, 151_645), "TCP": (1_287_110, 57_707), "UDP": (210_573, 10_223)}
ALL_PROTOCOLS = (3_820_285, 167_573)
PROTOCOL_PCT = {"ICMP": 4.1, "TCP": 4.5, "UDP": 4.9, "total": 4.4}

# asn -> (name, flipped, responsive, published ratio)
TOP_AS = {
    7303: ("Telecom Argentina", 17_837, 19_037, 0.937),
    3352: ("Telefonica de Espana", 15_216, 23_197, 0.656),
    8075: ("Microsoft", 13_121, 64_869, 0.202),
    8708: ("RCS & RDS", 5_432, 5_513, 0.985),
    3462: ("HiNet", 4_713, 9_979, 0.472),
    36947: ("Algerie Telecom", 4_357, 5_293, 0.823),
    5769: ("Videotron", 4_156, 8_663, 0.480),
    16509: ("Amazon", 4_128, 87_184, 0.047),
    # published ratio 0.983 disagrees with its own counts (3,936 / 4,198 = 0.938)
    9198: ("JSC Kazakhtelecom", 3_936, 4_198, 0.983),
    6730: ("Sunrise", 3_436, 5_145, 0.668),
}

ICMP_TCP_OVERLAP = {"only_icmp": 5_426, "only_tcp": 4_980, "both": 45_069}
LAYER_COUNTS = {"ip_varied": 57_707, "port_varied": 48_150, "L3Only": 16_808, "L4Only": 7_251,
        "Both": 40_889}
LONGEVITY = {"t0": 153_734, "t1": 151_645, "both": 89_447, "share": 58.2}
LB_PLACEMENT = {"OnPathAS": 88, "HomeAS": 44, "Unknown": 20}
LATENCY = {"min": 88.3, "max": 103.2, "oneway": 14.9, "rtt": 29.8}
MULTICLIENT = {"flipped": 21_000, "excluded": 11_400, "remaining": 9_600}


def protocol_reports() -> dict[str, FlipReport]:
    """Per-protocol reports whose unions also match the published total row.

    ICMP covers ids [0, 3,708,348) and its flips are the lowest ids. TCP
    answers from the bottom 1,175,173 ICMP ids plus 111,937 ids above the
    ICMP range; UDP answers from the bottom of the ICMP range. Of the
    15,928 prefixes flipped but not under ICMP, 15,000 are TCP flips above
    the ICMP range and 928 are UDP flips just past the ICMP flipped ids.
    """
    icmp_r, icmp_f = PROTOCOL_COUNTS["ICMP"]
    tcp_r, tcp_f = PROTOCOL_COUNTS["TCP"]
    udp_r, udp_f = PROTOCOL_COUNTS["UDP"]
    total_r, total_f = ALL_PROTOCOLS
    extra = total_r - icmp_r                       # 111,937 TCP-only prefixes
    extra_flips = total_f - icmp_f                 # 15,928 non-ICMP flips
    tcp_only_flips = 15_000
    udp_only_flips = extra_flips - tcp_only_flips  # 928

    icmp = FlipReport.from_sets(0, range(icmp_r), range(icmp_f), family=4, granularity=24)
    tcp_resp = set(range(tcp_r - extra)) | set(range(icmp_r, total_r))
    tcp_flip = set(range(tcp_f - tcp_only_flips)) | set(range(icmp_r, icmp_r + tcp_only_flips))
    tcp = FlipReport.from_sets(1, tcp_resp, tcp_flip, family=4, granularity=24)
    udp_flip = set(range(udp_f - udp_only_flips)) | set(range(icmp_f, icmp_f + udp_only_flips))
    udp = FlipReport.from_sets(2, range(udp_r), udp_flip, family=4, granularity=24)
    return {"ICMP": icmp, "TCP": tcp, "UDP": udp}


def overlap_reports() -> tuple[FlipReport, FlipReport]:
    """ICMP and TCP reports; 1,000 extra flips per side are unresponsive to the other protocol."""
    only_i, only_t, both = ICMP_TCP_OVERLAP["only_icmp"], ICMP_TCP_OVERLAP["only_tcp"], ICMP_TCP_OVERLAP["both"]
    common = 200_000
    icmp_flip = set(range(0, only_i + both))
    tcp_flip = set(range(only_i, only_i + both + only_t))
    icmp_resp = set(range(common)) | set(range(common, common + 1000))
    tcp_resp = set(range(common)) | set(range(common + 1000, common + 2000))
    icmp_flip |= set(range(common, common + 1000))
    tcp_flip |= set(range(common + 1000, common + 2000))
    return (FlipReport.from_sets(1, icmp_resp, icmp_flip, family=4, granularity=24),
            FlipReport.from_sets(2, tcp_resp, tcp_flip, family=4, granularity=24))


def layer_reports() -> tuple[FlipReport, list[FlipReport]]:
    """Address-varied TCP run plus two port-varied runs.

    Ten address-varied flips are unresponsive in the port-varied runs and
    ten port-varied flips are unresponsive in the address-varied run,
    which is the gap between the published run totals and class sums.
    """
    l3, l4, both = LAYER_COUNTS["L3Only"], LAYER_COUNTS["L4Only"], LAYER_COUNTS["Both"]
    gap_ip = LAYER_COUNTS["ip_varied"] - l3 - both
    gap_l4 = LAYER_COUNTS["port_varied"] - l4 - both
    quiet = 100_000
    common = set(range(l3 + both + l4 + quiet))
    ip_flip = set(range(0, l3 + both))
    l4_flip = set(range(l3, l3 + both + l4))
    ip_only = set(range(10**6, 10**6 + gap_ip))
    l4_only = set(range(2 * 10**6, 2 * 10**6 + gap_l4))
    ip_run = FlipReport.from_sets(1, common | ip_only, ip_flip | ip_only, family=4, granularity=24)
    src_port = sorted(l4_flip)[: len(l4_flip) // 2]
    dst_port = sorted(l4_flip)[len(l4_flip) // 3:]
    port_a = FlipReport.from_sets(2, common | l4_only, set(src_port) | l4_only, family=4, granularity=24)
    port_b = FlipReport.from_sets(3, common, set(dst_port), family=4, granularity=24)
    return ip_run, [port_a, port_b]


class DictAsMap:
    def __init__(self, mapping: dict, names: dict | None = None):
        self.mapping = mapping
        self.names = names or {}

    def lookup(self, key) -> int:
        return self.mapping.get(key, 0)

    def name(self, asn: int) -> str:
        return self.names.get(asn, "")


def top_as_report() -> tuple[FlipReport, DictAsMap]:
    mapping, responsive, flipped = {}, set(), set()
    next_id = 0
    for asn, (_, n_flip, n_resp, _) in TOP_AS.items():
        ids = range(next_id, next_id + n_resp)
        next_id += n_resp
        for i in ids:
            mapping[i] = asn
        responsive.update(ids)
        flipped.update(ids[:n_flip])
    report = FlipReport.from_sets(1, responsive, flipped, family=4, granularity=24)
    return report, DictAsMap(mapping, {asn: row[0] for asn, row in TOP_AS.items()})
