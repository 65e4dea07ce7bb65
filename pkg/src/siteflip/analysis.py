"""From merged run logs to flip statistics.

Reports key prefixes by whatever the log uses, normally ``ip_network``
objects at the run granularity. The set-level helpers accept any
hashable key, which lets large count-only fixtures use plain integers.
"""

from __future__ import annotations

import csv
import enum
import math
import statistics
from collections import Counter, defaultdict
from collections.abc import Hashable, Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from siteflip.model import Protocol, SiteId, VariedField
from siteflip.prober import REPLY

RTT_ASSUMPTION = "rtt_diff doubles the one-way difference: the longer path is assumed in both directions"


def percent(part: int, whole: int) -> float:
    """Percentage at one decimal; 0.0 for an empty population."""
    return round(100.0 * part / whole, 1) if whole else 0.0


# -- flip detection -------------------------------------------------------------


@dataclass
class FlipReport:
    run_id: int
    protocol: Protocol | None = None
    family: int | None = None
    granularity: int | None = None
    varied: VariedField | None = None
    sites_by_variation: dict[Hashable, dict[int, frozenset[SiteId]]] = field(default_factory=dict)
    responsive: set[Hashable] = field(default_factory=set)
    flipped: set[Hashable] = field(default_factory=set)

    @classmethod
    def from_sets(cls, run_id: int, responsive: Iterable[Hashable], flipped: Iterable[Hashable],
                  **meta) -> "FlipReport":
        """Report without per-variation detail, for count-level fixtures."""
        responsive = set(responsive)
        flipped = set(flipped)
        if not flipped <= responsive:
            raise ValueError("flipped prefixes must be responsive")
        return cls(run_id, responsive=responsive, flipped=flipped, **meta)

    def sites(self, prefix: Hashable) -> frozenset[SiteId]:
        by_var = self.sites_by_variation.get(prefix, {})
        return frozenset().union(*by_var.values()) if by_var else frozenset()

    def summary(self) -> tuple[int, int, float]:
        return len(self.responsive), len(self.flipped), percent(len(self.flipped), len(self.responsive))

    def same_kind(self, other: "FlipReport") -> bool:
        return (self.family, self.granularity) == (other.family, other.granularity)


def detect_flips(runlog_or_records, *, run_id: int | None = None) -> FlipReport:
    """Prefixes whose replies reached two or more sites within one run.

    Only direct replies count; Time Exceeded records are ignored.
    """
    if hasattr(runlog_or_records, "records"):
        mdef = runlog_or_records.definition
        records = runlog_or_records.records
        report = FlipReport(mdef.run_id, mdef.protocol, mdef.family, mdef.granularity, mdef.varied)
    else:
        records = list(runlog_or_records)
        first = records[0] if records else None
        report = FlipReport(
            run_id if run_id is not None else (first.run_id if first else 0),
            first.protocol if first else None,
            first.target_prefix.version if first else None,
            first.target_prefix.prefixlen if first else None,
        )
    acc: dict[Hashable, dict[int, set[SiteId]]] = defaultdict(lambda: defaultdict(set))
    for rec in records:
        if rec.kind == REPLY:
            acc[rec.target_prefix][rec.variation_id].add(rec.rx_site)
    for prefix, by_var in acc.items():
        report.sites_by_variation[prefix] = {v: frozenset(s) for v, s in sorted(by_var.items())}
        report.responsive.add(prefix)
        if len(set().union(*by_var.values())) >= 2:
            report.flipped.add(prefix)
    return report


def merge_reports(reports: Sequence[FlipReport], run_id: int = 0) -> FlipReport:
    """Combined view of several runs: responsive to any, flipped in any."""
    if not reports:
        raise ValueError("nothing to merge")
    _check_kind(list(reports))
    first = reports[0]
    return FlipReport(run_id, None, first.family, first.granularity,
                      responsive=set().union(*(r.responsive for r in reports)),
                      flipped=set().union(*(r.flipped for r in reports)))


# -- cross-run comparisons --------------------------------------------------------


@dataclass
class Intersection:
    only_a: set[Hashable]
    only_b: set[Hashable]
    both: set[Hashable]

    def counts(self) -> tuple[int, int, int]:
        return len(self.only_a), len(self.only_b), len(self.both)

    @property
    def total(self) -> int:
        return len(self.only_a) + len(self.only_b) + len(self.both)


def _check_kind(reports: Sequence[FlipReport]) -> None:
    for r in reports[1:]:
        if not reports[0].same_kind(r):
            raise ValueError("reports differ in family or granularity")


def intersect_runs(a: FlipReport, b: FlipReport,
                   restrict: set[Hashable] | None = None) -> Intersection:
    """Split flipped prefixes by which run saw them, among prefixes responsive in both."""
    _check_kind([a, b])
    if restrict is None:
        restrict = a.responsive & b.responsive
    fa, fb = a.flipped & restrict, b.flipped & restrict
    return Intersection(fa - fb, fb - fa, fa & fb)


class LayerClass(enum.Enum):
    L3_ONLY = "L3Only"
    L4_ONLY = "L4Only"
    BOTH = "Both"
    NONE = "None"


@dataclass
class LayerResult:
    classes: dict[Hashable, LayerClass]
    ip_flipped: int  # flips seen by the address-varied run, before restriction
    l4_flipped: int  # distinct flips seen by any port-varied run, before restriction

    def counts(self) -> dict[LayerClass, int]:
        c = Counter(self.classes.values())
        return {cls: c.get(cls, 0) for cls in LayerClass}


def classify_layers(ip_run: FlipReport, l4_runs: Sequence[FlipReport]) -> LayerResult:
    """Which header layer the flips of each prefix depend on.

    Classification covers prefixes responsive in the address-varied run
    and in at least one port-varied run.
    """
    if not l4_runs:
        raise ValueError("at least one port-varied run is required")
    _check_kind([ip_run, *l4_runs])
    protocols = {r.protocol for r in (ip_run, *l4_runs) if r.protocol is not None}
    if len(protocols) > 1:
        raise ValueError("layer classification needs runs of a single protocol")
    l4_responsive = set().union(*(r.responsive for r in l4_runs))
    l4_flipped = set().union(*(r.flipped for r in l4_runs))
    classes = {}
    for prefix in ip_run.responsive & l4_responsive:
        in_ip, in_l4 = prefix in ip_run.flipped, prefix in l4_flipped
        if in_ip and in_l4:
            classes[prefix] = LayerClass.BOTH
        elif in_ip:
            classes[prefix] = LayerClass.L3_ONLY
        elif in_l4:
            classes[prefix] = LayerClass.L4_ONLY
        else:
            classes[prefix] = LayerClass.NONE
    return LayerResult(classes, len(ip_run.flipped), len(l4_flipped))


# -- per-AS aggregation --------------------------------------------------------------


@dataclass(frozen=True)
class AsRow:
    asn: int
    name: str
    flipped: int
    responsive: int

    @property
    def ratio(self) -> float:
        return self.flipped / self.responsive if self.responsive else 0.0


@dataclass
class AsAggregate:
    rows: list[AsRow]
    cdf_all: list[tuple[float, float]]
    cdf_over10: list[tuple[float, float]]
    residential: int | None = None
    residential_share: float | None = None


MIN_RESPONSIVE_FOR_CDF = 10


def _key_addr(prefix):
    return getattr(prefix, "network_address", prefix)


def _category(prefix, categories: dict) -> str | None:
    if prefix in categories:
        return categories[prefix]
    if hasattr(prefix, "supernet"):
        for length in range(prefix.prefixlen - 1, -1, -1):
            sup = prefix.supernet(new_prefix=length)
            if sup in categories:
                return categories[sup]
    return None


def aggregate_as(report: FlipReport, as_map, categories: dict | None = None) -> AsAggregate:
    """Flipped and responsive prefix counts per origin AS.

    ``as_map`` needs ``lookup(addr) -> asn`` and may offer ``name(asn)``.
    Rows are ordered by flipped count, largest first.
    """
    flipped = Counter()
    responsive = Counter()
    for prefix in report.responsive:
        asn = as_map.lookup(_key_addr(prefix))
        responsive[asn] += 1
        if prefix in report.flipped:
            flipped[asn] += 1
    name = getattr(as_map, "name", lambda asn: "")
    rows = [AsRow(asn, name(asn), flipped[asn], responsive[asn]) for asn in responsive]
    rows.sort(key=lambda r: (-r.flipped, -r.responsive, r.asn))
    agg = AsAggregate(rows, cdf([r.ratio for r in rows]),
                      cdf([r.ratio for r in rows if r.responsive > MIN_RESPONSIVE_FOR_CDF]))
    if categories is not None:
        agg.residential = sum(1 for p in report.flipped if _category(p, categories) == "residential")
        agg.residential_share = percent(agg.residential, len(report.flipped))
    return agg


def cdf(values: Iterable[float]) -> list[tuple[float, float]]:
    """Empirical CDF as (x, fraction <= x) at each distinct value."""
    ordered = sorted(values)
    n = len(ordered)
    out: list[tuple[float, float]] = []
    for i, x in enumerate(ordered, 1):
        if out and out[-1][0] == x:
            out[-1] = (x, i / n)
        else:
            out.append((x, i / n))
    return out


# -- stability over time -------------------------------------------------------------


class ConsistencyClass(enum.Enum):
    PERSISTENT = "Persistent"
    LOAD_DEPENDENT = "LoadDependent"
    TRANSIENT = "Transient"


def consistency_class(observed: int, runs: int) -> ConsistencyClass:
    if not 1 <= observed <= runs:
        raise ValueError("observed count must be within 1..runs")
    if observed == runs:
        return ConsistencyClass.PERSISTENT
    if observed >= 3:
        return ConsistencyClass.LOAD_DEPENDENT
    return ConsistencyClass.TRANSIENT


@dataclass
class ConsistencyResult:
    runs: int
    observed: dict[Hashable, int]
    classes: dict[Hashable, ConsistencyClass]

    def counts(self) -> dict[ConsistencyClass, int]:
        c = Counter(self.classes.values())
        return {cls: c.get(cls, 0) for cls in ConsistencyClass}

    def shares(self) -> dict[ConsistencyClass, float]:
        total = len(self.classes)
        return {cls: percent(n, total) for cls, n in self.counts().items()}


def classify_consistency(reports: Sequence[FlipReport]) -> ConsistencyResult:
    """How many of ``n`` repeated runs saw each ever-flipped prefix flip."""
    n = len(reports)
    if n < 3:
        raise ValueError("consistency needs at least three runs")
    _check_kind(list(reports))
    kinds = {(r.protocol, r.varied) for r in reports if r.protocol is not None}
    if len(kinds) > 1:
        raise ValueError("consistency runs must share one measurement definition")
    observed = Counter()
    for r in reports:
        observed.update(r.flipped)
    classes = {p: consistency_class(c, n) for p, c in observed.items()}
    return ConsistencyResult(n, dict(observed), classes)


def longevity(t0: FlipReport, t1: FlipReport) -> tuple[int, float]:
    """Prefixes flipped at both times, and their share of the first run's flips."""
    if t0.family is not None and t1.family is not None and t0.family != t1.family:
        raise ValueError("reports differ in address family")
    both = len(t0.flipped & t1.flipped)
    return both, percent(both, len(t0.flipped))


# -- latency -----------------------------------------------------------------------


@dataclass(frozen=True)
class PrefixLatency:
    prefix: Hashable
    site_means_ms: dict[SiteId, float]

    @property
    def min_path_ms(self) -> float:
        return min(self.site_means_ms.values())

    @property
    def max_path_ms(self) -> float:
        return max(self.site_means_ms.values())

    @property
    def oneway_diff_ms(self) -> float:
        return self.max_path_ms - self.min_path_ms

    @property
    def rtt_diff_ms(self) -> float:
        return 2 * self.oneway_diff_ms


@dataclass
class LatencyStats:
    prefixes: list[PrefixLatency]
    skewed: int = 0
    assumption: str = RTT_ASSUMPTION

    @property
    def mean_min_ms(self) -> float:
        return statistics.fmean(p.min_path_ms for p in self.prefixes) if self.prefixes else 0.0

    @property
    def mean_max_ms(self) -> float:
        return statistics.fmean(p.max_path_ms for p in self.prefixes) if self.prefixes else 0.0

    @property
    def oneway_diff_ms(self) -> float:
        return self.mean_max_ms - self.mean_min_ms

    @property
    def rtt_diff_ms(self) -> float:
        return 2 * self.oneway_diff_ms

    def rtt_cdf(self, resolution_ms: float = 1.0) -> list[tuple[float, float]]:
        """Fraction of prefixes whose RTT difference is at most each bin edge."""
        if not self.prefixes:
            return []
        diffs = sorted(p.rtt_diff_ms for p in self.prefixes)
        top = math.ceil(diffs[-1] / resolution_ms)
        out, i, n = [], 0, len(diffs)
        for step in range(top + 1):
            edge = step * resolution_ms
            while i < n and diffs[i] <= edge:
                i += 1
            out.append((edge, i / n))
        return out

    def summary_line(self) -> str:
        return (f"mean_min={self.mean_min_ms:.1f} mean_max={self.mean_max_ms:.1f} "
                f"rtt_diff={self.rtt_diff_ms:.1f}")


def latency_stats(runlog_or_records) -> LatencyStats:
    """Per-site one-way latency of prefixes whose replies reached several sites.

    One-way latency is capture time minus send time and relies on
    synchronised site clocks; negative samples are dropped and counted.
    """
    records = getattr(runlog_or_records, "records", runlog_or_records)
    samples: dict[Hashable, dict[SiteId, list[int]]] = defaultdict(lambda: defaultdict(list))
    skewed = 0
    for rec in records:
        if rec.kind != REPLY:
            continue
        if rec.clock_skewed:
            skewed += 1
            continue
        samples[rec.target_prefix][rec.rx_site].append(rec.latency_ns)
    out = []
    for prefix in sorted(samples, key=_sort_key):
        by_site = samples[prefix]
        if len(by_site) < 2:
            continue
        means = {site: statistics.fmean(v) / 1e6 for site, v in sorted(by_site.items())}
        out.append(PrefixLatency(prefix, means))
    return LatencyStats(out, skewed)


def _sort_key(prefix):
    if hasattr(prefix, "network_address"):
        return (prefix.version, int(prefix.network_address), prefix.prefixlen)
    return (0, prefix, 0)


# -- multi-client probing ------------------------------------------------------------


def _excluded(prefix, exclusions: set) -> bool:
    if prefix in exclusions:
        return True
    if hasattr(prefix, "supernet"):
        return any(prefix.supernet(new_prefix=n) in exclusions
                   for n in range(prefix.prefixlen - 1, -1, -1))
    return False


def multi_client_filter(source, exclusions: Iterable) -> set[Hashable]:
    """Flipped prefixes of a several-sender, static-header run, minus excluded ones.

    ``source`` is a run log (its definition is checked) or a ready report.
    """
    if isinstance(source, FlipReport):
        report = source
    else:
        mdef = source.definition
        if len(mdef.sender_sites) < 2 or mdef.varied is not None:
            raise ValueError("multi-client filtering needs a run with two or more "
                             "senders and static headers")
        report = detect_flips(source)
    exclusions = set(exclusions)
    return {p for p in report.flipped if not _excluded(p, exclusions)}


# -- report files --------------------------------------------------------------------


def write_table(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_cdf(path: str | Path, points: Iterable[tuple[float, float]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for x, y in points:
            fh.write(f"{x:.6g},{y:.6f}\n")
    return path


def flip_rows(report: FlipReport) -> list[list]:
    """Per-prefix lines: prefix, responsive variations, sites, flipped flag."""
    rows = []
    for prefix in sorted(report.sites_by_variation, key=_sort_key):
        by_var = report.sites_by_variation[prefix]
        sites = ";".join(sorted(report.sites(prefix)))
        rows.append([prefix, len(by_var), sites, int(prefix in report.flipped)])
    return rows


def write_intersections(path: str | Path, names: Sequence[str],
                        reports: Sequence[FlipReport]) -> Path:
    """UpSet-style membership counts over several reports' flipped sets.

    Restricted to prefixes responsive in every report; one line per
    non-empty membership pattern.
    """
    common = set.intersection(*(r.responsive for r in reports))
    patterns = Counter()
    for prefix in set().union(*(r.flipped for r in reports)) & common:
        patterns[tuple(int(prefix in r.flipped) for r in reports)] += 1
    rows = [[*pattern, count] for pattern, count in sorted(patterns.items(), reverse=True)]
    return write_table(path, [*names, "count"], rows)


__all__ = [
    "FlipReport", "detect_flips", "merge_reports", "Intersection", "intersect_runs", "LayerClass", "LayerResult",
    "classify_layers", "AsRow", "AsAggregate", "aggregate_as", "cdf", "ConsistencyClass",
    "consistency_class", "ConsistencyResult", "classify_consistency", "longevity",
    "PrefixLatency", "LatencyStats", "latency_stats", "multi_client_filter", "percent",
    "write_table", "write_cdf", "flip_rows", "write_intersections", "RTT_ASSUMPTION",
]
