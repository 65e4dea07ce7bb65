from pathlib import Path

import pytest

from helpers import save_report_log
from published_counts import ICMP_TCP_OVERLAP, LATENCY
from siteflip.cli import EXIT_OK, EXIT_PARTIAL, EXIT_RUNTIME, EXIT_USAGE, main
from siteflip.orchestrator import load_run


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_measure_scenario1_reports_one_flip(tmp_path, capsys):
    code, out, _ = run(capsys, "--out", tmp_path, "measure", "--proto", "icmp",
                       "--vary", "src-addr", "--sim", "scenario1")
    assert code == EXIT_OK
    assert "responsive=1 flipped=1" in out
    assert (tmp_path / "1" / "manifest").exists()
    assert (tmp_path / "1" / "reports" / "flips.csv").exists()


def test_illegal_combination_is_a_usage_error(tmp_path, capsys):
    code, _, err = run(capsys, "--out", tmp_path, "measure", "--proto", "icmp",
                       "--vary", "src-port", "--sim", "scenario1")
    assert code == EXIT_USAGE and "error" in err


def test_default_k_is_five_probes_per_target(tmp_path, capsys):
    code, _, _ = run(capsys, "--out", tmp_path, "measure", "--proto", "tcp", "--vary", "all",
                     "--senders", "AMS", "--sim", "scenario1", "--target", "10.9.0.1")
    assert code == EXIT_OK
    log = load_run(tmp_path / "1")
    assert log.definition.k == 5 and log.stats["sent"] == 5


def test_static_headers_send_one_probe(tmp_path, capsys):
    code, out, _ = run(capsys, "--out", tmp_path, "measure", "--proto", "tcp", "--vary", "none",
                       "--senders", "AMS,TYO,NYC", "--sim", "scenario1", "--target", "10.9.0.1")
    assert code == EXIT_OK
    assert load_run(tmp_path / "1").stats["sent"] == 3


def test_unknown_sender_is_a_usage_error(tmp_path, capsys):
    code, _, _ = run(capsys, "--out", tmp_path, "measure", "--senders", "LAX", "--sim", "scenario1")
    assert code == EXIT_USAGE


def test_missing_topology_is_a_runtime_error(tmp_path, capsys):
    code, _, err = run(capsys, "--out", tmp_path, "measure", "--sim", tmp_path / "nope.topo")
    assert code == EXIT_RUNTIME and "nope.topo" in err


def test_trace_prints_divergence(tmp_path, capsys):
    code, out, _ = run(capsys, "--out", tmp_path, "trace", "--target", "10.9.0.1",
                       "--sim", "scenario1", "--vary", "src-addr", "--locate")
    assert code == EXIT_OK
    assert "divergence_ttl=3 reason=site" in out
    assert "location=HomeAS" in out
    assert (tmp_path / "1" / "traces.csv").exists()


def test_trace_unreachable_target_times_out(tmp_path, capsys):
    code, out, _ = run(capsys, "--out", tmp_path, "trace", "--target", "203.0.113.9",
                       "--sim", "scenario1")
    assert code == EXIT_OK and "dest_reached=0" in out
    rows = (tmp_path / "1" / "traces.csv").read_text().splitlines()[1:]
    assert rows and all(row.split(",")[7] == "" for row in rows)


def test_trace_without_target_is_a_usage_error(tmp_path, capsys):
    code, _, _ = run(capsys, "--out", tmp_path, "trace")
    assert code == EXIT_USAGE


def test_partial_run_exit_code(tmp_path, capsys, monkeypatch):
    from siteflip import orchestrator

    real = orchestrator.WorkerHandle.request

    def flaky(self, msg):
        if self.worker.site == "NYC":
            raise ConnectionError("gone")
        return real(self, msg)

    monkeypatch.setattr(orchestrator.WorkerHandle, "request", flaky)
    code, out, _ = run(capsys, "--out", tmp_path, "measure", "--sim", "scenario1")
    assert code == EXIT_PARTIAL and "partial=true" in out


def test_config_file_supplies_defaults(tmp_path, capsys):
    cfg = tmp_path / "site.conf"
    cfg.write_text(f"# defaults\nk = 3\nout = {tmp_path / 'runs'}\nsim = scenario1\n")
    code, _, _ = run(capsys, "--config", cfg, "measure", "--target", "10.9.0.1")
    assert code == EXIT_OK
    assert load_run(tmp_path / "runs" / "1").definition.k == 3
    cfg.write_text("colour = blue\n")
    code, _, err = run(capsys, "--config", cfg, "measure")
    assert code == EXIT_USAGE and "colour" in err


def test_analyze_intersect_fixture(tmp_path, capsys):
    only_i, only_t, both = ICMP_TCP_OVERLAP["only_icmp"], ICMP_TCP_OVERLAP["only_tcp"], ICMP_TCP_OVERLAP["both"]
    quiet = set(range(60_000, 60_500))
    icmp_flip = set(range(only_i + both))
    tcp_flip = set(range(only_i, only_i + both + only_t))
    universe = icmp_flip | tcp_flip | quiet
    a = save_report_log(tmp_path / "a", 1, universe, icmp_flip)
    b = save_report_log(tmp_path / "b", 2, universe, tcp_flip)
    code, out, _ = run(capsys, "analyze", "intersect", a, b)
    assert code == EXIT_OK
    assert out.strip() == "only_a=5426 only_b=4980 both=45069"


def test_analyze_latency_fixture(tmp_path, capsys):
    lat = {0: (80.0, 100.0), 1: (88.3, 103.2), 2: (96.6, 106.4)}
    d = save_report_log(tmp_path / "lat", 1, lat, lat, latency_ms=lat)
    code, out, _ = run(capsys, "analyze", "latency", d / "log.csv")
    assert code == EXIT_OK
    assert out.splitlines()[0] == (f"mean_min={LATENCY['min']} mean_max={LATENCY['max']} "
                                   f"rtt_diff={LATENCY['rtt']}")
    assert (d / "reports" / "rtt_diff_cdf.csv").exists()


def test_analyze_consistency_table(tmp_path, capsys):
    planted = {0: 10, 1: 5, 2: 2, 3: 1}
    logs = []
    for r in range(10):
        flipped = [p for p, n in planted.items() if r < n]
        logs.append(save_report_log(tmp_path / f"r{r}", r + 1, planted, flipped))
    code, out, _ = run(capsys, "analyze", "consistency", *logs)
    assert code == EXIT_OK
    assert "Persistent=1 share=25.0" in out
    assert "LoadDependent=1 share=25.0" in out
    assert "Transient=2 share=50.0" in out


def test_analyze_rejects_bad_logs(tmp_path, capsys):
    bad = tmp_path / "log.csv"
    bad.write_text("not,a,log\n1,2,3\n")
    code, _, err = run(capsys, "analyze", "flips", bad)
    assert code == EXIT_RUNTIME and "log.csv" in err


def test_analyze_multiclient(tmp_path, capsys):
    d = save_report_log(tmp_path / "mc", 1, range(10), range(4))
    # the fixture log is address-varied from one sender, so it is the wrong shape
    code, _, _ = run(capsys, "analyze", "multiclient", d)
    assert code == EXIT_USAGE
    code, _, _ = run(capsys, "--out", tmp_path / "runs", "measure", "--vary", "none",
                     "--senders", "AMS,TYO,NYC", "--sim", "scenario1", "--target", "10.9.0.1")
    excl = tmp_path / "anycast.txt"
    excl.write_text("10.9.0.0/16\n")
    code, out, _ = run(capsys, "analyze", "multiclient", tmp_path / "runs" / "1",
                       "--exclusions", excl)
    assert code == EXIT_OK and out.strip().endswith("remaining=0")


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.mark.parametrize("argv", [
    ["measure", "--sim", "scenario3", "--flip-prob", "0.5", "--proto", "tcp", "--vary", "all"],
    ["repeat", "--sim", "scenario3", "--count", "3", "--flip-prob", "0.3"],
    ["trace", "--sim", "scenario1", "--target", "10.9.0.1", "--locate"],
])
def test_equal_seeds_give_identical_outputs(tmp_path, capsys, argv):
    outs = []
    for name in ("one", "two"):
        code, out, _ = run(capsys, "--seed", 11, "--out", tmp_path / name, *argv)
        assert code == EXIT_OK
        outs.append(out.replace(str(tmp_path / name), ""))
    assert outs[0] == outs[1]
    assert tree_bytes(tmp_path / "one") == tree_bytes(tmp_path / "two")


def test_reanalysis_is_byte_identical(tmp_path, capsys):
    run(capsys, "--out", tmp_path, "measure", "--sim", "scenario1")
    first = (tmp_path / "1" / "reports" / "prefixes.csv").read_bytes()
    run(capsys, "analyze", "flips", tmp_path / "1")
    assert (tmp_path / "1" / "reports" / "prefixes.csv").read_bytes() == first
