import csv
import io
import os

import pytest

from conftest import run_scenario_cycles
from dsentinel.certs import parse_time
from dsentinel.errors import InputError
from dsentinel.reports import (REPORT_KINDS, SCHEMAS, build_report, emit_report, histogram_rows, whois_age_report)
from dsentinel.store import Store

DAY = 86400.0


def parse_csv(text):
    header, rest = text.split("\r\n", 1)
    return header, list(csv.reader(io.StringIO(rest)))


def event_store(tmp_path, spans):
    """Store holding abuse events with the given lifespans (None = still open)."""
    store = Store(tmp_path)
    t0 = parse_time("2022-01-01")
    records = []
    for i, days in enumerate(spans):
        fqdn = f"h{i}.example{i}.com"
        records.append({"type": "abuse_detected", "fqdn": fqdn, "at": t0, "signatures": ["s"],
                        "bucket": "keyword", "snapshot_id": f"snap{i}", "topic": "gambling"})
        if days is not None:
            records.append({"type": "dns_corrected", "fqdn": fqdn, "at": t0 + days * DAY})
    store.append("events.jsonl", records)
    store.append("cycles.jsonl", [{"type": "cycle", "at": t0 + 100 * DAY}])
    return store


def test_duration_bins(tmp_path):
    rep = build_report("hijack_durations", event_store(tmp_path, [15, 70, None]))
    nonzero = [r for r in rep.rows if r[2]]
    assert nonzero == [[15, 20, 1], [70, 75, 1], ["open", "", 1]]
    assert rep.rows[0] == [0, 5, 0]


def test_sitemap_bins():
    rows = histogram_rows([2, 3000, 144349], 5000)
    assert rows[0] == [0, 5000, 2]
    assert rows[-1] == [140000, 145000, 1]
    assert sum(r[2] for r in rows) == 3 and len(rows) == 29


@pytest.mark.parametrize("kind", REPORT_KINDS)
def test_empty_store_header_only(tmp_path, kind):
    rep = build_report(kind, Store(tmp_path))
    header, rows = parse_csv(rep.to_csv())
    assert header.startswith(f"# dsentinel-report kind={kind} schema=1 generated_at=")
    assert rows == [list(SCHEMAS[kind])]


def test_unknown_kind(tmp_path):
    with pytest.raises(InputError):
        build_report("nope", Store(tmp_path))


def test_whois_ages():
    at = parse_time("2023-06-01")
    created = {"old.com": parse_time("2005-03-01"), "new.com": parse_time("2023-01-01"),
               "mid.com": parse_time("2020-01-01")}
    rows, shares = whois_age_report(["old.com", "new.com", "mid.com", "gone.com"], created, at)
    by = {r[0]: r for r in rows}
    assert by["old.com"][2] // 365 == 18 and by["old.com"][3:5] == ["true", "true"]
    assert by["new.com"][3:5] == ["false", "false"]
    assert by["gone.com"][5] == "true"
    assert shares["known"] == 3 and shares["unknown"] == 1
    assert shares["share_older_1y"] == pytest.approx(2 / 3)
    assert shares["share_older_10y"] == pytest.approx(1 / 3)


@pytest.fixture(scope="module")
def takeover_store(tmp_path_factory):
    days = [f"2022-01-{d:02d}T00:00:00Z" for d in range(1, 32)] + ["2022-02-04T00:00:00Z"]
    store, _ = run_scenario_cycles("takeover-basic", days, str(tmp_path_factory.mktemp("rep")))
    return store


def test_reports_read_only(takeover_store, tmp_path):
    before = takeover_store.digest()
    for kind in REPORT_KINDS:
        emit_report(kind, takeover_store, str(tmp_path), plot=False)
    assert takeover_store.digest() == before


def test_abuse_events_report(takeover_store):
    rep = build_report("abuse_events", takeover_store)
    (row,) = rep.rows
    rec = dict(zip(rep.columns, row))
    assert rec["fqdn"] == "shop.example.com"
    assert rec["first_detected_at"] == "2022-01-20T00:00:00Z"
    assert rec["resolved_at"] == "2022-02-04T00:00:00Z"
    assert rec["lifespan_days"] == 15 and rec["open_ended"] == "false"
    assert rec["capability_access"] == "full" and rec["provider"] == "azure"


def test_sitemap_and_cluster_reports(takeover_store):
    side = build_report("sitemap_histogram", takeover_store).rows
    assert side == [[0, 5000, 1]]
    table = build_report("cluster_table", takeover_store).rows
    assert table[0][1:3] == [3, 1]
    assert "phone:6281234567890" in table[0][3]


def test_csv_format_and_png(takeover_store, tmp_path):
    rep, paths = emit_report("hijack_durations", takeover_store, str(tmp_path))
    assert [os.path.basename(p) for p in paths] == ["hijack_durations.csv", "hijack_durations.png"]
    raw = open(paths[0], "rb").read()
    assert raw.startswith(b"# dsentinel-report kind=hijack_durations schema=1 generated_at=2022-02-04T00:00:00Z\r\n")
    assert b"\r\n" in raw and b"\n" not in raw.replace(b"\r\n", b"")
    with open(paths[1], "rb") as fh:
        assert fh.read(8) == b"\x89PNG\r\n\x1a\n"


def test_png_deterministic(takeover_store, tmp_path):
    _, a = emit_report("indicator_venn", takeover_store, str(tmp_path / "a"))
    _, b = emit_report("indicator_venn", takeover_store, str(tmp_path / "b"))
    assert open(a[1], "rb").read() == open(b[1], "rb").read()


def test_registrar_report(takeover_store, tmp_path):
    path = tmp_path / "reg.csv"
    path.write_text("sld,registrar\nexample.com,RegA\n")
    rep = build_report("registrar_span", takeover_store, registrars=str(path))
    # one hijacked name means no cluster with two registered domains
    assert rep.rows == [] and rep.meta["evaluated"] == 0
