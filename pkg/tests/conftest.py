import os
import sys

import pytest

from dsentinel.catalog import default_catalog
from dsentinel.certs import parse_time
from dsentinel.harness import load_scenario, serve
from dsentinel.pipeline import ingest_domains, run_cycle
from dsentinel.ratelimit import RequestLedger
from dsentinel.signatures import load_signatures
from dsentinel.store import Store

sys.path.insert(0, os.path.dirname(__file__))

# (scenario, cycle time, monitored names, HTTP requests) for every end-to-end cycle in the session
CYCLE_AUDIT = []


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture(scope="session")
def signatures():
    return load_signatures()


@pytest.fixture
def harness():
    handles = []

    def start(name):
        h = serve(load_scenario(name))
        handles.append(h)
        return h

    yield start
    for h in handles:
        h.shutdown()


def run_scenario_cycles(scenario, times, store_dir, catalog=None, signatures=None):
    """Serve *scenario*, ingest its monitor list and run one cycle per time; returns (store, summaries)."""
    sc = load_scenario(scenario) if isinstance(scenario, str) else scenario
    store = Store(store_dir)
    listing = os.path.join(store_dir, "monitor.txt")
    with open(listing, "w", encoding="utf-8") as fh:
        fh.write("".join(n + "\n" for n in sc.monitor))
    ingest_domains([listing], store)
    summaries = []
    with serve(sc) as h:
        ledger = RequestLedger(h.clock)
        network = h.network(ledger=ledger)
        resolver = h.resolver()
        for t in times:
            h.advance_time(parse_time(t) if isinstance(t, str) else t)
            before = len(ledger.entries)
            with store.acquire():
                summary = run_cycle(store, catalog or default_catalog(), resolver, network, ledger,
                                    signatures if signatures is not None else load_signatures(), h.clock)
            issued = len(ledger.entries) - before
            CYCLE_AUDIT.append((sc.name, summary.at, summary.monitored, issued))
            summaries.append(summary)
    return store, summaries


@pytest.fixture(scope="session", autouse=True)
def request_budget_audit():
    yield
    over = [row for row in CYCLE_AUDIT if row[3] > 2 * row[2]]
    assert not over, f"cycles over the 2-requests-per-name budget: {over}"


# (criterion number, description, "PASS"/"FAIL") recorded by the acceptance suite
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, text, verdict in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{verdict} criterion {number:>2}: {text}")
