"""Command-line entry point: ``dsentinel <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

from . import __version__
from .errors import ConfigError, DsentinelError, InputError, ScenarioError, StoreLockedError

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2
DEFAULT_STORE = "dsentinel-store"


def _store_dir(args) -> str:
    return args.store or os.environ.get("DSENTINEL_STORE") or DEFAULT_STORE


def _clock(args):
    if getattr(args, "virtual_clock", None) is None:
        return time.time
    from .certs import parse_time
    fixed = parse_time(args.virtual_clock)
    return lambda: fixed


def _network(args, timeout, limiter, ledger=None):
    from .dnsclient import parse_endpoint
    from .net import SocketNetwork
    via = parse_endpoint(args.http_via) if getattr(args, "http_via", None) else None
    return SocketNetwork(timeout=timeout, limiter=limiter, ledger=ledger, via=via)


def _csv_out(rows, header):
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


def _config(args):
    from .pipeline import config_from_dict, load_config
    overrides = {"store": args.store or os.environ.get("DSENTINEL_STORE"), "resolver": args.resolver}
    if args.config:
        return load_config(args.config, overrides)
    return config_from_dict({k: v for k, v in overrides.items() if v is not None} | {"store": _store_dir(args)},
                            os.getcwd())


def cmd_ingest(args) -> int:
    from .pipeline import ingest_domains
    from .store import Store
    res = ingest_domains(args.paths, Store(_store_dir(args)))
    print(f"added={res.added} duplicates={res.duplicates} invalid={res.invalid}")
    return EXIT_OK


def _catalog(args):
    from .catalog import default_catalog, load_feed_files
    if not args.feed:
        return default_catalog()
    feeds = {}
    for spec in args.feed:
        provider, sep, path = spec.partition("=")
        if not sep:
            raise ConfigError(f"--feed expects PROVIDER=PATH, got {spec!r}")
        feeds[provider] = path
    return load_feed_files(feeds)


def cmd_catalog(args) -> int:
    cat = _catalog(args)
    if not args.match:
        kinds = {}
        for s in cat.services:
            kinds.setdefault(s.provider, 0)
            kinds[s.provider] += 1
        print(f"suffix patterns: {len(cat.services)} "
              f"({', '.join(f'{p}={n}' for p, n in sorted(kinds.items()))})")
        print(f"ip ranges: {len(cat.ip_ranges)}; skipped entries: {sum(cat.skipped.values())}")
        for p, stamp in sorted(cat.feed_timestamps.items()):
            print(f"feed {p}: {stamp}")
        return EXIT_OK
    rows = []
    for item in args.match:
        hit = None
        try:
            tag = cat.match_ip(item)
            if tag:
                hit = [item, tag.provider, tag.service_kind, "ip", str(tag.network), ""]
        except InputError:
            m = cat.match_suffix(item)
            if m:
                hit = [item, m.service.provider, m.service.service_kind, "suffix", m.service.suffix_pattern,
                       m.label if m.service.user_nameable else ""]
        rows.append(hit or [item, "", "", "none", "", ""])
    _csv_out(rows, ["input", "provider", "service_kind", "via", "matched", "freetext_label"])
    return EXIT_OK


def _resolver(args, cfg=None):
    from .dnsclient import DnsResolver
    from .ratelimit import TokenBucket
    endpoint = args.resolver or (cfg.resolver if cfg else "127.0.0.1:53")
    timeout = cfg.dns_timeout if cfg else args.dns_timeout
    return DnsResolver(endpoint, timeout=timeout, limiter=TokenBucket(cfg.dns_rate if cfg else 50.0))


def _names(args):
    from .store import Store
    if args.names:
        from .pipeline import _names_from
        return [n for n in _names_from(args.names)]
    return Store(_store_dir(args)).domains()


def cmd_collect(args) -> int:
    from .collector import classify_dangling, collect_fqdns, observe_all, probe_liveness
    from .ratelimit import TokenBucket
    cat = _catalog(args)
    resolver = _resolver(args)
    names = _names(args)
    clock = _clock(args)
    if args.dangling or args.liveness:
        network = _network(args, args.http_timeout, TokenBucket(10.0))
        rows = []
        for name in names:
            if args.dangling:
                st = classify_dangling(name, cat, resolver, network, clock=clock)
                rows.append([st.fqdn, st.state.value, st.signal or "", st.http_status or "",
                             st.service.provider if st.service else ""])
            else:
                obs = observe_all([name], resolver, clock)[name]
                addrs = [] if isinstance(obs, Exception) else list(obs.a_results)
                rep = probe_liveness(name, network, addrs, clock=clock)
                rows.append([rep.fqdn, rep.icmp_responsive.value, rep.tcp_responsive.value,
                             rep.http_responsive.value, rep.http_status or ""])
        header = ["fqdn", "state", "signal", "http_status", "provider"] if args.dangling else \
            ["fqdn", "icmp", "tcp", "http", "http_status"]
        _csv_out(rows, header)
        return EXIT_OK
    collected = collect_fqdns(names, cat, resolver, clock)
    _csv_out(sorted([c.fqdn, c.service.provider, c.service.service_kind, c.freetext_label or ""]
                    for c in collected), ["fqdn", "provider", "service_kind", "freetext_label"])
    return EXIT_OK


def cmd_cycle(args) -> int:
    from .pipeline import catalog_for, run_cycle, signatures_for
    from .ratelimit import RequestLedger, TokenBucket
    from .store import Store
    cfg = _config(args)
    clock = _clock(args)
    store = Store(cfg.store)
    ledger = RequestLedger(clock)
    network = _network(args, cfg.http_timeout, TokenBucket(cfg.http_rate), ledger)
    with store.acquire():
        summary = run_cycle(store, catalog_for(cfg), _resolver(args, cfg), network, ledger, signatures_for(cfg),
                            clock, scheme=cfg.scheme, workers=cfg.workers)
    print(json.dumps(summary.to_dict(), sort_keys=True))
    return EXIT_OK if summary.ok else EXIT_PARTIAL


def cmd_detect(args) -> int:
    from .corpus import BenignCorpus, default_corpus
    from .errors import SignatureRejected
    from .signatures import dump_signatures, load_signatures, match_all, validate_signature
    from .snapshot import diff_snapshots
    from .store import Store
    sigs = []
    for path in args.signatures or [None]:
        sigs.extend(load_signatures(path))
    if args.validate:
        corpus = list(BenignCorpus(args.corpus) if args.corpus else default_corpus())
        accepted, status = [], EXIT_OK
        for sig in sigs:
            try:
                accepted.append(validate_signature(sig, corpus))
                print(f"validated {sig.id}", file=sys.stderr)
            except SignatureRejected as exc:
                status = EXIT_PARTIAL
                print(f"rejected {sig.id}: {len(exc.offending_ids)} benign matches "
                      f"({', '.join(exc.offending_ids[:5])})", file=sys.stderr)
        text = dump_signatures(accepted)
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return status
    store = Store(_store_dir(args))
    rows = []
    for fqdn in store.snapshots.fqdns():
        history = store.snapshots.history(fqdn)
        snap = history[-1]
        changes = diff_snapshots(history[-2], snap) if len(history) > 1 else None
        for m in match_all(snap, changes, sigs, dry_run=args.dry_run):
            rows.append([fqdn, snap.id, m.signature_id, "+".join(sorted(m.fired))])
    _csv_out(rows, ["fqdn", "snapshot_id", "signature", "fired"])
    return EXIT_OK


def cmd_cluster(args) -> int:
    from .infra import build_graph, cluster_stats, dendrogram_rows, extract_many, graph_jsonl, hierarchical_cluster
    from .pipeline import abuse_histories
    from .store import Store
    store = Store(_store_dir(args))
    pages = []
    for h in abuse_histories(store):
        for sid in h.snapshot_ids:
            snap = store.snapshots.get(sid)
            if snap and snap.index_html:
                pages.append((h.event.fqdn, snap.index_html))
    extractions = extract_many(pages)
    if not extractions:
        print("no identifiers found in abused snapshots", file=sys.stderr)
        return EXIT_OK
    graph = build_graph(extractions)
    result = hierarchical_cluster(graph, args.cutoff, args.linkage)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "identifier_graph.jsonl"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(graph_jsonl(graph))
    with open(os.path.join(args.out, "dendrogram.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["step", "left", "right", "distance", "size"])
        w.writerows(dendrogram_rows(result))
    _csv_out([[r.rank, r.n_identifiers, r.n_domains, " ".join(r.identifiers)] for r in cluster_stats(result)],
             ["rank", "n_identifiers", "n_domains", "identifiers"])
    return EXIT_OK


def cmd_certs(args) -> int:
    from .certs import read_cert_lines
    from .reports import emit_report
    from .store import Store
    store = Store(_store_dir(args))
    if args.input:
        with open(args.input, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        certs = read_cert_lines(lines, args.input)
        store.append("certs.jsonl", ({"names": list(c.names), "issuer": c.issuer, "not_before": c.not_before}
                                     for c in certs))
        print(f"imported {len(certs)} certificate records", file=sys.stderr)
    report, paths = emit_report("cert_windows", store, args.out, plot=not args.no_plot, window_days=args.window_days)
    flagged = sum(1 for r in report.rows if r[5] == "true")
    print(f"{len(report.rows)} windows, {flagged} flagged; wrote {', '.join(paths)}")
    return EXIT_OK


def cmd_caa(args) -> int:
    from .certs import check_caa
    from .errors import TransientResolutionError
    from .store import Store
    store = Store(_store_dir(args))
    resolver = _resolver(args)
    domains = list(args.domains) or sorted({*store.domains()})
    records, rows, status = [], [], EXIT_OK
    for d in domains:
        try:
            pol = check_caa(d, resolver)
        except TransientResolutionError as exc:
            print(f"{d}: policy unknown ({exc})", file=sys.stderr)
            status = EXIT_PARTIAL
            continue
        recs = [f'{r.flags} {r.tag} "{r.value}"' for r in pol.records]
        records.append({"domain": pol.domain, "evaluated_at_label": pol.evaluated_at_label,
                        "restricts_issuance": pol.restricts_issuance, "permits_free_ca": pol.permits_free_ca,
                        "records": recs})
        rows.append([pol.domain, pol.evaluated_at_label or "", str(pol.restricts_issuance).lower(),
                     str(pol.permits_free_ca).lower(), " | ".join(recs)])
    if not args.no_store:
        store.append("caa.jsonl", records)
    _csv_out(rows, ["domain", "evaluated_at_label", "restricts_issuance", "permits_free_ca", "records"])
    return status


def cmd_report(args) -> int:
    from .certs import parse_time
    from .reports import REPORT_KINDS, emit_report
    from .store import Store
    store = Store(_store_dir(args))
    kinds = REPORT_KINDS if args.report_kind == "all" else [args.report_kind]
    at = parse_time(args.at) if args.at else None
    for kind in kinds:
        report, paths = emit_report(kind, store, args.out, plot=not args.no_plot, at=at,
                                    registrars=args.registrars, whois=args.whois, window_days=args.window_days)
        extra = "".join(f" {k}={v}" for k, v in sorted(report.meta.items()))
        print(f"{kind}: {len(report.rows)} rows{extra} -> {', '.join(paths)}")
    return EXIT_OK


def cmd_harness(args) -> int:
    from .harness import bundled_scenarios, load_scenario, serve
    if args.action == "list":
        for name in bundled_scenarios():
            print(name)
        return EXIT_OK
    scenario = load_scenario(args.scenario)
    if args.action == "validate":
        print(f"{scenario.name}: {len(scenario.zones)} zone names, {len(scenario.vhosts)} vhosts, "
              f"{len(scenario.timeline)} events")
        return EXIT_OK
    if args.action == "serve":
        with serve(scenario, args.dns_port, args.http_port) as handle:
            print(f"dns {handle.dns_endpoint} http {handle.http_endpoint}", flush=True)
            print("commands: 'advance <time>', 'now', 'quit'", flush=True)
            for line in sys.stdin:
                cmd, _, arg = line.strip().partition(" ")
                if cmd == "advance":
                    for ev in handle.advance_time(arg.strip()):
                        print(f"applied {ev.describe()}", flush=True)
                elif cmd == "now":
                    print(handle.clock(), flush=True)
                elif cmd in ("quit", "exit"):
                    break
        return EXIT_OK
    return run_scenario(scenario, args)


def run_scenario(scenario, args) -> int:
    """Serve a scenario, monitor its names through cycles at the given times and emit every report."""
    from .catalog import default_catalog
    from .certs import parse_time
    from .harness import serve
    from .pipeline import ingest_domains, run_cycle
    from .ratelimit import RequestLedger
    from .reports import REPORT_KINDS, emit_report
    from .signatures import load_signatures
    from .store import Store
    store = Store(_store_dir(args))
    if args.cycles:
        times = [parse_time(t) for t in args.cycles.split(",")]
    else:
        end = max([e.at for e in scenario.timeline], default=scenario.start) + args.cadence_days * 86400
        times, t = [], scenario.start
        while t <= end:
            times.append(t)
            t += args.cadence_days * 86400
    status = EXIT_OK
    with serve(scenario) as handle:
        listing = os.path.join(store.directory, "monitor.txt")
        with open(listing, "w", encoding="utf-8") as fh:
            fh.write("".join(n + "\n" for n in scenario.monitor))
        ingest_domains([listing], store)
        ledger = RequestLedger(handle.clock)
        network = handle.network(ledger=ledger)
        resolver = handle.resolver()
        catalog, sigs = default_catalog(), load_signatures()
        for t in times:
            for ev in handle.advance_time(t):
                print(f"event {ev.describe()}", file=sys.stderr)
            with store.acquire():
                summary = run_cycle(store, catalog, resolver, network, ledger, sigs, handle.clock)
            print(json.dumps(summary.to_dict(), sort_keys=True))
            if not summary.ok:
                status = EXIT_PARTIAL
    if args.out:
        for kind in REPORT_KINDS:
            emit_report(kind, store, args.out, plot=not args.no_plot)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsentinel",
                                     description="Find dangling cloud DNS records and detect their abuse.")
    parser.add_argument("--version", action="version", version=f"dsentinel {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def common(p, resolver=False, clock=False):
        p.add_argument("--store", help="store directory (default: $DSENTINEL_STORE or ./dsentinel-store)")
        if resolver:
            p.add_argument("--resolver", help="resolver endpoint HOST:PORT")
            p.add_argument("--dns-timeout", type=float, default=2.0, help="seconds per DNS attempt")
            p.add_argument("--http-via", metavar="HOST:PORT",
                           help="connect all HTTP requests to this endpoint (Host header unchanged)")
        if clock:
            p.add_argument("--virtual-clock", metavar="TIME",
                           help="fixed timestamp (ISO-8601 or epoch seconds) instead of wall time")

    p = sub.add_parser("ingest", help="add names from domain lists to the store")
    common(p)
    p.add_argument("paths", nargs="+", help="plain name lists or JSON-lines feeds")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("catalog", help="summarize the cloud catalog or match names/IPs against it")
    p.add_argument("--feed", action="append", metavar="PROVIDER=PATH", help="provider feed file (repeatable)")
    p.add_argument("--match", nargs="*", metavar="NAME_OR_IP", help="names or addresses to look up")
    p.set_defaults(func=cmd_catalog)

    p = sub.add_parser("collect", help="keep names that point into the cloud; optionally probe them")
    common(p, resolver=True, clock=True)
    p.add_argument("--names", help="name list (default: names in the store)")
    p.add_argument("--feed", action="append", metavar="PROVIDER=PATH", help="provider feed file (repeatable)")
    p.add_argument("--liveness", action="store_true", help="probe ICMP/TCP/HTTP for each name")
    p.add_argument("--dangling", action="store_true", help="classify each name as active or dangling")
    p.add_argument("--http-timeout", type=float, default=10.0, help="seconds per HTTP request")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("cycle", help="run one monitoring cycle over the store")
    common(p, resolver=True, clock=True)
    p.add_argument("--config", help="YAML run configuration")
    p.set_defaults(func=cmd_cycle)

    p = sub.add_parser("detect", help="match signatures against stored snapshots, or validate signatures")
    common(p)
    p.add_argument("--signatures", action="append", help="signature JSON-lines file (default: bundled)")
    p.add_argument("--dry-run", action="store_true", help="also apply unvalidated signatures")
    p.add_argument("--validate", action="store_true", help="validate the signatures against a benign corpus")
    p.add_argument("--corpus", help="benign corpus directory (default: bundled)")
    p.add_argument("--out", help="where to write validated signatures (default: stdout)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("cluster", help="cluster attacker identifiers found on abused pages")
    common(p)
    p.add_argument("--cutoff", type=float, default=0.95, help="distance cutoff (default 0.95)")
    p.add_argument("--linkage", choices=("single", "average", "complete"), default="average")
    p.add_argument("--out", default="reports", help="directory for graph and dendrogram exports")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("certs", help="import CT records and report issuance windows")
    common(p)
    p.add_argument("--input", help="certificate JSON-lines {names, issuer, not_before}")
    p.add_argument("--window-days", type=int, default=14)
    p.add_argument("--out", default="reports")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_certs)

    p = sub.add_parser("caa", help="evaluate CAA policies (closest ancestor)")
    common(p, resolver=True)
    p.add_argument("domains", nargs="*", help="domains to check (default: names in the store)")
    p.add_argument("--no-store", action="store_true", help="do not record results in the store")
    p.set_defaults(func=cmd_caa)

    p = sub.add_parser("report", help="emit CSV reports and figures")
    common(p)
    p.add_argument("--report-kind", default="all", help="report kind or 'all'")
    p.add_argument("--out", default="reports")
    p.add_argument("--at", help="report time (default: last cycle time)")
    p.add_argument("--registrars", help="CSV sld,registrar[,owner] for registrar_span")
    p.add_argument("--whois", help="CSV sld,created for domain_age")
    p.add_argument("--window-days", type=int, default=14)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("harness", help="mock cloud scenarios")
    hs = p.add_subparsers(dest="action", required=True, metavar="action")
    hs.add_parser("list", help="list bundled scenarios")
    v = hs.add_parser("validate", help="check a scenario file")
    v.add_argument("scenario", help="bundled name or path")
    s = hs.add_parser("serve", help="serve a scenario; read 'advance TIME' commands from stdin")
    s.add_argument("scenario")
    s.add_argument("--dns-port", type=int, default=0)
    s.add_argument("--http-port", type=int, default=0)
    r = hs.add_parser("run", help="monitor a scenario end to end and emit all reports")
    r.add_argument("scenario")
    r.add_argument("--store", help="store directory")
    r.add_argument("--cycles", help="comma-separated cycle times (default: every cadence from start)")
    r.add_argument("--cadence-days", type=float, default=7.0)
    r.add_argument("--out", help="report directory")
    r.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_harness)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ScenarioError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StoreLockedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DsentinelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
