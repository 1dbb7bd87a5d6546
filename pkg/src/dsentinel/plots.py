"""Figures for report kinds, rendered headless to PNG."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .reports import Report  # noqa: E402

# PNG text chunks are fixed so identical reports give identical files
_METADATA = {"Software": None}

TITLES = {
    "abuse_events": "Abuse events by topic",
    "hijack_durations": "Hijack duration in days",
    "sitemap_histogram": "HTML files uploaded per abused site",
    "registrar_span": "Abuse clusters spanning >= X registrars",
    "indicator_venn": "Detected hijacks by indicator combination",
    "cluster_table": "Identifier clusters by hijacked domains (top 50)",
    "cert_windows": "Single-SAN vs multi-SAN certificates per window",
    "caa_posture": "CAA posture",
    "domain_age": "Domain age of abused SLDs",
}


def _bars(ax, labels, values, xlabel, ylabel):
    ax.bar(range(len(values)), values, color="#4c72b0")
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)


def render(report: Report, path: str) -> str:
    fig, ax = plt.subplots(figsize=(7, 4), dpi=100)
    rows = report.rows
    kind = report.kind
    if not rows:
        ax.text(0.5, 0.5, "no data", ha="center", va="center", transform=ax.transAxes)
    elif kind in ("hijack_durations", "sitemap_histogram"):
        labels = [f"{r[0]}" if r[0] == "open" else f"{r[0]}-{r[1]}" for r in rows]
        _bars(ax, labels, [r[2] for r in rows], "days" if kind == "hijack_durations" else "HTML files", "sites")
    elif kind == "abuse_events":
        topics: dict[str, int] = {}
        for r in rows:
            topics[r[6]] = topics.get(r[6], 0) + 1
        names = sorted(topics)
        _bars(ax, names, [topics[n] for n in names], "topic", "abuse events")
    elif kind == "registrar_span":
        _bars(ax, [f">={r[0]}" for r in rows], [float(r[2]) * 100 for r in rows], "registrars", "% clusters")
    elif kind == "indicator_venn":
        _bars(ax, [r[0] for r in rows], [float(r[2]) * 100 for r in rows], "indicators", "% detections")
    elif kind == "cluster_table":
        top = rows[:50]
        _bars(ax, [str(r[0]) for r in top], [r[2] for r in top], "cluster rank", "hijacked domains")
    elif kind == "cert_windows":
        x = range(len(rows))
        ax.plot(x, [r[1] for r in rows], label="single-SAN")
        ax.plot(x, [r[2] for r in rows], label="multi-SAN")
        flagged = [i for i, r in enumerate(rows) if r[5] == "true"]
        ax.scatter(flagged, [rows[i][1] for i in flagged], color="red", zorder=3, label="anomaly")
        step = max(1, len(rows) // 12)
        ax.set_xticks(list(x)[::step])
        ax.set_xticklabels([r[0] for r in rows][::step], rotation=60, ha="right", fontsize=7)
        ax.set_ylabel("certificates")
        ax.legend(fontsize=7)
    elif kind == "caa_posture":
        classes = {"no CAA": 0, "free CA allowed": 0, "paid CA only": 0}
        for r in rows:
            if r[2] != "true":
                classes["no CAA"] += 1
            elif r[3] == "true":
                classes["free CA allowed"] += 1
            else:
                classes["paid CA only"] += 1
        _bars(ax, list(classes), list(classes.values()), "policy", "domains")
    elif kind == "domain_age":
        years = [int(r[2]) / 365.25 for r in rows if r[2] != ""]
        ax.hist(years, bins=range(0, int(max(years, default=1)) + 2), color="#4c72b0")
        ax.set_xlabel("age (years)")
        ax.set_ylabel("SLDs")
    ax.set_title(TITLES[kind])
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_METADATA)
    plt.close(fig)
    return path
