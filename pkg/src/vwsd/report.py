"""Report rendering: JSON / CSV / aligned-column markdown plus figures.

Every analysis writes its delimited outputs and, unless figures are disabled,
a PNG rendering of the same numbers into the output directory. Percentages
are printed with 2 decimals, similarity values with 4.
"""
from __future__ import annotations

import csv
import io
import json
import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import ConfusionReport, MetricsReport, RoundTripReport, round2, round4

_QUAD_ROWS = ("correct", "incorrect")


def slug(name: str) -> str:
    """File-system-safe version of a system/ensemble name."""
    cleaned = re.sub(r"[^A-Za-z0-9._+-]+", "-", name).strip("-")
    return cleaned or "unnamed"


def markdown_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [
        max(len(str(headers[c])), *(len(str(r[c])) for r in rows)) if rows else len(str(headers[c]))
        for c in range(len(headers))
    ]
    def fmt(cells) -> str:
        return "| " + " | ".join(str(c).ljust(w) for c, w in zip(cells, widths)) + " |"
    lines = [fmt(headers), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    lines += [fmt(r) for r in rows]
    return "\n".join(lines) + "\n"


def _csv_text(headers: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(headers)
    writer.writerows(rows)
    return buf.getvalue()


def _emit(out_dir: Path, stem: str, formats, json_doc, headers, rows) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        path = out_dir / f"{stem}.json"
        path.write_text(json.dumps(json_doc, indent=2, ensure_ascii=False) + "\n")
        written.append(path)
    if "csv" in formats:
        path = out_dir / f"{stem}.csv"
        path.write_text(_csv_text(headers, rows))
        written.append(path)
    if "markdown" in formats:
        path = out_dir / f"{stem}.md"
        path.write_text(markdown_table(headers, [[str(c) for c in r] for r in rows]))
        written.append(path)
    return written


def _save_fig(fig, out_dir: Path, stem: str) -> Path:
    path = out_dir / f"{stem}.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def write_metrics_report(
    out_dir: Path,
    reports: list[MetricsReport],
    formats=("json", "csv", "markdown"),
    figures: bool = True,
    stem: str = "eval",
) -> list[Path]:
    """One row per system: n, hit rate, MRR."""
    headers = ["System", "n", "Hit rate", "MRR"]
    rows = [
        [r.system, r.n, f"{r.hit_rate_2dp:.2f}", f"{r.mrr_2dp:.2f}"] for r in reports
    ]
    doc = [
        {
            "system": r.system,
            "n": r.n,
            "hits": r.hits,
            "hit_rate": r.hit_rate_2dp,
            "mrr": r.mrr_2dp,
            "hit_rate_exact": r.hit_rate,
            "mrr_exact": r.mrr,
        }
        for r in reports
    ]
    written = _emit(out_dir, stem, formats, doc, headers, rows)
    if figures and reports:
        fig, ax = plt.subplots(figsize=(max(4.0, 1.4 * len(reports)), 3.6))
        xs = range(len(reports))
        width = 0.38
        ax.bar([x - width / 2 for x in xs], [r.hit_rate for r in reports],
               width, label="hit rate")
        ax.bar([x + width / 2 for x in xs], [r.mrr for r in reports],
               width, label="mrr")
        ax.set_xticks(list(xs))
        ax.set_xticklabels([r.system for r in reports], rotation=20, ha="right")
        ax.set_ylabel("percent")
        ax.set_ylim(0, 100)
        ax.legend(frameon=False)
        ax.set_title("System performance")
        written.append(_save_fig(fig, out_dir, stem))
    return written


def _confusion_doc(report: ConfusionReport) -> dict:
    doc = {
        "system_a": report.system_a,
        "system_b": report.system_b,
        "n": report.n,
        "counts": [list(row) for row in report.counts],
    }
    if report.quadrant_means is not None:
        doc["quadrant_means"] = [
            [None if m is None else m for m in row] for row in report.quadrant_means
        ]
        doc["quadrant_means_4dp"] = [
            [None if m is None else round4(m) for m in row]
            for row in report.quadrant_means
        ]
    return doc


def write_confusion_report(
    out_dir: Path,
    report: ConfusionReport,
    formats=("json", "csv", "markdown"),
    figures: bool = True,
    stem: str | None = None,
) -> list[Path]:
    """2x2 instance counts, optionally with per-quadrant similarity-gap means."""
    stem = stem or f"confusion_{slug(report.system_a)}_vs_{slug(report.system_b)}"
    headers = [f"{report.system_a} \\ {report.system_b}", "correct", "incorrect"]
    rows = [
        [label, report.counts[i][0], report.counts[i][1]]
        for i, label in enumerate(_QUAD_ROWS)
    ]
    if report.quadrant_means is not None:
        def cell(m):
            return "-" if m is None else f"{round4(m):.4f}"
        rows.append(["mean gap (correct)",
                     cell(report.quadrant_means[0][0]), cell(report.quadrant_means[0][1])])
        rows.append(["mean gap (incorrect)",
                     cell(report.quadrant_means[1][0]), cell(report.quadrant_means[1][1])])
    written = _emit(out_dir, stem, formats, _confusion_doc(report), headers, rows)
    if figures:
        fig, ax = plt.subplots(figsize=(4.6, 4.0))
        counts = [[report.counts[i][j] for j in (0, 1)] for i in (0, 1)]
        im = ax.imshow(counts, cmap="Blues")
        for i in (0, 1):
            for j in (0, 1):
                label = str(counts[i][j])
                if report.quadrant_means is not None:
                    m = report.quadrant_means[i][j]
                    if m is not None:
                        label += f"\n{round4(m):+.4f}"
                ax.text(j, i, label, ha="center", va="center")
        ax.set_xticks([0, 1], [f"{report.system_b}\ncorrect", f"{report.system_b}\nincorrect"])
        ax.set_yticks([0, 1], [f"{report.system_a}\ncorrect", f"{report.system_a}\nincorrect"])
        ax.set_title(f"n = {report.n}")
        fig.colorbar(im, ax=ax, shrink=0.8)
        written.append(_save_fig(fig, out_dir, stem))
    return written


def write_meansim_report(
    out_dir: Path,
    system: str,
    mean_gold: float,
    mean_all: float,
    formats=("json", "csv", "markdown"),
    figures: bool = True,
) -> list[Path]:
    """Mean cosine of the query text to the gold image vs to all candidates."""
    stem = f"meansim_{slug(system)}"
    headers = ["System", "sim(text, gold img)", "sim(text, all imgs)"]
    rows = [[system, f"{round4(mean_gold):.4f}", f"{round4(mean_all):.4f}"]]
    doc = {
        "system": system,
        "mean_sim_gold": round4(mean_gold),
        "mean_sim_all": round4(mean_all),
        "mean_sim_gold_exact": mean_gold,
        "mean_sim_all_exact": mean_all,
    }
    written = _emit(out_dir, stem, formats, doc, headers, rows)
    if figures:
        fig, ax = plt.subplots(figsize=(3.6, 3.2))
        ax.bar(["gold", "all"], [mean_gold, mean_all], color=["#2a6fbb", "#9dbfdd"])
        ax.set_ylabel("mean cosine")
        ax.set_title(system)
        written.append(_save_fig(fig, out_dir, stem))
    return written


def write_roundtrip_report(
    out_dir: Path,
    report: RoundTripReport,
    formats=("json", "csv", "markdown"),
    figures: bool = True,
) -> list[Path]:
    """Round-trip-translation partition sizes and per-group mean similarity."""
    stem = f"roundtrip_{slug(report.system)}"
    def cell(m):
        return "-" if m is None else f"{round4(m):.4f}"
    headers = ["Group", "Instances", "Mean sim(text, gold)"]
    rows = [
        ["identical round trip", report.identical_count, cell(report.identical_mean_sim)],
        ["different round trip", report.different_count, cell(report.different_mean_sim)],
    ]
    doc = {
        "system": report.system,
        "identical_count": report.identical_count,
        "different_count": report.different_count,
        "identical_mean_sim": report.identical_mean_sim,
        "different_mean_sim": report.different_mean_sim,
    }
    written = _emit(out_dir, stem, formats, doc, headers, rows)
    if figures:
        fig, ax = plt.subplots(figsize=(4.2, 3.2))
        means = [report.identical_mean_sim or 0.0, report.different_mean_sim or 0.0]
        ax.bar(["identical", "different"], means, color=["#2a9d5c", "#c76f3b"])
        for x, (mean, count) in enumerate(
            zip(means, [report.identical_count, report.different_count])
        ):
            ax.text(x, mean, f"n={count}", ha="center", va="bottom")
        ax.set_ylabel("mean foreign-space cosine")
        ax.set_title(report.system)
        written.append(_save_fig(fig, out_dir, stem))
    return written
