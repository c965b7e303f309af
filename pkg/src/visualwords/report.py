"""Report emission: CSV tables, plain-text summaries, simple SVG bars.

Evaluation artifacts contain no wall-clock numbers so identical runs
produce identical bytes; the timing table is the one exception because
measurement is its whole content.
"""

from __future__ import annotations

import csv
import io
import os
from typing import Sequence

from .pipeline import BenchRow, CvResult, EvalReport, PHASES


def eval_csv(report: EvalReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["metric", "class", "value"])
    writer.writerow(["average_rate", "", repr(report.average_rate)])
    writer.writerow(["evaluated", "", report.evaluated])
    writer.writerow(["failed", "", len(report.failed)])
    for cls in report.classes:
        value = report.per_class_recall[cls]
        writer.writerow(["recall", cls, "" if value is None else repr(value)])
    return out.getvalue()


def confusion_csv(report: EvalReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["true\\predicted", *report.classes])
    for i, cls in enumerate(report.classes):
        writer.writerow([cls, *(int(v) for v in report.confusion[i])])
    return out.getvalue()


def failed_csv(report: EvalReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["image_id", "reason"])
    for image_id, reason in report.failed:
        writer.writerow([image_id, reason])
    return out.getvalue()


def eval_text(report: EvalReport, heading: str = "") -> str:
    lines = []
    if heading:
        lines.append(heading)
    correct = sum(int(report.confusion[i][i]) for i in range(len(report.classes)))
    lines.append(
        f"average recognition rate: {report.average_rate:.2f}% "
        f"({correct}/{report.evaluated})"
    )
    if report.failed:
        lines.append(f"failed images: {len(report.failed)}")
        for image_id, reason in report.failed:
            lines.append(f"  {image_id}: {reason}")
    lines.append("")
    lines.append("per-class recall:")
    width = max(len(c) for c in report.classes)
    for cls in report.classes:
        value = report.per_class_recall[cls]
        shown = "n/a" if value is None else f"{value:.2f}%"
        lines.append(f"  {cls.ljust(width)}  {shown}")
    lines.append("")
    lines.append("confusion matrix (rows true, columns predicted):")
    header = " ".join(c.rjust(width) for c in report.classes)
    lines.append(f"  {' ' * width} {header}")
    for i, cls in enumerate(report.classes):
        cells = " ".join(str(int(v)).rjust(width) for v in report.confusion[i])
        lines.append(f"  {cls.ljust(width)} {cells}")
    return "\n".join(lines) + "\n"


def bench_csv(rows: Sequence[BenchRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["config", *PHASES, "total"])
    for row in rows:
        writer.writerow(
            [row.config.describe()]
            + [f"{row.timings[p]:.3f}" for p in (*PHASES, "total")]
        )
    return out.getvalue()


def cv_csv(result: CvResult) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["config", "mean", "fold_scores", "failed_folds", "best"])
    for i, row in enumerate(result.rows):
        scores = ";".join(
            "failed" if s is None else repr(s) for s in row.fold_scores
        )
        failed = sum(1 for s in row.fold_scores if s is None)
        writer.writerow(
            [
                row.config.describe(),
                "" if row.mean is None else repr(row.mean),
                scores,
                failed,
                1 if i == result.best_index else 0,
            ]
        )
    return out.getvalue()


def accuracy_svg(pairs: Sequence[tuple[str, float]], title: str = "") -> str:
    """Horizontal bar chart of (label, percent) pairs as a standalone SVG."""
    bar_height = 24
    gap = 8
    left = 160
    scale_width = 400
    top = 34 if title else 10
    height = top + len(pairs) * (bar_height + gap) + 10
    width = left + scale_width + 70

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{left}" y="22" font-family="sans-serif" '
            f'font-size="15" font-weight="bold">{title}</text>'
        )
    for i, (label, value) in enumerate(pairs):
        y = top + i * (bar_height + gap)
        bar = scale_width * max(0.0, min(100.0, value)) / 100.0
        parts.append(
            f'<text x="{left - 8}" y="{y + 16}" text-anchor="end" '
            f'font-family="sans-serif" font-size="13">{label}</text>'
        )
        parts.append(
            f'<rect x="{left}" y="{y}" width="{bar:.1f}" '
            f'height="{bar_height}" fill="#4878a8"/>'
        )
        parts.append(
            f'<text x="{left + bar + 6:.1f}" y="{y + 16}" '
            f'font-family="sans-serif" font-size="13">{value:.1f}%</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_eval_artifacts(
    report: EvalReport, out_dir: str, heading: str = "", svg: bool = False
) -> list[str]:
    """Write the CSV/text (and optional SVG) artifacts; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    artifacts = {
        "eval.csv": eval_csv(report),
        "confusion.csv": confusion_csv(report),
        "failed.csv": failed_csv(report),
        "eval.txt": eval_text(report, heading),
    }
    if svg:
        pairs = [
            (c, report.per_class_recall[c])
            for c in report.classes
            if report.per_class_recall[c] is not None
        ]
        artifacts["accuracy.svg"] = accuracy_svg(pairs, title="per-class recall")
    paths = []
    for name, text in artifacts.items():
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        paths.append(path)
    return paths
