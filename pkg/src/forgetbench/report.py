"""Comparison-table emitter matching the six-column benchmark format."""

from __future__ import annotations

import csv
import io
from typing import Sequence

from .harness import ExperimentRecord

REPORT_COLUMNS = ("Method", "Acc_t", "Acc_r", "Acc_f", "ZRF", "MIA", "Time")

DISPLAY_NAMES = {
    "baseline": "Baseline",
    "retrain": "Retrain",
    "ssd": "SSD",
    "teacher": "Incompetent Teacher",
    "scrub": "SCRUB",
    "unsir": "UNSIR",
    "mislabel": "Mislabel",
}


def _row(record: ExperimentRecord, blank_time: str) -> list[str]:
    # Accuracies to 2 decimals, ZRF/MIA to 4, time to whole seconds; the
    # baseline pseudo-method did no unlearning work, so its time cell is blank.
    report = record.report
    if record.config.method == "baseline":
        time_cell = blank_time
    else:
        time_cell = str(int(round(report.time_seconds)))
    return [
        DISPLAY_NAMES.get(record.config.method, record.config.method),
        f"{report.acc_t:.2f}",
        f"{report.acc_r:.2f}",
        f"{report.acc_f:.2f}",
        f"{report.zrf:.4f}",
        f"{report.mia:.4f}",
        time_cell,
    ]


def emit_report(records: Sequence[ExperimentRecord], format: str = "markdown") -> str:
    """Render records as one comparison table; empty input yields a header-only table."""
    if format == "markdown":
        lines = [
            "| " + " | ".join(REPORT_COLUMNS) + " |",
            "|" + "|".join(" --- " for _ in REPORT_COLUMNS) + "|",
        ]
        lines += ["| " + " | ".join(_row(r, blank_time="-")) + " |" for r in records]
        return "\n".join(lines) + "\n"
    if format == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(REPORT_COLUMNS)
        for record in records:
            writer.writerow(_row(record, blank_time=""))
        return buffer.getvalue()
    raise ValueError(f"unknown report format {format!r}; expected 'markdown' or 'csv'")
