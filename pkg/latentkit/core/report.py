"""
Report Emission: Deterministic CSV and text output for every subcommand.

CSV output is pure data under the owning module's column contract. Text
reports open with a provenance block (toolkit version, subcommand, flags,
seed) followed by summary lines and optional per-row lines.
"""
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Any, BinaryIO, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from latentkit import __version__

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.9g"
RULE = "=" * 60
THIN_RULE = "-" * 60


@dataclass
class Report:
    subcommand: str
    flags: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    title: str = ""
    summary: List[Tuple[str, Any]] = field(default_factory=list)
    columns: List[str] = field(default_factory=list)
    rows: List[Dict[str, Any]] = field(default_factory=list)

    def add(self, key: str, value: Any) -> "Report":
        self.summary.append((key, value))
        return self


def format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "nan"
        return FLOAT_FORMAT % value
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def provenance_lines(report: Report) -> List[str]:
    flags = " ".join(f"--{k}={format_value(v)}" for k, v in sorted(report.flags.items()))
    return [
        f"version={__version__}",
        f"subcommand={report.subcommand}",
        f"flags={flags}",
        f"seed={format_value(report.seed)}",
    ]


def render_csv(report: Report) -> bytes:
    frame = pd.DataFrame(report.rows, columns=report.columns)
    text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return text.encode("utf-8")


def render_text(report: Report) -> bytes:
    title = f"LATENTKIT {report.title or report.subcommand}".upper()
    lines = [RULE, f"  {title}", RULE]
    lines += provenance_lines(report)
    if report.summary:
        lines.append(THIN_RULE)
        lines += [f"{key}={format_value(value)}" for key, value in report.summary]
    if report.rows:
        lines.append(THIN_RULE)
        columns = report.columns or list(report.rows[0])
        for row in report.rows:
            lines.append(" ".join(f"{c}={format_value(row.get(c))}" for c in columns))
    lines.append(RULE)
    return ("\n".join(lines) + "\n").encode("utf-8")


def emit_report(report: Report, fmt: str, sink: BinaryIO) -> int:
    """Write the report as "csv" or "text"; returns the number of bytes written."""
    if fmt == "csv":
        payload = render_csv(report)
    elif fmt == "text":
        payload = render_text(report)
    else:
        raise ValueError(f"Unknown report format: {fmt}. Choose from ['csv', 'text']")
    written = sink.write(payload)
    if hasattr(sink, "flush"):
        sink.flush()
    logger.debug(f"Emitted {fmt} report for {report.subcommand} ({written} bytes)")
    return written


def emit_to_path(report: Report, fmt: str, path: Optional[str], stdout: BinaryIO) -> int:
    """Write to `path`, or to `stdout` when path is None or "-"."""
    if path is None or path == "-":
        return emit_report(report, fmt, stdout)
    with open(path, "wb") as f:
        return emit_report(report, fmt, f)


def report_bytes(report: Report, fmt: str) -> bytes:
    buf = io.BytesIO()
    emit_report(report, fmt, buf)
    return buf.getvalue()
