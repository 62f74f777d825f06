"""Run reports (JSON) and step traces (CSV)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .errors import GrimError

TRACE_COLUMNS = ("step", "selected_indices", "residual_sup", "support_size", "shuffle_winner")


class OutputError(GrimError, OSError):
    pass


def trace_rows(trace):
    for st in trace.steps:
        yield {
            "step": st.step,
            "selected_indices": ";".join(str(i) for i in st.new_indices),
            "residual_sup": repr(float(st.residual_sup)),
            "support_size": st.support_size,
            "shuffle_winner": st.shuffle_winner,
        }


def write_trace_csv(trace, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, lineterminator="\n")
            writer.writeheader()
            if trace is not None:
                writer.writerows(trace_rows(trace))
    except OSError as exc:
        raise OutputError(f"cannot write trace {path}: {exc.strerror}") from exc


def read_trace_csv(path) -> list:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def dump_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(report: dict, path) -> None:
    path = Path(path)
    try:
        path.write_text(dump_report(report))
    except OSError as exc:
        raise OutputError(f"cannot write report {path}: {exc.strerror}") from exc


def write_results(report: dict, trace, report_path, trace_path) -> None:
    """Write the JSON report and its trace CSV."""
    write_trace_csv(trace, trace_path)
    write_report(report, report_path)
