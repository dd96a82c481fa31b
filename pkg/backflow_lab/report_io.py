"""Report persistence
CSV rows in the fixed column order, lossless JSON, and an SVG plot of C(t)
and P_g(Ē(t)) with non-CP steps shaded.
"""
import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from backflow_lab import __version__
from backflow_lab.config import (
    CSV_COLUMNS,
    CSV_CONVERGED_COLUMN,
    SVG_FIGSIZE,
    SVG_HASH_SALT,
)
from backflow_lab.report import WitnessReport
from backflow_lab.utils import format_number


def _as_list(reports):
    return [reports] if isinstance(reports, WitnessReport) else list(reports)


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def emit_csv(reports, path):
    """Write one row per grid time per λ.

    The header is exactly CSV_COLUMNS; when some time point missed the gap
    target a trailing `converged` column is appended.
    """
    reports = _as_list(reports)
    flag = not all(r.converged for r in reports)
    columns = CSV_COLUMNS + ([CSV_CONVERGED_COLUMN] if flag else [])
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for report in reports:
            for row in report.csv_rows(include_converged=flag):
                writer.writerow([format_number(row[c]) for c in columns])
    return path


def emit_json(reports, path):
    """Write every report with full float precision."""
    reports = _as_list(reports)
    payload = {"version": __version__, "reports": [r.to_dict() for r in reports]}
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
    return path


def load_json(path):
    """Read reports written by emit_json."""
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    return [WitnessReport.from_dict(r) for r in payload.get("reports", [])]


def emit_svg(reports, path):
    """Plot C(t) per λ and the base-ensemble P_g(t) on one axes, non-CP steps shaded."""
    reports = _as_list(reports)
    plt.rcParams["svg.hashsalt"] = SVG_HASH_SALT
    fig, ax = plt.subplots(figsize=SVG_FIGSIZE)
    try:
        shaded = set()
        for report in reports:
            for step in report.steps:
                key = (step.t_start, step.t_end)
                if step.cp_flag is False and key not in shaded:
                    shaded.add(key)
                    ax.axvspan(step.t_start, step.t_end, color="0.85", linewidth=0)
            ax.plot(report.grid, report.c_values, marker=".", label=f"C_A(t), λ = {report.lam:g}")
            for _, t1, _ in report.backflow_intervals:
                ax.axvline(t1, color="tab:red", linewidth=0.6, alpha=0.6)
        if reports:
            ax.plot(reports[0].grid, reports[0].pg_ensemble, color="black", linestyle="--", label="P_g(ensemble)")
            ax.legend(loc="best", fontsize="small")
        ax.set_xlabel("t")
        fig.tight_layout()
        _ensure_parent(path)
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return path
