"""Delimited reports, prediction tables, training logs and figures.

Reports are tab-separated key/value rows that round-trip through
:func:`read_metrics_report`; figures are rendered with the Agg backend so
the pipeline works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import DomainError
from .metrics import MetricsReport

UNDEFINED = "undefined"


def write_metrics_report(report: MetricsReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = ["metric\tvalue"]
    for key, value in report.as_dict().items():
        if value is None:
            rows.append(f"{key}\t{UNDEFINED}")
        elif key == "n":
            rows.append(f"{key}\t{value}")
        else:
            rows.append(f"{key}\t{value!r}")
    path.write_text("\n".join(rows) + "\n")
    return path


# the natural verb at call sites that only ever write
emit_report = write_metrics_report


def read_metrics_report(path: str | Path) -> MetricsReport:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "metric\tvalue":
        raise DomainError(f"{path}: malformed metrics report")
    values: dict = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        key, raw = line.split("\t")
        if raw == UNDEFINED:
            values[key] = None
        elif key == "n":
            values[key] = int(raw)
        else:
            values[key] = float(raw)
    return MetricsReport(**values)


def write_predictions(rows: list[tuple[str, float, float]], path: str | Path) -> Path:
    """Rows of (video id, prediction, label) as TSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["id\tprediction\tlabel"]
    lines += [f"{vid}\t{pred!r}\t{label!r}" for vid, pred, label in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_predictions(path: str | Path) -> list[tuple[str, float, float]]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "id\tprediction\tlabel":
        raise DomainError(f"{path}: malformed predictions table")
    out = []
    for line in lines[1:]:
        if not line.strip():
            continue
        vid, pred, label = line.split("\t")
        out.append((vid, float(pred), float(label)))
    return out


def write_training_log(records: list[dict], path: str | Path) -> Path:
    """One row per optimizer step; columns from the first record's keys."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not records:
        path.write_text("")
        return path
    keys = list(records[0])
    lines = ["\t".join(keys)]
    for rec in records:
        lines.append("\t".join(repr(rec[k]) if isinstance(rec[k], float) else str(rec[k]) for k in keys))
    path.write_text("\n".join(lines) + "\n")
    return path


def emit_scatter_plot(predictions, labels, path: str | Path, title: str = "Predicted vs true severity") -> Path:
    """Prediction/label scatter with the identity line; PNG or PDF by suffix."""
    p = np.asarray(predictions, dtype=np.float64).ravel()
    g = np.asarray(labels, dtype=np.float64).ravel()
    if p.size == 0 or g.size == 0:
        raise DomainError("refusing to plot an empty prediction set")
    if p.shape != g.shape:
        raise DomainError(f"length mismatch: {p.size} predictions vs {g.size} labels")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    lo = float(min(p.min(), g.min())) - 1.0
    hi = float(max(p.max(), g.max())) + 1.0
    ax.plot([lo, hi], [lo, hi], color="gray", linewidth=1.0, linestyle="--", label="identity")
    ax.scatter(g, p, s=18, alpha=0.8)
    ax.set_xlabel("ground truth")
    ax.set_ylabel("prediction")
    ax.set_title(title)
    ax.set_xlim(lo, hi)
    ax.set_ylim(lo, hi)
    ax.legend(loc="upper left")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
