"""Report emission: evaluation reports and region rankings as CSV, JSON or SVG."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .errors import InputError
from .evaluate import EvalReport, RegionRanking

__all__ = ["emit_report", "read_report", "connectivity_svg", "REPORT_FIELDS"]

FORMATS = ("csv", "json", "svg")
REPORT_FIELDS = ("connectivity_kind", "acc", "sen", "spe", "split_seed", "train_fraction",
                 "tp", "tn", "fp", "fn", "positive")
_INT_FIELDS = {"split_seed", "tp", "tn", "fp", "fn"}
_FLOAT_FIELDS = {"acc", "sen", "spe", "train_fraction"}


def _reports(obj) -> list[EvalReport]:
    items = [obj] if isinstance(obj, EvalReport) else list(obj)
    if not items or not all(isinstance(r, EvalReport) for r in items):
        raise InputError("expected an EvalReport or a non-empty list of them")
    return items


def _ranking_json(r: RegionRanking) -> dict:
    return {
        "groups": list(r.groups),
        "means": np.asarray(r.means).tolist(),
        "diff": np.asarray(r.diff).tolist(),
        "top_k": list(r.top_k),
    }


def _ranking_csv(r: RegionRanking) -> str:
    rank = {node: i + 1 for i, node in enumerate(r.top_k)}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node", f"mean_{r.groups[0]}", f"mean_{r.groups[1]}", "diff", "rank"])
    for v in range(len(r.diff)):
        w.writerow([v, repr(float(r.means[0][v])), repr(float(r.means[1][v])), repr(float(r.diff[v])), rank.get(v, "")])
    return buf.getvalue()


def _reports_csv(reports: list[EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        row = r.to_dict()
        w.writerow({k: repr(row[k]) if k in _FLOAT_FIELDS else row[k] for k in REPORT_FIELDS})
    return buf.getvalue()


def connectivity_svg(matrix, highlight=(), size: int = 480, labels=None) -> str:
    """Circular node layout; edge opacity is proportional to ``|matrix|``.

    Nodes listed in ``highlight`` are drawn with class ``highlight``.
    """
    c = np.abs(np.asarray(matrix, dtype=float))
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise InputError(f"matrix must be square, got shape {c.shape}")
    n = c.shape[0]
    highlight = {int(v) for v in highlight}
    if any(not 0 <= v < n for v in highlight):
        raise InputError(f"highlighted nodes must lie in 0..{n - 1}")
    labels = [str(v) for v in range(n)] if labels is None else [str(x) for x in labels]
    np.fill_diagonal(c, 0.0)
    top = c.max() if c.size else 0.0
    centre, radius = size / 2, size / 2 - 40
    angle = 2 * math.pi * np.arange(n) / n - math.pi / 2
    xs, ys = centre + radius * np.cos(angle), centre + radius * np.sin(angle)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        "<style>.node{fill:#9aa5b1}.highlight{fill:#d64545}text{font:10px sans-serif}</style>",
        '<g class="edges" stroke="#1f3b57">',
    ]
    for i in range(n):
        for j in range(i + 1, n):
            if c[i, j] > 0 and top > 0:
                out.append(
                    f'<line x1="{xs[i]:.2f}" y1="{ys[i]:.2f}" x2="{xs[j]:.2f}" y2="{ys[j]:.2f}" '
                    f'stroke-opacity="{c[i, j] / top:.4f}"/>'
                )
    out.append("</g>")
    out.append('<g class="nodes">')
    for v in range(n):
        cls = "highlight" if v in highlight else "node"
        out.append(f'<circle class="{cls}" cx="{xs[v]:.2f}" cy="{ys[v]:.2f}" r="8"/>')
        out.append(f'<text x="{xs[v] + 10:.2f}" y="{ys[v] - 10:.2f}">{escape(labels[v])}</text>')
    out.append("</g></svg>")
    return "\n".join(out) + "\n"


def emit_report(obj, path, fmt: str | None = None, matrix=None) -> Path:
    """Write an EvalReport (or list of them) or a RegionRanking.

    ``fmt`` defaults to the file extension.  SVG needs a RegionRanking plus
    the connectivity ``matrix`` to draw; its top-k nodes are highlighted.
    """
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".").lower()
    if fmt not in FORMATS:
        raise InputError(f"format must be one of {FORMATS}, got {fmt!r}")
    if isinstance(obj, RegionRanking):
        if fmt == "json":
            text = json.dumps(_ranking_json(obj), indent=2)
        elif fmt == "csv":
            text = _ranking_csv(obj)
        else:
            if matrix is None:
                raise InputError("SVG output needs the connectivity matrix to draw")
            text = connectivity_svg(matrix, obj.top_k)
    else:
        reports = _reports(obj)
        if fmt == "svg":
            raise InputError("SVG output is only defined for region rankings")
        if fmt == "json":
            text = json.dumps([r.to_dict() for r in reports], indent=2)
        else:
            text = _reports_csv(reports)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def read_report(path) -> list[EvalReport]:
    """Read back evaluation reports written by :func:`emit_report` (CSV or JSON)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        rows = json.loads(text)
    else:
        rows = []
        for row in csv.DictReader(io.StringIO(text)):
            rows.append({
                k: int(v) if k in _INT_FIELDS else float(v) if k in _FLOAT_FIELDS else v
                for k, v in row.items()
            })
    return [EvalReport(**row) for row in rows]
