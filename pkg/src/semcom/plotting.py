"""Static SVG charts from sweep and scatter CSV files.

Line charts show the median of a metric against SNR, one series per
framework, with the interquartile range shaded; one file per channel kind.
The scatter chart overlays transmitted, received and corrected keypoints.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import ConfigurationError, ParseError  # noqa: E402
from .harness import CSV_FIELDS  # noqa: E402

PLOT_KINDS = ("kpe", "p2point", "latency", "scatter_denoise")
SCATTER_FIELDS = ("view", "index", "sent_x", "sent_y", "received_x", "received_y", "denoised_x", "denoised_y")

_METRIC = {
    "kpe": ("kpe_px", "KPE (px)", False),
    "p2point": ("p2point_m", "P2Point (m)", False),
    "latency": ("total_s", "total latency (s)", True),
}
_NUMERIC = ("snr_db", "kpe_px", "chamfer_m2", "p2point_m", "t_s", "t_w", "t_o", "t_g", "total_s")
_INTEGER = ("seed", "frame", "payload_bits")

# reproducible SVG bytes: text kept as text, fixed id salt, no timestamp
_RC = {"svg.fonttype": "none", "svg.hashsalt": "semcom"}


def _read(path, required) -> tuple[list[str], list[dict]]:
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ParseError(f"{path}: cannot open: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise ParseError(f"{path}: row 1 (header): missing column(s) {missing}")
        rows = []
        for rec in reader:
            if None in rec or None in rec.values():
                raise ParseError(f"{path}: row {reader.line_num}: expected {len(header)} columns")
            rows.append((reader.line_num, rec))
    return header, rows


def _number(path, line, col, text, kind=float):
    try:
        return kind(text)
    except ValueError:
        raise ParseError(f"{path}: row {line}, column {col!r}: cannot parse {text!r} as {kind.__name__}") from None


def read_runs(path) -> list[dict]:
    """Parse a runs CSV; numeric columns are converted and checked."""
    _, rows = _read(path, CSV_FIELDS)
    out = []
    for line, rec in rows:
        r = dict(rec)
        for col in _NUMERIC:
            r[col] = _number(path, line, col, rec[col])
        for col in _INTEGER:
            r[col] = _number(path, line, col, rec[col], int)
        out.append(r)
    return out


def read_scatter(path) -> dict[str, np.ndarray]:
    """Parse a scatter CSV into ``{"sent": (N, 2), "received": ..., "denoised": ...}``."""
    _, rows = _read(path, SCATTER_FIELDS)
    if not rows:
        raise ConfigurationError(f"{path}: no rows to plot")
    vals = np.array([[_number(path, line, c, rec[c]) for c in SCATTER_FIELDS[2:]] for line, rec in rows])
    return {"sent": vals[:, 0:2], "received": vals[:, 2:4], "denoised": vals[:, 4:6]}


def _select(rows, filters: Mapping | None):
    out = [r for r in rows if r["status"] == "ok"]
    for key, want in (filters or {}).items():
        if key not in CSV_FIELDS:
            raise ConfigurationError(f"cannot filter on unknown column {key!r}")
        allowed = {want} if isinstance(want, (str, int, float)) else set(want)
        if key in _NUMERIC:
            allowed = {float(a) for a in allowed}
        out = [r for r in out if r[key] in allowed]
    return out


def metric_figures(rows, kind: str, filters: Mapping | None = None) -> dict[str, plt.Figure]:
    """One figure per channel kind, keyed by output file stem."""
    col, label, logy = _METRIC[kind]
    sel = _select(rows, filters)
    if not sel:
        raise ConfigurationError("the filter selects no successful rows; nothing to plot")
    by_channel = defaultdict(lambda: defaultdict(lambda: defaultdict(list)))
    for r in sel:
        by_channel[r["channel"]][r["framework"]][r["snr_db"]].append(r[col])
    figs = {}
    with plt.rc_context(_RC):
        for chan in sorted(by_channel):
            fig, ax = plt.subplots(figsize=(6, 4))
            for fw in sorted(by_channel[chan]):
                cells = by_channel[chan][fw]
                snr = np.array(sorted(cells))
                q = np.array([np.percentile(cells[s], [25, 50, 75]) for s in snr])
                (line,) = ax.plot(snr, q[:, 1], marker="o", label=fw)
                ax.fill_between(snr, q[:, 0], q[:, 2], color=line.get_color(), alpha=0.15, linewidth=0)
            ax.set_xlabel("SNR (dB)")
            ax.set_ylabel(label)
            if logy:
                ax.set_yscale("log")
            ax.set_title(f"{chan} channel")
            ax.grid(alpha=0.3)
            ax.legend()
            fig.tight_layout()
            figs[f"{kind}_{chan}"] = fig
    return figs


def scatter_figure(points: Mapping[str, np.ndarray]) -> plt.Figure:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        style = {"sent": ("o", 18), "received": ("x", 14), "denoised": ("+", 22)}
        for name in ("sent", "received", "denoised"):
            pts = points[name]
            marker, size = style[name]
            ax.scatter(pts[:, 0], pts[:, 1], s=size, marker=marker, label=name, alpha=0.8)
        ax.set_xlabel("u (px)")
        ax.set_ylabel("v (px)")
        ax.invert_yaxis()
        ax.legend()
        fig.tight_layout()
    return fig


def plot_emit(csv_path, kind: str, out_dir=".", filters: Mapping | None = None) -> list[Path]:
    """Write SVG charts for ``kind`` from ``csv_path`` into ``out_dir``.

    ``filters`` maps CSV columns to an allowed value or collection of values.
    Every figure is built before anything is written, so a failure leaves
    no partial output.
    """
    if kind not in PLOT_KINDS:
        raise ConfigurationError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    if kind == "scatter_denoise":
        if filters:
            raise ConfigurationError("scatter_denoise takes no filters")
        figs = {"scatter_denoise": scatter_figure(read_scatter(csv_path))}
    else:
        figs = metric_figures(read_runs(csv_path), kind, filters)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    with plt.rc_context(_RC):
        for stem, fig in figs.items():
            p = out / f"{stem}.svg"
            fig.savefig(p, format="svg", metadata={"Date": None})
            plt.close(fig)
            paths.append(p)
    return paths


def legend_labels(fig: plt.Figure) -> list[str]:
    leg = fig.axes[0].get_legend()
    return [] if leg is None else [t.get_text() for t in leg.get_texts()]

