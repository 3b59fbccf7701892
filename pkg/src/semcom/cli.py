"""Command-line entry point: ``semcom {simulate,sweep,denoise,metrics,plot}``.

Exit codes: 0 success, 2 configuration or input error, 3 no successful trials.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import channel as ch
from .correction import denoise_view
from .errors import SemcomError
from .harness import ExperimentConfig, run_trial, sweep, write_scatter_csv
from .metrics import chamfer_modified, p2point
from .plotting import PLOT_KINDS, plot_emit
from .scene import FRAMEWORKS, IMAGE_SIZE, read_ply
from .transport import DEFAULT_ETA

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_TRIALS = 3

DEFAULT_DELTA = 0.02 * math.hypot(*IMAGE_SIZE)


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if getattr(args, "config", None) else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "workers", None) is not None:
        cfg = replace(cfg, workers=args.workers)
    return cfg


def _json_default(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    raise TypeError(type(x).__name__)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    chan = cfg.channels[0]
    if args.channel is not None:
        chan = ch.ChannelConfig(args.channel, chan.snr_db, chan.rician_k, chan.seed)
    snr = args.snr if args.snr is not None else cfg.snr_list_db[0]
    rec, detail = run_trial(
        cfg, cfg.seed, args.frame, framework=args.framework, channel=chan, snr_db=snr, keep_detail=True
    )
    out = {"framework": rec.framework, "channel": rec.channel, "snr_db": rec.snr_db, "seed": rec.seed,
           "frame": rec.frame, "status": rec.status}
    if rec.metrics is not None:
        out["metrics"] = rec.metrics.to_dict()
    print(json.dumps(out, indent=2, default=_json_default))
    if args.scatter_out:
        if detail is None:
            print("no keypoint detail for this framework; scatter file not written", file=sys.stderr)
        else:
            write_scatter_csv(args.scatter_out, detail)
    return EXIT_OK if rec.status == "ok" else EXIT_NO_TRIALS


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    res = sweep(cfg, args.out)
    print(f"{res.n_ok}/{res.n_rows} trials ok; wrote {res.runs_csv} and {res.summary_csv}")
    return res.exit_code


def _read_points(path):
    """``x,y,ref_x,ref_y`` rows; returns ``(points, refs)``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = ("x", "y", "ref_x", "ref_y")
        missing = [c for c in need if c not in (reader.fieldnames or [])]
        if missing:
            raise SemcomError(f"{path}: row 1 (header): missing column(s) {missing}")
        rows = []
        for rec in reader:
            try:
                rows.append([float(rec[c]) for c in need])
            except (TypeError, ValueError):
                raise SemcomError(f"{path}: row {reader.line_num}: non-numeric value") from None
    if not rows:
        raise SemcomError(f"{path}: no points")
    a = np.array(rows)
    return a[:, :2], a[:, 2:]


def cmd_denoise(args) -> int:
    pts, refs = _read_points(args.input)
    dev = np.linalg.norm(pts - refs, axis=1)
    flags = dev > args.delta
    out = denoise_view(pts, refs, flags, args.eta, tuple(args.scale))
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "flagged"])
        for (x, y), f in zip(out, flags):
            w.writerow([repr(float(x)), repr(float(y)), int(f)])
    finally:
        if fh is not sys.stdout:
            fh.close()
    print(f"{int(flags.sum())} of {len(flags)} points flagged and corrected", file=sys.stderr)
    return EXIT_OK


def cmd_metrics(args) -> int:
    ref = read_ply(args.ref)
    test = read_ply(args.test)
    print(json.dumps({"chamfer_m2": chamfer_modified(ref, test), "p2point_m": p2point(ref, test)}, indent=2))
    return EXIT_OK


def cmd_plot(args) -> int:
    filters = {}
    for item in args.filter or []:
        key, _, value = item.partition("=")
        if not value:
            raise SemcomError(f"filter {item!r} is not of the form column=value[,value]")
        filters[key] = value.split(",")
    for p in plot_emit(args.csv, args.kind, args.out, filters or None):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semcom", description="Keypoint semantic communication simulator.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one trial and print its metrics as JSON")
    p.add_argument("--config", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--framework", choices=FRAMEWORKS)
    p.add_argument("--channel", choices=ch.CHANNEL_KINDS)
    p.add_argument("--snr", type=float, help="dB; 'inf' for a noiseless channel")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--scatter-out", type=Path, help="write sent/received/denoised keypoints as CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run a configured SNR sweep and write runs.csv and summary.csv")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("denoise", help="OT-correct points that stray more than delta from their reference")
    p.add_argument("--in", dest="input", type=Path, required=True, help="CSV with x,y,ref_x,ref_y")
    p.add_argument("--eta", type=float, default=DEFAULT_ETA)
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="flag threshold in input units")
    p.add_argument("--scale", type=float, nargs=2, default=IMAGE_SIZE, metavar=("W", "H"),
                   help="coordinate normalization for the transport cost")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("metrics", help="chamfer and P2Point between two PLY clouds")
    p.add_argument("--ref", type=Path, required=True)
    p.add_argument("--test", type=Path, required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("plot", help="SVG charts from a runs or scatter CSV")
    p.add_argument("--csv", type=Path, required=True)
    p.add_argument("--kind", choices=PLOT_KINDS, required=True)
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--filter", action="append", metavar="COLUMN=VALUE[,VALUE]")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (SemcomError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
