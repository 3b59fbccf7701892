"""End-to-end trials and SNR sweeps over frameworks and channels.

Frameworks:

``imagecom``
    Dense baseline.  Every view ships a full image's worth of bits; the
    simulation sends the projections of all ground-truth cloud samples and
    triangulates them at the receiver.
``gscs`` / ``gscm``
    Nine keypoints per view plus a knowledge base sent once.  The two differ
    only in composition order, so their geometry metrics tie here.
``gscs_ot`` / ``gscm_ot``
    As above, with selective OT correction of the received keypoints.

Random streams are keyed by ``(seed, frame, view, block)``, so a trial's
result does not depend on which other trials run or in which order.
Frameworks, channel kinds and SNRs that share a seed see the same underlying
normal draws.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from . import channel as ch
from .correction import DenoiserConfig, selective_denoise
from .errors import ConfigurationError
from .metrics import (
    MetricsReport,
    build_tree,
    cloud_errors,
    kpe,
    latency_breakdown,
    wireless_time,
)
from .scene import (
    FRAMEWORKS,
    KnowledgeBase,
    MotionParams,
    build_knowledge_base,
    build_point_cloud,
    generate_scene,
    ground_truth_cloud,
    project_points,
    render_keypoint_frame,
    triangulate,
    triangulate_points,
)

log = logging.getLogger(__name__)

CSV_FIELDS = (
    "framework",
    "channel",
    "snr_db",
    "seed",
    "frame",
    "kpe_px",
    "chamfer_m2",
    "p2point_m",
    "t_s",
    "t_w",
    "t_o",
    "t_g",
    "total_s",
    "payload_bits",
    "status",
)
SUMMARY_METRICS = ("kpe_px", "chamfer_m2", "p2point_m", "total_s")

DEFAULT_LINK_RATE = 160e6
DEFAULT_T_S = 0.05
DEFAULT_T_G = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: the cross product of frameworks, channels and SNRs.

    ``t_o`` fixes the OT time instead of measuring it; set it when outputs
    must be byte-reproducible.
    """

    frameworks: tuple[str, ...] = ("gscs", "gscs_ot")
    channels: tuple[ch.ChannelConfig, ...] = (ch.ChannelConfig("awgn"),)
    snr_list_db: tuple[float, ...] = (0.0, 10.0, 20.0)
    trials: int = 10
    frames: int = 1
    seed: int = 0
    motion: MotionParams = field(default_factory=MotionParams)
    denoiser: DenoiserConfig | None = field(default_factory=DenoiserConfig)
    link_rate_bps: float = DEFAULT_LINK_RATE
    t_s: float = DEFAULT_T_S
    t_g: float = DEFAULT_T_G
    t_o: float | None = None
    extraction_sigma: float = 0.0
    workers: int = 1

    def __post_init__(self):
        fw = (self.frameworks,) if isinstance(self.frameworks, str) else tuple(self.frameworks)
        object.__setattr__(self, "frameworks", fw)
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "snr_list_db", tuple(float(s) for s in self.snr_list_db))
        bad = [f for f in fw if f not in FRAMEWORKS]
        if bad or not fw:
            raise ConfigurationError(f"unknown framework(s) {bad}; expected some of {FRAMEWORKS}")
        if not self.channels:
            raise ConfigurationError("at least one channel is required")
        if not self.snr_list_db:
            raise ConfigurationError("snr_list_db must be nonempty")
        if self.trials < 1 or self.frames < 1:
            raise ConfigurationError("trials and frames must be >= 1")
        if any(f.endswith("_ot") for f in fw) and self.denoiser is None:
            raise ConfigurationError("OT frameworks need a denoiser configuration")
        if self.link_rate_bps <= 0:
            raise ConfigurationError("link_rate_bps must be positive")
        if min(self.t_s, self.t_g) < 0 or (self.t_o is not None and self.t_o < 0):
            raise ConfigurationError("latency constants must be >= 0")
        if self.extraction_sigma < 0:
            raise ConfigurationError("extraction_sigma must be >= 0")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigurationError("workers must be an integer >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        kw: dict = {}
        try:
            if "framework" in d:
                kw["frameworks"] = d.pop("framework")
            if "frameworks" in d:
                kw["frameworks"] = d.pop("frameworks")
            chans = d.pop("channels", None)
            if chans is None and "channel" in d:
                chans = d.pop("channel")
                if not isinstance(chans, list):
                    chans = [chans]
            if chans is not None:
                chans = [c if isinstance(c, dict) else {"kind": c} for c in chans]
                if "seed" not in d:
                    seeds = {c["seed"] for c in chans if "seed" in c}
                    if len(seeds) == 1:
                        kw["seed"] = int(seeds.pop())
                if "snr_list_db" not in d:
                    snrs = [c["snr_db"] for c in chans if "snr_db" in c]
                    if snrs:
                        kw["snr_list_db"] = sorted({float(s) for s in snrs})
                # snr values are lifted into snr_list_db; identical kinds collapse
                kinds = (ch.ChannelConfig.from_dict({k: v for k, v in c.items() if k != "snr_db"}) for c in chans)
                kw["channels"] = tuple(dict.fromkeys(kinds))
            if "motion" in d:
                kw["motion"] = MotionParams.from_dict(d.pop("motion"))
            if "denoiser" in d:
                den = d.pop("denoiser")
                kw["denoiser"] = None if den is None else DenoiserConfig.from_dict(den)
            lat = d.pop("latency", None) or d.pop("latency_constants", None) or {}
            for key in ("t_s", "t_g", "t_o"):
                if key in lat:
                    kw[key] = lat[key]
            for key in ("snr_list_db", "trials", "frames", "seed", "link_rate_bps", "extraction_sigma", "workers"):
                if key in d:
                    kw[key] = d.pop(key)
        except (TypeError, KeyError) as exc:
            raise ConfigurationError(f"malformed experiment config: {exc}") from None
        if d:
            raise ConfigurationError(f"unknown experiment fields: {sorted(d)}")
        return cls(**kw)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "frameworks": list(self.frameworks),
            "channels": [c.to_dict() for c in self.channels],
            "snr_list_db": list(self.snr_list_db),
            "trials": self.trials,
            "frames": self.frames,
            "seed": self.seed,
            "motion": self.motion.to_dict(),
            "denoiser": None if self.denoiser is None else self.denoiser.to_dict(),
            "link_rate_bps": self.link_rate_bps,
            "latency": {"t_s": self.t_s, "t_g": self.t_g, "t_o": self.t_o},
            "extraction_sigma": self.extraction_sigma,
            "workers": self.workers,
        }


@dataclass
class RunRecord:
    framework: str
    channel: str
    snr_db: float
    seed: int
    frame: int
    metrics: MetricsReport | None
    status: str = "ok"

    def row(self) -> dict:
        r = {
            "framework": self.framework,
            "channel": self.channel,
            "snr_db": repr(float(self.snr_db)),
            "seed": str(self.seed),
            "frame": str(self.frame),
            "status": self.status,
        }
        m = self.metrics
        if m is None:
            r.update({k: "" for k in CSV_FIELDS if k not in r})
            return r
        lat = m.latency
        vals = {
            "kpe_px": m.kpe,
            "chamfer_m2": m.chamfer,
            "p2point_m": m.p2point,
            "t_s": lat.t_semantic,
            "t_w": lat.t_wireless,
            "t_o": lat.t_ot,
            "t_g": lat.t_generation,
            "total_s": lat.total,
        }
        r.update({k: repr(float(v)) for k, v in vals.items()})
        r["payload_bits"] = str(m.payload_bits)
        return r


@dataclass
class TrialDetail:
    """Intermediate products of a GSC trial, kept for plots and diagnostics."""

    sent: list
    received: list
    corrected: list
    flags: object = None


# ---------------------------------------------------------------------------
# Trial pipeline
# ---------------------------------------------------------------------------


@lru_cache(maxsize=4)
def _knowledge_base(motion: MotionParams) -> KnowledgeBase:
    return build_knowledge_base(motion)


@lru_cache(maxsize=64)
def _truth(motion: MotionParams, frame: int):
    """Ground-truth cloud of a frame and its k-d tree (deterministic, so cached)."""
    cloud = ground_truth_cloud(generate_scene(frame, motion), motion)
    return cloud, build_tree(cloud.points)


@lru_cache(maxsize=4)
def _dense_keypoint_index(motion: MotionParams) -> np.ndarray:
    """Index of the ground-truth cloud sample that coincides with each keypoint.

    Arm joints are link endpoints and box centers are the first box sample,
    so these indices are fixed by the template layout, not by the pose.
    """
    scene = generate_scene(0, motion)
    cloud = ground_truth_cloud(scene, motion).points
    d = ((cloud[None, :, :] - scene.keypoints[:, None, :]) ** 2).sum(axis=2)
    return d.argmin(axis=1)


def _gsc_trial(cfg, framework, chan, seed, frame, scene, kb, keep_detail):
    cams = kb.cameras
    sent, received = [], []
    for cam in cams:
        rng_x = ch.substream(seed, frame, cam.view_id, ch.BLOCK_EXTRACTION)
        f = render_keypoint_frame(scene, cam, cfg.extraction_sigma, rng_x)
        # the transmitter's reference is what it actually encodes
        f = f.copy(keypoints=ch.quantize_pixels(f.keypoints))
        sent.append(f)
        rng = ch.substream(seed, frame, cam.view_id, ch.BLOCK_KEYPOINTS)
        received.append(ch.decode_keypoints(ch.transmit(ch.encode_keypoints(f, cam.image_size), chan, rng), cam.image_size))

    t_o = 0.0
    corrected, flags = received, None
    if framework.endswith("_ot"):
        start = time.perf_counter()
        corrected, flags = selective_denoise(
            received, cfg.denoiser, kb, oracle_frames=sent, image_size=cams[0].image_size, return_flags=True
        )
        t_o = time.perf_counter() - start
        if cfg.t_o is not None:
            t_o = cfg.t_o

    tri = triangulate(corrected, cams)
    cloud = build_point_cloud(tri, kb, framework, box_size=cfg.motion.box_size)
    truth, tree = _truth(cfg.motion, frame)

    bits = sum(ch.keypoint_payload_bits() for _ in cams)
    if frame == 0:
        bits += kb.bit_size
    latency = latency_breakdown(cfg.t_s, wireless_time(bits, cfg.link_rate_bps), t_o, cfg.t_g)
    k = kpe(np.stack([f.keypoints for f in sent]), np.stack([f.keypoints for f in corrected]))
    report = MetricsReport(k, *cloud_errors(truth, cloud, tree), latency, bits)
    detail = TrialDetail(sent, received, corrected, flags) if keep_detail else None
    return report, detail


def _imagecom_trial(cfg, chan, seed, frame, scene, kb):
    cams = kb.cameras
    truth, tree = _truth(cfg.motion, frame)
    kp_idx = _dense_keypoint_index(cfg.motion)
    tx, rx = [], []
    for cam in cams:
        px = project_points(cam, truth.points)
        tx.append(ch.quantize_pixels(px[kp_idx]))
        rng = ch.substream(seed, frame, cam.view_id, ch.BLOCK_DENSE)
        rx.append(ch.decode_dense(ch.transmit(ch.encode_dense(px, cam.image_size), chan, rng)))
    rx = np.stack(rx)
    tri = triangulate_points(rx, cams)
    cloud = build_point_cloud(None, None, "imagecom", dense=tri.points[tri.valid])

    k = kpe(np.stack(tx), rx[:, kp_idx, :])
    bits = sum(ch.dense_payload_bits(cam.image_size) for cam in cams)
    latency = latency_breakdown(0.0, wireless_time(bits, cfg.link_rate_bps), 0.0, 0.0)
    return MetricsReport(k, *cloud_errors(truth, cloud, tree), latency, bits)


def run_trial(
    cfg: ExperimentConfig,
    seed: int,
    frame: int = 0,
    *,
    framework: str | None = None,
    channel: ch.ChannelConfig | None = None,
    snr_db: float | None = None,
    keep_detail: bool = False,
):
    """Run one seeded trial and return its :class:`RunRecord`.

    ``framework`` and ``channel`` default to the first entries of ``cfg``;
    ``snr_db`` overrides the channel's SNR.  Failures are reported through
    ``status`` instead of raising.  With ``keep_detail`` a ``(record, detail)``
    pair is returned (detail is None for ``imagecom``).
    """
    framework = framework or cfg.frameworks[0]
    chan = channel or cfg.channels[0]
    if snr_db is not None:
        chan = ch.ChannelConfig(chan.kind, snr_db, chan.rician_k, chan.seed)
    detail = None
    try:
        if framework not in FRAMEWORKS:
            raise ConfigurationError(f"unknown framework {framework!r}")
        kb = _knowledge_base(cfg.motion)
        scene = generate_scene(frame, cfg.motion)
        if framework == "imagecom":
            report = _imagecom_trial(cfg, chan, seed, frame, scene, kb)
        else:
            report, detail = _gsc_trial(cfg, framework, chan, seed, frame, scene, kb, keep_detail)
        rec = RunRecord(framework, chan.kind, chan.snr_db, seed, frame, report)
    except Exception as exc:  # one bad trial must not abort a sweep
        log.warning("trial %s/%s/%s seed=%s frame=%s failed: %s", framework, chan.kind, chan.snr_db, seed, frame, exc)
        rec = RunRecord(framework, chan.kind, chan.snr_db, seed, frame, None, f"error:{type(exc).__name__}")
    return (rec, detail) if keep_detail else rec


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def _tasks(cfg: ExperimentConfig):
    for framework in cfg.frameworks:
        for chan in cfg.channels:
            for snr in cfg.snr_list_db:
                for trial in range(cfg.trials):
                    for frame in range(cfg.frames):
                        yield framework, chan, snr, cfg.seed + trial, frame


def _run_task(args):
    cfg, (framework, chan, snr, seed, frame) = args
    return run_trial(cfg, seed, frame, framework=framework, channel=chan, snr_db=snr)


def _sort_key(cfg: ExperimentConfig, rec: RunRecord):
    kinds = [c.kind for c in cfg.channels]
    return (cfg.frameworks.index(rec.framework), kinds.index(rec.channel), rec.snr_db, rec.seed, rec.frame)


def run_records(cfg: ExperimentConfig, workers: int | None = None) -> list[RunRecord]:
    """Every trial of ``cfg``, sorted by framework, channel, SNR, seed and frame."""
    workers = cfg.workers if workers is None else workers
    tasks = [(cfg, t) for t in _tasks(cfg)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        records = [_run_task(t) for t in tasks]
    return sorted(records, key=lambda r: _sort_key(cfg, r))


def write_records(path: str | Path, records: Sequence[RunRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for rec in records:
            w.writerow(rec.row())


def summarize(records: Sequence[RunRecord]) -> list[dict]:
    """Median and interquartile range of each metric per (framework, channel, snr)."""
    cells: dict[tuple, list[dict]] = {}
    for rec in records:
        cells.setdefault((rec.framework, rec.channel, rec.snr_db), []).append(rec)
    out = []
    for (fw, kind, snr), recs in cells.items():
        ok = [r.row() for r in recs if r.status == "ok"]
        row = {"framework": fw, "channel": kind, "snr_db": repr(float(snr)), "n": str(len(recs)), "n_ok": str(len(ok))}
        for m in SUMMARY_METRICS:
            vals = np.array([float(r[m]) for r in ok])
            if len(vals):
                q25, med, q75 = np.percentile(vals, [25, 50, 75])
            else:
                q25 = med = q75 = math.nan
            row.update({f"{m}_median": repr(float(med)), f"{m}_q25": repr(float(q25)), f"{m}_q75": repr(float(q75))})
        out.append(row)
    return out


@dataclass
class SweepResult:
    runs_csv: Path
    summary_csv: Path
    n_rows: int
    n_ok: int
    summary: list[dict]

    @property
    def exit_code(self) -> int:
        return 0 if self.n_ok > 0 else 3


def sweep(cfg: ExperimentConfig, out_dir: str | Path, workers: int | None = None) -> SweepResult:
    """Run every trial of ``cfg`` and write ``runs.csv`` and ``summary.csv`` to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = run_records(cfg, workers)
    runs = out / "runs.csv"
    write_records(runs, records)
    summary = summarize(records)
    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(summary[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(summary)
    n_ok = sum(r.status == "ok" for r in records)
    log.info("sweep wrote %d rows (%d ok) to %s", len(records), n_ok, os.fspath(out))
    return SweepResult(runs, summary_path, len(records), n_ok, summary)


def write_scatter_csv(path: str | Path, detail: TrialDetail) -> None:
    """Per-keypoint sent / received / corrected pixel positions of one GSC trial."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["view", "index", "sent_x", "sent_y", "received_x", "received_y", "denoised_x", "denoised_y"])
        for s, r, c in zip(detail.sent, detail.received, detail.corrected):
            for k in range(len(s.keypoints)):
                w.writerow(
                    [s.view_id, k]
                    + [repr(float(v)) for v in (*s.keypoints[k], *r.keypoints[k], *c.keypoints[k])]
                )
