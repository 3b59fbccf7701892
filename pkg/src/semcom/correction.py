"""Selective correction of received keypoints across the camera ring.

A keypoint in view ``i`` is flagged when it sits farther than ``delta`` pixels
from the midpoint of the same keypoint in views ``i - n`` and ``i + n``.  Only
flagged keypoints are replaced, by their barycentric image under the combined
relaxed transport plan between the view's received keypoints and a reference
target set.  Unflagged keypoints pass through untouched.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import transport
from .errors import ConfigurationError, ContractViolation
from .scene import IMAGE_SIZE, KeypointFrame, KnowledgeBase, project_points

TARGET_MODES = ("neighbor_interp", "knowledge_base", "oracle")


@dataclass(frozen=True)
class DenoiserConfig:
    """Settings of the selective OT denoiser.

    ``delta`` (pixels) overrides ``delta_frac``, which is a fraction of the image
    diagonal.  ``oracle`` targets need ``allow_oracle=True``; they exist for
    evaluation against the transmitted keypoints only.
    """

    eta: float = transport.DEFAULT_ETA
    delta_frac: float = 0.02
    delta: float | None = None
    view_offset: int = 1
    target_mode: str = "neighbor_interp"
    wrap: bool = True
    allow_oracle: bool = False

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigurationError("eta must be > 0")
        if self.delta is not None and not self.delta > 0:
            raise ConfigurationError("delta must be > 0")
        if self.delta is None and not self.delta_frac > 0:
            raise ConfigurationError("delta_frac must be > 0")
        if int(self.view_offset) != self.view_offset or self.view_offset < 1:
            raise ConfigurationError("view_offset must be an integer >= 1")
        if self.target_mode not in TARGET_MODES:
            raise ConfigurationError(f"target_mode must be one of {TARGET_MODES}")

    def delta_px(self, image_size=IMAGE_SIZE) -> float:
        if self.delta is not None:
            return float(self.delta)
        return self.delta_frac * math.hypot(*image_size)

    def to_dict(self) -> dict:
        d = {
            "eta": self.eta,
            "delta_frac": self.delta_frac,
            "view_offset": self.view_offset,
            "target_mode": self.target_mode,
        }
        if self.delta is not None:
            d["delta"] = self.delta
        if not self.wrap:
            d["wrap"] = False
        if self.allow_oracle:
            d["allow_oracle"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        known = {"eta", "delta_frac", "delta", "view_offset", "target_mode", "wrap", "allow_oracle"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown denoiser fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class FlagSet:
    """``flags[v, k]`` is True when keypoint ``k`` of the ``v``-th view is inconsistent.

    ``deviation`` holds the pixel distance to the neighbor midpoint (NaN where
    undefined); ``defined`` is False where a neighbor was missing, and such
    entries are flagged.
    """

    flags: np.ndarray
    deviation: np.ndarray
    defined: np.ndarray
    delta: float
    view_offset: int

    @property
    def count(self) -> int:
        return int(self.flags.sum())


def _ordered(frames: Sequence[KeypointFrame]) -> list[KeypointFrame]:
    frames = sorted(frames, key=lambda f: f.view_id)
    ids = [f.view_id for f in frames]
    if len(set(ids)) != len(ids):
        raise ContractViolation("duplicate view ids")
    return frames


def _neighbor_midpoints(kp: np.ndarray, valid: np.ndarray, n: int, wrap: bool):
    """Midpoints of views ``i - n`` and ``i + n`` plus a mask of where they exist."""
    n_views = len(kp)
    idx = np.arange(n_views)
    lo, hi = idx - n, idx + n
    if wrap:
        lo, hi = lo % n_views, hi % n_views
        has = np.ones(n_views, dtype=bool)
    else:
        has = (lo >= 0) & (hi < n_views)
        lo, hi = np.clip(lo, 0, n_views - 1), np.clip(hi, 0, n_views - 1)
    mid = 0.5 * (kp[lo] + kp[hi])
    defined = has[:, None] & valid[lo] & valid[hi]
    mid[~defined] = np.nan
    return mid, defined


def consistency_flags(frames: Sequence[KeypointFrame], view_offset: int = 1, delta: float = 26.83, wrap: bool = True) -> FlagSet:
    frames = _ordered(frames)
    if len(frames) < 2 * view_offset + 1 and not wrap:
        raise ContractViolation("not enough views for the requested offset")
    kp = np.stack([f.keypoints for f in frames])
    valid = np.stack([f.validity for f in frames])
    mid, defined = _neighbor_midpoints(kp, valid, view_offset, wrap)
    defined &= valid
    dev = np.linalg.norm(kp - mid, axis=2)
    flags = np.where(defined, dev > delta, True)
    return FlagSet(flags, dev, defined, float(delta), int(view_offset))


def reference_targets(
    frames: Sequence[KeypointFrame],
    flags: FlagSet | None,
    kb: KnowledgeBase | None,
    mode: str,
    *,
    view_offset: int | None = None,
    wrap: bool = True,
    oracle_frames: Sequence[KeypointFrame] | None = None,
    allow_oracle: bool = False,
) -> np.ndarray:
    """Per-view target keypoints ``(V, 9, 2)`` in pixels, NaN where undefined.

    * ``neighbor_interp``: midpoint of the neighbors' received keypoints.
    * ``knowledge_base``: frame-0 object anchors projected through the view's camera.
    * ``oracle``: the transmitted keypoints (evaluation only).
    """
    frames = _ordered(frames)
    if mode == "neighbor_interp":
        n = view_offset if view_offset is not None else (flags.view_offset if flags is not None else 1)
        kp = np.stack([f.keypoints for f in frames])
        valid = np.stack([f.validity for f in frames])
        mid, _ = _neighbor_midpoints(kp, valid, n, wrap)
        return mid
    if mode == "knowledge_base":
        if kb is None:
            raise ConfigurationError("knowledge_base targets need a knowledge base")
        cams = {c.view_id: c for c in kb.cameras}
        return np.stack([project_points(cams[f.view_id], kb.object_anchors) for f in frames])
    if mode == "oracle":
        if not allow_oracle:
            raise ConfigurationError("oracle targets are reserved for evaluation (allow_oracle=False)")
        if oracle_frames is None:
            raise ConfigurationError("oracle targets need the transmitted frames")
        by_id = {f.view_id: f for f in oracle_frames}
        return np.stack([by_id[f.view_id].keypoints for f in frames])
    raise ConfigurationError(f"unknown target mode {mode!r}")


def denoise_view(keypoints: np.ndarray, targets: np.ndarray, flags: np.ndarray, eta: float, image_size=IMAGE_SIZE) -> np.ndarray:
    """Replace flagged keypoints of one view; coordinates are normalized by the image size for the cost."""
    out = np.array(keypoints, dtype=float)
    use = np.isfinite(targets).all(axis=1) & np.isfinite(out).all(axis=1)
    if not (flags & use).any():
        return out
    scale = np.asarray(image_size, dtype=float)
    src = out[use] / scale
    tgt = targets[use] / scale
    moved = transport.denoise_points(src, tgt, eta) * scale
    fix = flags[use]
    sub = out[use]
    sub[fix] = moved[fix]
    out[use] = sub
    return out


def selective_denoise(
    frames: Sequence[KeypointFrame],
    cfg: DenoiserConfig | None = None,
    kb: KnowledgeBase | None = None,
    *,
    oracle_frames: Sequence[KeypointFrame] | None = None,
    image_size=IMAGE_SIZE,
    return_flags: bool = False,
):
    """Flag inconsistent keypoints on the ring and correct only those with relaxed OT.

    Returns corrected copies of ``frames`` (in view order), and the
    :class:`FlagSet` as well when ``return_flags`` is set.
    """
    cfg = cfg if cfg is not None else DenoiserConfig()
    frames = _ordered(frames)
    if len(frames) < 3:
        raise ContractViolation("selective correction needs at least three views")
    flags = consistency_flags(frames, cfg.view_offset, cfg.delta_px(image_size), cfg.wrap)
    targets = reference_targets(
        frames,
        flags,
        kb,
        cfg.target_mode,
        view_offset=cfg.view_offset,
        wrap=cfg.wrap,
        oracle_frames=oracle_frames,
        allow_oracle=cfg.allow_oracle,
    )
    out = []
    for v, frame in enumerate(frames):
        tgt = targets[v]
        if not np.isfinite(tgt).any():
            warnings.warn(f"view {frame.view_id}: no reference targets, left unmodified", stacklevel=2)
            out.append(frame.copy())
            continue
        fl = flags.flags[v] & frame.validity
        if not fl.any():
            out.append(frame.copy())
            continue
        kp = denoise_view(frame.keypoints, tgt, fl, cfg.eta, image_size)
        out.append(frame.copy(keypoints=kp))
    return (out, flags) if return_flags else out
