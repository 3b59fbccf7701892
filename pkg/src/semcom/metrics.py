"""Fidelity and latency metrics: KPE, modified chamfer distance, P2Point, latency ledger."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ContractViolation
from .scene import PointCloud

# exhaustive search up to this many points per cloud, k-d tree above
KDTREE_THRESHOLD = 1000


@dataclass(frozen=True)
class LatencyLedger:
    t_semantic: float
    t_wireless: float
    t_ot: float
    t_generation: float

    @property
    def total(self) -> float:
        return self.t_semantic + self.t_wireless + self.t_ot + self.t_generation


@dataclass(frozen=True)
class MetricsReport:
    kpe: float
    chamfer: float
    p2point: float
    latency: LatencyLedger
    payload_bits: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["latency"]["total"] = self.latency.total
        return d


def _as_points(x) -> np.ndarray:
    pts = x.points if isinstance(x, PointCloud) else np.asarray(x, dtype=float)
    return np.atleast_2d(pts)


def kpe(sent, received) -> float:
    """Mean Euclidean displacement between matched keypoints (any dimension)."""
    a = np.asarray(sent, dtype=float)
    b = np.asarray(received, dtype=float)
    if a.shape != b.shape:
        raise ContractViolation(f"keypoint sets differ in shape: {a.shape} vs {b.shape}")
    a = a.reshape(-1, a.shape[-1])
    b = b.reshape(-1, b.shape[-1])
    if len(a) == 0:
        raise ContractViolation("no keypoints")
    return float(np.mean(np.sqrt(np.sum((a - b) ** 2, axis=1))))


def kpe_3d(sent_xyz, received_xyz) -> float:
    """KPE on triangulated 3D keypoints; invalid (NaN) receiver points are skipped."""
    a = np.asarray(sent_xyz, dtype=float).reshape(-1, 3)
    b = np.asarray(received_xyz, dtype=float).reshape(-1, 3)
    ok = np.isfinite(b).all(axis=1)
    if not ok.any():
        return math.nan
    return kpe(a[ok], b[ok])


def build_tree(points) -> cKDTree:
    """k-d tree for :func:`nearest_sq_dist`; sliding-midpoint splits keep queries
    from far outside a flat reference cloud cheap."""
    return cKDTree(_as_points(points), balanced_tree=False, compact_nodes=False)


def nearest_sq_dist(query, ref, tree: cKDTree | None = None) -> np.ndarray:
    """Squared distance from every query point to its nearest reference point.

    The k-d tree only picks the neighbor; the squared distance is always
    recomputed from coordinates, so both search paths return identical values.
    ``tree`` may be a prebuilt :func:`build_tree` of ``ref``.
    """
    q = _as_points(query)
    r = _as_points(ref)
    if len(q) == 0 or len(r) == 0:
        raise ContractViolation("point clouds must be nonempty")
    if tree is None and max(len(q), len(r)) <= KDTREE_THRESHOLD:
        d = ((q[:, None, :] - r[None, :, :]) ** 2).sum(axis=2)
        return d.min(axis=1)
    if tree is None:
        tree = build_tree(r)
    elif tree.n != len(r):
        raise ContractViolation("tree does not match the reference cloud")
    _, idx = tree.query(q, k=1)
    return ((q - r[idx]) ** 2).sum(axis=1)


def _mean(x: np.ndarray) -> float:
    return math.fsum(x.tolist()) / len(x)


def chamfer_modified(pt, pr) -> float:
    """Sum of the two directed mean squared nearest-neighbor distances (m^2)."""
    return _mean(nearest_sq_dist(pt, pr)) + _mean(nearest_sq_dist(pr, pt))


def d_rms(a, b) -> float:
    return math.sqrt(_mean(nearest_sq_dist(a, b)))


def p2point(pt, pr) -> float:
    """Symmetric point-to-point error: max of both directed RMS distances (m)."""
    return max(d_rms(pt, pr), d_rms(pr, pt))


def cloud_errors(pt, pr, tree_t: cKDTree | None = None) -> tuple[float, float]:
    """``(chamfer_modified, p2point)`` from one nearest-neighbor pass per direction.

    ``tree_t`` is an optional prebuilt tree of ``pt``.  Values equal those of
    the two separate functions.
    """
    a = _mean(nearest_sq_dist(pt, pr))
    b = _mean(nearest_sq_dist(pr, pt, tree_t))
    return a + b, max(math.sqrt(a), math.sqrt(b))


def latency_breakdown(t_semantic: float = 0.0, t_wireless: float = 0.0, t_ot: float = 0.0, t_generation: float = 0.0) -> LatencyLedger:
    parts = (t_semantic, t_wireless, t_ot, t_generation)
    if any(not (x >= 0) for x in parts):
        raise ContractViolation("latency components must be >= 0")
    return LatencyLedger(*(float(x) for x in parts))


def wireless_time(payload_bits: int, link_rate_bps: float) -> float:
    if link_rate_bps <= 0:
        raise ContractViolation("link rate must be positive")
    return payload_bits / link_rate_bps
