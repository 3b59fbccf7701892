"""Synthetic factory scene, pinhole cameras, keypoint rendering and reconstruction.

The scene lives in the cube ``[0, 4]^3`` (meters).  It holds a seven-keypoint
robotic arm, two boxes riding a conveyor along the x axis, and a static cloud
(floor, conveyor, pillars).  Thirty-six cameras sit on a ring around the cube
and look at its center.

Keypoint frames replace a learned keypoint detector: every keypoint is
projected exactly and optionally perturbed by Gaussian pixel noise.  Linear
multi-view triangulation plus fixed object templates replace volumetric
reconstruction on the receiver side.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, ContractViolation, ProjectionError

GEOMETRY_RANGE = (0.0, 4.0)
N_ARM = 7
N_BOX = 2
N_KEYPOINTS = N_ARM + N_BOX
IMAGE_SIZE = (1200, 600)
N_CAMERAS = 36

ARM_TEMPLATE_POINTS = 500
BOX_TEMPLATE_POINTS = 500
STATIC_POINTS = 5000
# Largest cloud error (m) still counted as an exact reconstruction.  With
# exact keypoints the receiver rebuilds the very template samples of the
# ground truth; what remains is triangulation round-off and the 2^-22 px
# symbol quantization, both far below a micrometre at ring distance.
TEMPLATE_SAMPLING_TOLERANCE = 1e-6

GSC_FRAMEWORKS = ("gscs", "gscm", "gscs_ot", "gscm_ot")
FRAMEWORKS = ("imagecom",) + GSC_FRAMEWORKS


# ---------------------------------------------------------------------------
# Data types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CameraConfig:
    """Pinhole camera with a world-to-camera rigid transform.

    ``rotation`` and ``translation`` map world points into the camera frame
    (x right, y down, z forward): ``p_cam = rotation @ p_world + translation``.
    """

    view_id: int
    theta: float
    rotation: np.ndarray
    translation: np.ndarray
    focal: tuple[float, float]
    principal: tuple[float, float]
    image_size: tuple[int, int] = IMAGE_SIZE

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=float).reshape(3, 3)
        trans = np.array(self.translation, dtype=float).reshape(3)
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)
        object.__setattr__(self, "focal", tuple(float(f) for f in self.focal))
        object.__setattr__(self, "principal", tuple(float(c) for c in self.principal))
        object.__setattr__(self, "image_size", tuple(int(s) for s in self.image_size))

        if np.abs(rot.T @ rot - np.eye(3)).max() >= 1e-9:
            raise ConfigurationError(f"camera {self.view_id}: rotation is not orthonormal")
        fx, fy = self.focal
        if fx <= 0 or fy <= 0:
            raise ConfigurationError(f"camera {self.view_id}: focal lengths must be positive")
        (cx, cy), (w, h) = self.principal, self.image_size
        if not (0 <= cx < w and 0 <= cy < h):
            raise ConfigurationError(f"camera {self.view_id}: principal point outside the image")

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def intrinsics(self) -> np.ndarray:
        (fx, fy), (cx, cy) = self.focal, self.principal
        return np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])

    def to_dict(self) -> dict:
        return {
            "view_id": self.view_id,
            "theta": self.theta,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "focal": list(self.focal),
            "principal": list(self.principal),
            "image_size": list(self.image_size),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraConfig":
        return cls(
            view_id=int(d["view_id"]),
            theta=float(d["theta"]),
            rotation=np.asarray(d["rotation"], dtype=float),
            translation=np.asarray(d["translation"], dtype=float),
            focal=tuple(d["focal"]),
            principal=tuple(d["principal"]),
            image_size=tuple(d.get("image_size", IMAGE_SIZE)),
        )


@dataclass(frozen=True)
class MotionParams:
    """Scene layout and motion of the movable objects.

    Angles are radians, lengths meters, periods and speeds are per frame.
    """

    arm_base: tuple[float, float, float] = (2.0, 2.2, 0.1)
    bone_lengths: tuple[float, ...] = (0.4, 0.35, 0.3, 0.25, 0.2, 0.15)
    arm_rest_pitch: tuple[float, ...] = (1.5707963267948966, 1.0, 0.5, 0.0, -0.5, -1.0)
    arm_rest_yaw: float = 0.0
    arm_yaw_amplitude: float = 0.6
    arm_pitch_amplitude: float = 0.25
    arm_period: float = 120.0
    box_speed: float = 0.01
    box_start_x: tuple[float, float] = (0.8, 2.2)
    box_track: tuple[float, float] = (0.5, 3.5)
    box_y: float = 0.8
    box_z: float = 0.55
    box_size: tuple[float, float, float] = (0.3, 0.3, 0.3)

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (list, tuple)):
                object.__setattr__(self, f.name, tuple(float(x) for x in v))
        validate_motion(self)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "MotionParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown motion parameters: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class SceneState:
    time: int
    arm_keypoints: np.ndarray
    box_centers: np.ndarray
    static_cloud: np.ndarray

    @property
    def keypoints(self) -> np.ndarray:
        """All nine object keypoints in fixed order: 7 arm joints then 2 box centers."""
        return np.vstack([self.arm_keypoints, self.box_centers])


@dataclass
class KeypointFrame:
    view_id: int
    theta: float
    keypoints: np.ndarray
    validity: np.ndarray = None
    clamped: bool = False

    def __post_init__(self):
        self.keypoints = np.asarray(self.keypoints, dtype=float).reshape(N_KEYPOINTS, 2)
        if self.validity is None:
            self.validity = np.ones(N_KEYPOINTS, dtype=bool)
        self.validity = np.asarray(self.validity, dtype=bool).reshape(N_KEYPOINTS)

    def copy(self, **changes) -> "KeypointFrame":
        kw = dict(
            view_id=self.view_id,
            theta=self.theta,
            keypoints=self.keypoints.copy(),
            validity=self.validity.copy(),
            clamped=self.clamped,
        )
        kw.update(changes)
        return KeypointFrame(**kw)


@dataclass(frozen=True)
class KnowledgeBase:
    """Static information shared once between transmitter and receiver."""

    static_cloud: np.ndarray
    cameras: tuple[CameraConfig, ...]
    object_anchors: np.ndarray

    def __post_init__(self):
        for name in ("static_cloud", "object_anchors"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "cameras", tuple(self.cameras))

    @property
    def bit_size(self) -> int:
        """Bits needed to ship the knowledge base once (32-bit floats)."""
        per_camera = 9 + 3 + 2 + 2 + 1  # rotation, translation, focal, principal, theta
        n_floats = self.static_cloud.size + self.object_anchors.size + per_camera * len(self.cameras)
        return 32 * n_floats

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.static_cloud).tobytes())
        h.update(np.ascontiguousarray(self.object_anchors).tobytes())
        for cam in self.cameras:
            h.update(json.dumps(cam.to_dict(), sort_keys=True).encode())
        return h.hexdigest()


@dataclass
class PointCloud:
    points: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=float).reshape(-1, 3)
            if len(self.colors) != len(self.points):
                raise ContractViolation("colors and points differ in length")

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class TriangulationResult:
    """Per-keypoint triangulation output.

    ``status`` is ``"ok"``, ``"insufficient_views"`` or ``"singular"``;
    points of non-ok entries are NaN.
    """

    points: np.ndarray
    residuals: np.ndarray
    valid: np.ndarray
    status: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Scene generation
# ---------------------------------------------------------------------------


def _arm_pose(t: float, m: MotionParams) -> np.ndarray:
    phase = 2.0 * math.pi * t / m.arm_period
    yaw = m.arm_rest_yaw + m.arm_yaw_amplitude * math.sin(phase)
    heading = np.array([math.cos(yaw), math.sin(yaw)])
    joints = [np.asarray(m.arm_base, dtype=float)]
    for k, (length, rest) in enumerate(zip(m.bone_lengths, m.arm_rest_pitch)):
        pitch = rest + m.arm_pitch_amplitude * math.sin(phase + 0.5 * k)
        step = length * np.array([math.cos(pitch) * heading[0], math.cos(pitch) * heading[1], math.sin(pitch)])
        joints.append(joints[-1] + step)
    return np.array(joints)


def _box_centers(t: float, m: MotionParams) -> np.ndarray:
    lo, hi = m.box_track
    span = hi - lo
    xs = [lo + (x0 - lo + m.box_speed * t) % span for x0 in m.box_start_x]
    return np.array([[x, m.box_y, m.box_z] for x in xs])


def validate_motion(m: MotionParams) -> None:
    """Raise ConfigurationError if any point of the motion can leave ``[0, 4]^3``."""
    if len(m.bone_lengths) != N_ARM - 1 or len(m.arm_rest_pitch) != N_ARM - 1:
        raise ConfigurationError(f"the arm needs {N_ARM - 1} bones")
    if len(m.box_start_x) != N_BOX:
        raise ConfigurationError(f"expected {N_BOX} box start positions")
    if min(m.bone_lengths) <= 0:
        raise ConfigurationError("bone lengths must be positive")
    if m.arm_period <= 0:
        raise ConfigurationError("arm_period must be positive")
    lo, hi = GEOMETRY_RANGE
    lo_t, hi_t = m.box_track
    if not lo_t < hi_t:
        raise ConfigurationError("box_track must be an increasing interval")
    if not all(lo_t <= x0 < hi_t for x0 in m.box_start_x):
        raise ConfigurationError("box start positions must lie on the track")
    half = np.asarray(m.box_size) / 2
    box_lo = np.array([lo_t, m.box_y, m.box_z]) - half
    box_hi = np.array([hi_t, m.box_y, m.box_z]) + half
    if (box_lo < lo).any() or (box_hi > hi).any():
        raise ConfigurationError("box motion leaves the geometry range")
    # The arm is periodic in t, so one densely sampled period covers every frame.
    for t in np.linspace(0.0, m.arm_period, 721):
        pose = _arm_pose(float(t), m)
        if (pose < lo).any() or (pose > hi).any():
            raise ConfigurationError(f"arm leaves the geometry range at phase t={t:.3f}")


@lru_cache(maxsize=8)
def _static_cloud(n: int = STATIC_POINTS, seed: int = 7) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n_floor = int(0.6 * n)
    n_conv = int(0.3 * n)
    n_pill = n - n_floor - n_conv
    floor = np.column_stack([rng.uniform(0, 4, n_floor), rng.uniform(0, 4, n_floor), np.zeros(n_floor)])
    # Conveyor: slab x in [0.2, 3.8], y in [0.6, 1.0], z in [0, 0.4]; top and two long sides.
    n_top = n_conv // 2
    top = np.column_stack([rng.uniform(0.2, 3.8, n_top), rng.uniform(0.6, 1.0, n_top), np.full(n_top, 0.4)])
    n_side = n_conv - n_top
    side_y = np.where(rng.random(n_side) < 0.5, 0.6, 1.0)
    sides = np.column_stack([rng.uniform(0.2, 3.8, n_side), side_y, rng.uniform(0.0, 0.4, n_side)])
    # Two thin pillars at the back corners.
    which = rng.integers(0, 2, n_pill)
    px = np.where(which == 0, 0.3, 3.7) + rng.uniform(-0.1, 0.1, n_pill)
    py = 3.7 + rng.uniform(-0.1, 0.1, n_pill)
    pillars = np.column_stack([px, py, rng.uniform(0.0, 3.0, n_pill)])
    cloud = np.vstack([floor, top, sides, pillars])
    cloud.setflags(write=False)
    return cloud


def generate_scene(t: int, motion_params: MotionParams | None = None) -> SceneState:
    """Ground-truth scene at frame ``t``.  Pure function of ``(t, motion_params)``."""
    if t < 0:
        raise ContractViolation("frame index must be non-negative")
    m = motion_params if motion_params is not None else MotionParams()
    arm = _arm_pose(float(t), m)
    boxes = _box_centers(float(t), m)
    lo, hi = GEOMETRY_RANGE
    if (arm < lo).any() or (arm > hi).any() or (boxes < lo).any() or (boxes > hi).any():
        raise ConfigurationError(f"scene at t={t} leaves the geometry range")
    return SceneState(time=int(t), arm_keypoints=arm, box_centers=boxes, static_cloud=_static_cloud())


# ---------------------------------------------------------------------------
# Cameras and projection
# ---------------------------------------------------------------------------


def look_at(position: Sequence[float], target: Sequence[float], up=(0.0, 0.0, 1.0)):
    """World-to-camera rotation and translation for a camera at ``position`` facing ``target``."""
    c = np.asarray(position, dtype=float)
    forward = np.asarray(target, dtype=float) - c
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, up)
    norm = np.linalg.norm(right)
    if norm < 1e-12:
        raise ConfigurationError("camera looks along the up vector")
    right /= norm
    down = np.cross(forward, right)
    rot = np.vstack([right, down, forward])
    return rot, -rot @ c


def make_camera_ring(
    n: int = N_CAMERAS,
    radius: float = 6.0,
    height: float = 3.0,
    target: Sequence[float] = (2.0, 2.0, 1.0),
    focal: tuple[float, float] = (500.0, 500.0),
    image_size: tuple[int, int] = IMAGE_SIZE,
) -> list[CameraConfig]:
    """``n`` cameras equally spaced in azimuth around ``target``, all facing it."""
    w, h = image_size
    cams = []
    for i in range(n):
        theta = 2.0 * math.pi * i / n
        pos = (target[0] + radius * math.cos(theta), target[1] + radius * math.sin(theta), height)
        rot, trans = look_at(pos, target)
        cams.append(CameraConfig(i, theta, rot, trans, focal, (w / 2.0, h / 2.0), image_size))
    return cams


def project_points(camera: CameraConfig, points: np.ndarray) -> np.ndarray:
    """Project world points ``(N, 3)`` to pixels ``(N, 2)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    pc = pts @ camera.rotation.T + camera.translation
    depth = pc[:, 2]
    if (depth <= 0).any():
        raise ProjectionError(f"{int((depth <= 0).sum())} point(s) behind camera {camera.view_id}")
    (fx, fy), (cx, cy) = camera.focal, camera.principal
    return np.column_stack([fx * pc[:, 0] / depth + cx, fy * pc[:, 1] / depth + cy])


def project_point(camera: CameraConfig, p: Sequence[float]) -> np.ndarray:
    return project_points(camera, np.asarray(p, dtype=float)[None, :])[0]


def back_project(camera: CameraConfig, pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rays through ``pixels``: returns ``(origin (3,), unit directions (N, 3))`` in world frame."""
    px = np.atleast_2d(np.asarray(pixels, dtype=float))
    (fx, fy), (cx, cy) = camera.focal, camera.principal
    d_cam = np.column_stack([(px[:, 0] - cx) / fx, (px[:, 1] - cy) / fy, np.ones(len(px))])
    d = d_cam @ camera.rotation
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return camera.center, d


def render_keypoint_frame(scene: SceneState, camera: CameraConfig, extraction_sigma: float = 0.0, rng=None) -> KeypointFrame:
    """Project the nine object keypoints, perturbed by isotropic Gaussian pixel noise."""
    if extraction_sigma < 0:
        raise ContractViolation("extraction_sigma must be >= 0")
    kp = project_points(camera, scene.keypoints)
    if extraction_sigma > 0:
        if rng is None:
            raise ContractViolation("an rng is required when extraction_sigma > 0")
        kp = kp + extraction_sigma * rng.standard_normal(kp.shape)
    return KeypointFrame(camera.view_id, camera.theta, kp)


# ---------------------------------------------------------------------------
# Triangulation
# ---------------------------------------------------------------------------


def triangulate_points(
    pixels: np.ndarray,
    cameras: Sequence[CameraConfig],
    mask: np.ndarray | None = None,
    cond_limit: float = 1e12,
) -> TriangulationResult:
    """Least-squares intersection of back-projected rays for many points at once.

    ``pixels`` has shape ``(V, N, 2)`` (views, points); ``mask`` ``(V, N)`` selects
    which observations take part.  For each point the returned position minimizes
    the summed squared perpendicular distance to its rays; the residual is the RMS
    of those distances.
    """
    px = np.asarray(pixels, dtype=float)
    n_views, n_pts = px.shape[:2]
    if len(cameras) != n_views:
        raise ContractViolation("need one camera per view")
    use = np.ones((n_views, n_pts), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)

    A = np.zeros((n_pts, 3, 3))
    b = np.zeros((n_pts, 3))
    origins, dirs = [], []
    eye = np.eye(3)
    for v, cam in enumerate(cameras):
        c, d = back_project(cam, px[v])
        w = use[v].astype(float)
        proj = eye[None] - d[:, :, None] * d[:, None, :]
        A += w[:, None, None] * proj
        b += w[:, None] * (proj @ c)
        origins.append(c)
        dirs.append(d)

    counts = use.sum(axis=0)
    points = np.full((n_pts, 3), np.nan)
    status = ["ok"] * n_pts
    enough = counts >= 2
    eig = np.linalg.eigvalsh(A[enough]) if enough.any() else np.zeros((0, 3))
    well = np.zeros(n_pts, dtype=bool)
    if enough.any():
        # smallest eigenvalue ~ 0 when every ray is parallel
        well_sub = eig[:, 0] > eig[:, 2] / cond_limit
        well[np.flatnonzero(enough)[well_sub]] = True
    if well.any():
        points[well] = np.linalg.solve(A[well], b[well][..., None])[..., 0]
    for i in np.flatnonzero(~enough):
        status[i] = "insufficient_views"
    for i in np.flatnonzero(enough & ~well):
        status[i] = "singular"

    sq = np.zeros(n_pts)
    for v in range(n_views):
        diff = points - origins[v]
        along = np.einsum("ij,ij->i", diff, dirs[v])
        perp = diff - along[:, None] * dirs[v]
        sq += np.where(use[v], np.einsum("ij,ij->i", perp, perp), 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        residuals = np.sqrt(sq / np.maximum(counts, 1))
    residuals[~well] = np.nan
    return TriangulationResult(points, residuals, well, status)


def triangulate(frames: Sequence[KeypointFrame], cameras: Sequence[CameraConfig]) -> TriangulationResult:
    """Triangulate the nine keypoints from two or more frames.

    ``cameras`` may be the full ring; frames are matched to cameras by ``view_id``.
    Keypoints seen validly in fewer than two views, or only along parallel rays,
    come back invalid rather than raising.
    """
    if len(frames) < 2:
        raise ContractViolation("triangulation needs at least two frames")
    by_id = {cam.view_id: cam for cam in cameras}
    try:
        cams = [by_id[f.view_id] for f in frames]
    except KeyError as exc:
        raise ContractViolation(f"no camera for view {exc.args[0]}") from None
    pixels = np.stack([f.keypoints for f in frames])
    mask = np.stack([f.validity for f in frames]) & np.isfinite(pixels).all(axis=2)
    return triangulate_points(np.nan_to_num(pixels), cams, mask)


# ---------------------------------------------------------------------------
# Templates, knowledge base, point clouds
# ---------------------------------------------------------------------------


def _link_counts(total: int, n_links: int) -> list[int]:
    base, extra = divmod(total, n_links)
    return [base + (1 if k < extra else 0) for k in range(n_links)]


def arm_template(joints: np.ndarray, n_points: int = ARM_TEMPLATE_POINTS, valid: np.ndarray | None = None) -> np.ndarray:
    """Evenly spaced samples on each link between consecutive joints (endpoints included)."""
    joints = np.asarray(joints, dtype=float)
    ok = np.ones(len(joints), dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    out = []
    for k, cnt in enumerate(_link_counts(n_points, len(joints) - 1)):
        if not (ok[k] and ok[k + 1]):
            continue
        s = np.linspace(0.0, 1.0, cnt)[:, None]
        seg = joints[k] + s * (joints[k + 1] - joints[k])
        seg[-1] = joints[k + 1]
        out.append(seg)
    return np.vstack(out) if out else np.zeros((0, 3))


@lru_cache(maxsize=8)
def _box_offsets(size: tuple[float, float, float], n_points: int, seed: int = 11) -> np.ndarray:
    """Center plus ``n_points - 1`` samples on the surface of an axis-aligned cuboid."""
    rng = np.random.default_rng(seed)
    half = np.asarray(size) / 2.0
    m = n_points - 1
    areas = np.array([half[1] * half[2], half[0] * half[2], half[0] * half[1]])
    axis = rng.choice(3, size=m, p=areas / areas.sum())
    pts = rng.uniform(-1.0, 1.0, size=(m, 3))
    sign = np.where(rng.random(m) < 0.5, -1.0, 1.0)
    pts[np.arange(m), axis] = sign
    offsets = np.vstack([np.zeros(3), pts * half])
    offsets.setflags(write=False)
    return offsets


def box_template(center: np.ndarray, size=(0.3, 0.3, 0.3), n_points: int = BOX_TEMPLATE_POINTS) -> np.ndarray:
    return np.asarray(center, dtype=float) + _box_offsets(tuple(float(s) for s in size), n_points)


def object_points(keypoints: np.ndarray, valid=None, box_size=(0.3, 0.3, 0.3)) -> np.ndarray:
    """Template samples for the arm and both boxes anchored at ``keypoints`` (9, 3)."""
    kp = np.asarray(keypoints, dtype=float)
    ok = np.ones(N_KEYPOINTS, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    parts = [arm_template(kp[:N_ARM], valid=ok[:N_ARM])]
    parts += [box_template(kp[N_ARM + i], box_size) for i in range(N_BOX) if ok[N_ARM + i]]
    return np.vstack(parts)


def ground_truth_cloud(scene: SceneState, motion_params: MotionParams | None = None) -> PointCloud:
    m = motion_params if motion_params is not None else MotionParams()
    return PointCloud(np.vstack([scene.static_cloud, object_points(scene.keypoints, box_size=m.box_size)]))


def build_knowledge_base(
    motion_params: MotionParams | None = None, cameras: Sequence[CameraConfig] | None = None
) -> KnowledgeBase:
    scene0 = generate_scene(0, motion_params)
    cams = tuple(cameras) if cameras is not None else tuple(make_camera_ring())
    return KnowledgeBase(static_cloud=scene0.static_cloud.copy(), cameras=cams, object_anchors=scene0.keypoints)


def build_point_cloud(
    objects: np.ndarray | TriangulationResult | None,
    kb: KnowledgeBase | None,
    framework: str,
    *,
    dense: np.ndarray | None = None,
    box_size=(0.3, 0.3, 0.3),
) -> PointCloud:
    """Compose the receiver-side cloud for one framework.

    GSC variants place object templates at the reconstructed keypoints on top of the
    knowledge-base static cloud.  ``gscs`` composes everything jointly, ``gscm`` builds
    the objects first and merges the static scene afterwards; the resulting multisets
    are identical.  ``imagecom`` uses the triangulated dense samples only.
    """
    if framework not in FRAMEWORKS:
        raise ConfigurationError(f"unknown framework {framework!r}")
    if framework == "imagecom":
        if dense is None:
            raise ConfigurationError("imagecom needs dense reconstructed samples")
        pts = np.asarray(dense, dtype=float)
        return PointCloud(pts[np.isfinite(pts).all(axis=1)])
    if kb is None:
        raise ConfigurationError(f"{framework} needs a knowledge base")
    if isinstance(objects, TriangulationResult):
        kp, valid = objects.points, objects.valid
    else:
        kp = np.asarray(objects, dtype=float)
        valid = np.isfinite(kp).all(axis=1)
    objs = object_points(kp, valid, box_size)
    if framework.startswith("gscm"):
        return PointCloud(np.vstack([objs, kb.static_cloud]))
    return PointCloud(np.vstack([kb.static_cloud, objs]))


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def write_ply(path: str | Path, cloud: PointCloud) -> None:
    """ASCII PLY with ``x y z`` and optional ``red green blue`` (0-255) properties."""
    path = Path(path)
    lines = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}"]
    lines += ["property double x", "property double y", "property double z"]
    if cloud.colors is not None:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines.append("end_header")
    rows = []
    rgb = None if cloud.colors is None else np.clip(np.rint(cloud.colors * 255), 0, 255).astype(int)
    for i, p in enumerate(cloud.points.tolist()):
        row = f"{p[0]!r} {p[1]!r} {p[2]!r}"
        if rgb is not None:
            row += f" {rgb[i, 0]} {rgb[i, 1]} {rgb[i, 2]}"
        rows.append(row)
    path.write_text("\n".join(lines + rows) + "\n")


def read_ply(path: str | Path) -> PointCloud:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ConfigurationError(f"{path}: not a PLY file")
    n, element, props = None, None, []
    for i, line in enumerate(lines[1:], start=1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise ConfigurationError(f"{path}: only ASCII PLY is supported")
        if tok[0] == "element":
            element = tok[1]
            if element == "vertex":
                n = int(tok[2])
        elif tok[0] == "property" and element == "vertex":
            props.append(tok[-1])
        elif tok[0] == "end_header":
            body = lines[i + 1 :]
            break
    else:
        raise ConfigurationError(f"{path}: missing end_header")
    if n is None:
        raise ConfigurationError(f"{path}: missing 'element vertex'")
    data = np.array([row.split() for row in body[:n]], dtype=float).reshape(n, len(props))
    col = {name: k for k, name in enumerate(props)}
    pts = data[:, [col["x"], col["y"], col["z"]]]
    colors = None
    if {"red", "green", "blue"} <= col.keys():
        colors = data[:, [col["red"], col["green"], col["blue"]]] / 255.0
    return PointCloud(pts, colors)


def save_cameras(path: str | Path, cameras: Iterable[CameraConfig]) -> None:
    Path(path).write_text(json.dumps([c.to_dict() for c in cameras], indent=2))


def load_cameras(path: str | Path) -> list[CameraConfig]:
    return [CameraConfig.from_dict(d) for d in json.loads(Path(path).read_text())]
