"""Keypoint-based semantic communication over fading channels with OT correction.

Modules
-------
scene
    Synthetic robot-arm scene, camera ring, projection and triangulation.
channel
    AWGN / Rayleigh / Rician channel and keypoint payload codec.
transport
    Relaxed entropic optimal transport plus Sinkhorn and LP references.
correction
    Ring-consistency flagging and selective OT correction.
metrics
    KPE, modified chamfer distance, P2Point and the latency ledger.
harness
    Seeded end-to-end trials and SNR sweeps.
plotting
    SVG charts (imported on demand; pulls in matplotlib).
"""

from .channel import ChannelConfig, Payload, decode_keypoints, encode_keypoints, transmit
from .correction import DenoiserConfig, FlagSet, consistency_flags, selective_denoise
from .errors import (
    ConfigurationError,
    ContractViolation,
    ParseError,
    ProjectionError,
    SemcomError,
    SingularGeometryError,
)
from .harness import ExperimentConfig, RunRecord, run_trial, sweep
from .metrics import LatencyLedger, MetricsReport, chamfer_modified, kpe, latency_breakdown, p2point
from .scene import (
    CameraConfig,
    KeypointFrame,
    KnowledgeBase,
    MotionParams,
    PointCloud,
    SceneState,
    build_knowledge_base,
    build_point_cloud,
    generate_scene,
    make_camera_ring,
    render_keypoint_frame,
    triangulate,
)
from .transport import (
    TransportPlan,
    barycentric_apply,
    combine_max,
    cost_matrix,
    gibbs_kernel,
    lp_transport_oracle,
    relax_cols,
    relax_rows,
    sinkhorn_full,
)

__version__ = "0.1.0"
