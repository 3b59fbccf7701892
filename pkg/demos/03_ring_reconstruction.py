"""
From 36 views to a point cloud
==============================

Keypoints seen by a ring of cameras are triangulated, the template cloud
is posed on them, and the result is scored against the ground truth.
"""

import numpy as np

from semcom import channel as ch
from semcom.correction import DenoiserConfig, consistency_flags, selective_denoise
from semcom.metrics import chamfer_modified, kpe, p2point
from semcom.scene import (
    build_knowledge_base,
    build_point_cloud,
    generate_scene,
    render_keypoint_frame,
    triangulate,
)

kb = build_knowledge_base()
cams = kb.cameras
scene = generate_scene(0)
truth = build_point_cloud(triangulate([render_keypoint_frame(scene, c) for c in cams], cams), kb, "gscs")
print("cameras:", len(cams), " truth cloud:", len(truth), "points")

sent = [render_keypoint_frame(scene, c) for c in cams]
recv = []
for f in sent:
    rng = ch.substream(11, 0, f.view_id, ch.BLOCK_KEYPOINTS)
    recv.append(ch.decode_keypoints(ch.transmit(ch.encode_keypoints(f), ch.ChannelConfig("rician", 5.0), rng)))

# neighbouring views should agree; the midpoint test flags points that do not
den = DenoiserConfig()
flags = consistency_flags(recv, den.view_offset, den.delta_px())
print(f"flagged {flags.count} of {flags.flags.size} received keypoints (delta {den.delta_px():.1f} px)")

fixed = selective_denoise(recv, den, kb)
ref = np.stack([f.keypoints for f in sent])
for name, frames in (("received", recv), ("denoised", fixed)):
    cloud = build_point_cloud(triangulate(frames, cams), kb, "gscs")
    print(f"{name:9s} KPE {kpe(ref, np.stack([f.keypoints for f in frames])):7.1f} px  "
          f"chamfer {chamfer_modified(truth, cloud):.4f} m^2  P2Point {p2point(truth, cloud):.4f} m")
