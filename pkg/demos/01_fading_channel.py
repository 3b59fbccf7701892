"""
Sending keypoints through a fading channel
==========================================

Nine keypoints per view become 18 normalized symbols. We push them through
AWGN, Rayleigh and Rician channels and look at what comes out.
"""

import numpy as np

from semcom import channel as ch
from semcom.scene import build_knowledge_base, generate_scene, render_keypoint_frame

# one view of the first frame
kb = build_knowledge_base()
cam = kb.cameras[0]
frame = render_keypoint_frame(generate_scene(0), cam)
print("keypoints (px):\n", np.round(frame.keypoints, 1))

# encoding divides by the image size, so symbols live in [0, 1]
payload = ch.encode_keypoints(frame)
print("symbols:", payload.symbols.size, "bits:", payload.bit_size)

# each trial draws from its own substream: (seed, frame, view, block)
for kind in ch.CHANNEL_KINDS:
    for snr in (0.0, 10.0, 20.0):
        rng = ch.substream(7, 0, cam.view_id, ch.BLOCK_KEYPOINTS)
        got = ch.decode_keypoints(ch.transmit(payload, ch.ChannelConfig(kind, snr), rng))
        err = np.linalg.norm(got.keypoints - frame.keypoints, axis=1)
        print(f"{kind:8s} {snr:4.0f} dB  mean error {err.mean():7.1f} px  worst {err.max():7.1f} px")

# deep fades divide the noise by a tiny gain; the clamp keeps symbols in range
h = ch.rayleigh_gain(np.random.default_rng(0), size=100_000)
print("P(h < 0.1) under Rayleigh:", np.mean(h < 0.1))

# the noiseless channel is exact on the fixed-point grid
clean = ch.decode_keypoints(ch.transmit(payload, ch.ChannelConfig("awgn"), ch.substream(0)))
print("noiseless round trip exact:", np.array_equal(clean.keypoints, ch.quantize_pixels(frame.keypoints)))

# bandwidth: a keypoint view against a dense 24-bit image
print("dense / keypoint bits:", ch.dense_payload_bits() // ch.keypoint_payload_bits())
