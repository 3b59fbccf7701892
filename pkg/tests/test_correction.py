import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semcom import channel as ch
from semcom.correction import (
    DenoiserConfig,
    consistency_flags,
    denoise_view,
    reference_targets,
    selective_denoise,
)
from semcom.errors import ConfigurationError, ContractViolation
from semcom.metrics import kpe
from semcom.scene import (
    KeypointFrame,
    MotionParams,
    build_knowledge_base,
    generate_scene,
    make_camera_ring,
    project_points,
    render_keypoint_frame,
)

DELTA = 0.02 * math.hypot(1200, 600)


@pytest.fixture(scope="module")
def ring():
    return make_camera_ring()


@pytest.fixture(scope="module")
def kb():
    return build_knowledge_base()


def clean_frames(ring, t=0, motion=None):
    s = generate_scene(t, motion)
    return [render_keypoint_frame(s, c) for c in ring]


def noisy(frames, kind, snr, seed):
    out = []
    for f in frames:
        rng = ch.substream(seed, 0, f.view_id, ch.BLOCK_KEYPOINTS)
        out.append(ch.decode_keypoints(ch.transmit(ch.encode_keypoints(f), ch.ChannelConfig(kind, snr), rng)))
    return out


def line_frames(points):
    return [KeypointFrame(i, 0.0, np.tile(p, (9, 1))) for i, p in enumerate(points)]


class TestFlags:
    def test_exact_midpoint_not_flagged(self):
        fl = consistency_flags(line_frames([(0, 0), (1, 1), (2, 2)]), 1, 0.1, wrap=False)
        assert not fl.flags[1].any()
        assert fl.deviation[1].max() == 0.0
        # the end views have no pair of neighbors without wrap-around
        assert fl.flags[0].all() and fl.flags[2].all() and not fl.defined[0].any()

    def test_displaced_point_flagged(self):
        fl = consistency_flags(line_frames([(0, 0), (10, 0), (0, 0)]), 1, 5.0, wrap=False)
        assert fl.flags[1].all()
        np.testing.assert_allclose(fl.deviation[1], 10.0)

    def test_noiseless_ring_has_no_flags(self, ring):
        for t in (0, 40, 80):
            fl = consistency_flags(clean_frames(ring, t), 1, DELTA)
            assert fl.count == 0
            assert np.nanmax(fl.deviation) < DELTA

    def test_view_offset_two(self, ring):
        fl = consistency_flags(clean_frames(ring), 2, DELTA)
        assert fl.count == 0 and fl.view_offset == 2

    def test_order_of_frames_irrelevant(self, ring):
        frames = noisy(clean_frames(ring), "awgn", 5.0, 1)
        a = consistency_flags(frames, 1, DELTA)
        b = consistency_flags(frames[::-1], 1, DELTA)
        np.testing.assert_array_equal(a.flags, b.flags)

    def test_duplicate_views_rejected(self, ring):
        f = clean_frames(ring)[:3]
        with pytest.raises(ContractViolation):
            consistency_flags([f[0], f[0], f[1]], 1, DELTA)


class TestTargets:
    def test_oracle_targets_are_transmitted(self, ring, kb):
        sent = clean_frames(ring)
        recv = noisy(sent, "rician", 0.0, 3)
        tgt = reference_targets(recv, None, kb, "oracle", oracle_frames=sent, allow_oracle=True)
        np.testing.assert_array_equal(tgt, np.stack([f.keypoints for f in sent]))

    def test_oracle_needs_permission(self, ring, kb):
        sent = clean_frames(ring)
        with pytest.raises(ConfigurationError):
            reference_targets(sent, None, kb, "oracle", oracle_frames=sent)

    def test_neighbor_targets_near_truth(self, ring):
        sent = clean_frames(ring)
        tgt = reference_targets(sent, None, None, "neighbor_interp", view_offset=1)
        err = np.linalg.norm(tgt - np.stack([f.keypoints for f in sent]), axis=2)
        fl = consistency_flags(sent, 1, DELTA)
        np.testing.assert_allclose(err, fl.deviation, rtol=1e-12)
        assert err.max() < DELTA

    def test_knowledge_base_targets_static_scene(self, ring):
        m = MotionParams(arm_yaw_amplitude=0.0, arm_pitch_amplitude=0.0, box_speed=0.0)
        kb = build_knowledge_base(m, ring)
        frames = clean_frames(ring, 0, m)
        tgt = reference_targets(frames, None, kb, "knowledge_base")
        np.testing.assert_allclose(tgt, np.stack([f.keypoints for f in frames]), atol=1e-12)

    def test_unknown_mode(self, ring):
        with pytest.raises(ConfigurationError):
            reference_targets(clean_frames(ring), None, None, "magic")


class TestSelectiveDenoise:
    def test_noiseless_pass_through(self, ring, kb):
        frames = clean_frames(ring)
        out, fl = selective_denoise(frames, DenoiserConfig(), kb, return_flags=True)
        assert fl.count == 0
        for a, b in zip(frames, out):
            np.testing.assert_array_equal(a.keypoints, b.keypoints)

    @given(st.integers(0, 10_000), st.sampled_from(["awgn", "rayleigh", "rician"]), st.sampled_from([0.0, 10.0, 20.0]))
    @settings(max_examples=25, deadline=None)
    def test_only_flagged_points_move(self, seed, kind, snr):
        frames = noisy(clean_frames(make_camera_ring()), kind, snr, seed)
        out, fl = selective_denoise(frames, DenoiserConfig(), None, return_flags=True)
        for v, (a, b) in enumerate(zip(frames, out)):
            moved = np.any(a.keypoints != b.keypoints, axis=1)
            assert not (moved & ~fl.flags[v]).any()

    def test_oracle_targets_reduce_kpe(self, ring, kb):
        sent = clean_frames(ring)
        cfg = DenoiserConfig(target_mode="oracle", allow_oracle=True)
        before, after = [], []
        for seed in range(100):
            recv = noisy(sent, "rician", 0.0, seed)
            out = selective_denoise(recv, cfg, kb, oracle_frames=sent)
            ref = np.stack([f.keypoints for f in sent])
            before.append(kpe(ref, np.stack([f.keypoints for f in recv])))
            after.append(kpe(ref, np.stack([f.keypoints for f in out])))
        assert np.mean(after) < np.mean(before)

    def test_rayleigh_residual_exceeds_rician(self, ring):
        # default (deployable) neighbor-midpoint targets
        sent = clean_frames(ring)
        ref = np.stack([f.keypoints for f in sent])
        res = {}
        for kind in ("rayleigh", "rician"):
            vals = []
            for seed in range(100):
                out = selective_denoise(noisy(sent, kind, 0.0, seed), DenoiserConfig())
                vals.append(kpe(ref, np.stack([f.keypoints for f in out])))
            res[kind] = np.median(vals)
        assert res["rayleigh"] > res["rician"]

    def test_missing_targets_warn(self, ring):
        frames = clean_frames(ring)[:3]
        frames[1].keypoints[0] += 100.0
        frames[0].validity[:] = False
        with pytest.warns(UserWarning, match="no reference targets"):
            out = selective_denoise(frames, DenoiserConfig(wrap=False))
        np.testing.assert_array_equal(out[1].keypoints, frames[1].keypoints)

    def test_needs_three_views(self, ring):
        with pytest.raises(ContractViolation):
            selective_denoise(clean_frames(ring)[:2])

    def test_denoise_view_ignores_unflagged(self):
        kp = np.array([[10.0, 10.0], [500.0, 300.0], [900.0, 100.0]])
        tgt = kp + [[0.0, 0.0], [80.0, 0.0], [0.0, 0.0]]
        out = denoise_view(kp, tgt, np.array([False, True, False]), 0.05)
        np.testing.assert_array_equal(out[[0, 2]], kp[[0, 2]])
        assert np.linalg.norm(out[1] - tgt[1]) < np.linalg.norm(kp[1] - tgt[1])


class TestConfig:
    def test_delta_default(self):
        assert DenoiserConfig().delta_px() == pytest.approx(26.8328, abs=1e-4)
        assert DenoiserConfig(delta=5.0).delta_px() == 5.0

    def test_validation(self):
        for bad in (dict(eta=0.0), dict(delta=-1.0), dict(view_offset=0), dict(target_mode="x"), dict(delta_frac=0)):
            with pytest.raises(ConfigurationError):
                DenoiserConfig(**bad)

    def test_dict_round_trip(self):
        cfg = DenoiserConfig(eta=0.01, delta=12.0, view_offset=2, target_mode="knowledge_base", wrap=False)
        assert DenoiserConfig.from_dict(cfg.to_dict()) == cfg
        with pytest.raises(ConfigurationError):
            DenoiserConfig.from_dict({"sigma": 1})


def test_kb_projection_matches_render(ring, kb):
    frames = clean_frames(ring)
    for f, cam in zip(frames, ring):
        np.testing.assert_array_equal(project_points(cam, kb.object_anchors), f.keypoints)
