import csv
import json
import math

import numpy as np
import pytest

from semcom import channel as ch
from semcom import harness as H
from semcom.correction import DenoiserConfig
from semcom.errors import ConfigurationError
from semcom.scene import FRAMEWORKS, TEMPLATE_SAMPLING_TOLERANCE

NOISELESS = ch.ChannelConfig("awgn")


def small_cfg(**kw):
    base = dict(frameworks=("gscs", "gscs_ot"), snr_list_db=(0.0, 10.0, 20.0), trials=10, t_o=0.0)
    base.update(kw)
    return H.ExperimentConfig(**base)


class TestRunTrial:
    @pytest.mark.parametrize("framework", FRAMEWORKS)
    def test_noiseless_identity(self, framework):
        rec = H.run_trial(small_cfg(frameworks=FRAMEWORKS), 0, framework=framework, channel=NOISELESS)
        assert rec.status == "ok"
        assert rec.metrics.kpe == 0.0
        assert rec.metrics.p2point < TEMPLATE_SAMPLING_TOLERANCE
        assert rec.metrics.chamfer < TEMPLATE_SAMPLING_TOLERANCE**2

    def test_denoiser_pass_through_at_infinite_snr(self):
        cfg = small_cfg()
        a = H.run_trial(cfg, 3, framework="gscs", channel=NOISELESS).metrics
        b = H.run_trial(cfg, 3, framework="gscs_ot", channel=NOISELESS).metrics
        assert (a.kpe, a.chamfer, a.p2point) == (b.kpe, b.chamfer, b.p2point)

    def test_deterministic_and_independent(self):
        cfg = small_cfg()
        chan = ch.ChannelConfig("rician", 5.0)
        a = H.run_trial(cfg, 7, framework="gscs_ot", channel=chan).row()
        H.run_trial(cfg, 8, framework="gscs_ot", channel=chan)
        b = H.run_trial(cfg, 7, framework="gscs_ot", channel=chan).row()
        assert a == b

    def test_rician_ordering(self):
        cfg = small_cfg(frameworks=FRAMEWORKS)
        chan = ch.ChannelConfig("rician", 0.0)
        med = {
            fw: np.median([H.run_trial(cfg, s, framework=fw, channel=chan).metrics.kpe for s in range(100)])
            for fw in ("gscs", "gscs_ot", "gscm", "gscm_ot")
        }
        assert med["gscm_ot"] < med["gscm"]
        assert med["gscs_ot"] < med["gscs"]

    def test_payload_accounting(self):
        cfg = small_cfg(frameworks=FRAMEWORKS)
        gsc = H.run_trial(cfg, 0, 1, framework="gscs", channel=NOISELESS).metrics
        img = H.run_trial(cfg, 0, 1, framework="imagecom", channel=NOISELESS).metrics
        assert gsc.payload_bits == 36 * 576
        assert img.payload_bits == 36 * 1200 * 600 * 24
        assert img.latency.t_wireless / gsc.latency.t_wireless == pytest.approx(30_000.0, rel=1e-12)
        # the knowledge base is billed once, on frame 0
        first = H.run_trial(cfg, 0, 0, framework="gscs", channel=NOISELESS).metrics
        assert first.payload_bits == 36 * 576 + H._knowledge_base(cfg.motion).bit_size

    def test_latency_ledger(self):
        rec = H.run_trial(small_cfg(t_o=None), 0, 1, framework="gscs_ot", channel=ch.ChannelConfig("awgn", 0.0))
        lat = rec.metrics.latency
        assert lat.t_semantic == H.DEFAULT_T_S and lat.t_generation == H.DEFAULT_T_G
        assert 0.0 < lat.t_ot < 0.1
        assert lat.total == lat.t_semantic + lat.t_wireless + lat.t_ot + lat.t_generation

    def test_failure_becomes_status(self, monkeypatch):
        def boom(*a, **k):
            raise RuntimeError("injected")

        monkeypatch.setattr(H, "_gsc_trial", boom)
        rec = H.run_trial(small_cfg(), 0, framework="gscs", channel=NOISELESS)
        assert rec.status == "error:RuntimeError" and rec.metrics is None
        assert rec.row()["kpe_px"] == ""

    def test_detail(self, tmp_path):
        rec, detail = H.run_trial(
            small_cfg(), 0, framework="gscs_ot", channel=ch.ChannelConfig("rician", 0.0), keep_detail=True
        )
        assert len(detail.sent) == len(detail.received) == len(detail.corrected) == 36
        H.write_scatter_csv(tmp_path / "s.csv", detail)
        rows = list(csv.DictReader(open(tmp_path / "s.csv")))
        assert len(rows) == 36 * 9 and set(rows[0]) == {
            "view", "index", "sent_x", "sent_y", "received_x", "received_y", "denoised_x", "denoised_y"
        }


class TestSweep:
    def test_row_count_and_schema(self, tmp_path):
        res = H.sweep(small_cfg(), tmp_path)
        assert res.n_rows == 60 and res.exit_code == 0
        with open(res.runs_csv) as fh:
            header = fh.readline().strip().split(",")
        assert tuple(header) == H.CSV_FIELDS
        summary = list(csv.DictReader(open(res.summary_csv)))
        assert len(summary) == 6
        for row in summary:
            assert float(row["kpe_px_q25"]) <= float(row["kpe_px_median"]) <= float(row["kpe_px_q75"])

    def test_byte_identical_rerun(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(small_cfg(trials=3).to_dict()))
        a = H.sweep(H.ExperimentConfig.from_json(cfg_path), tmp_path / "a")
        b = H.sweep(H.ExperimentConfig.from_json(cfg_path), tmp_path / "b", workers=2)
        assert a.runs_csv.read_bytes() == b.runs_csv.read_bytes()
        assert a.summary_csv.read_bytes() == b.summary_csv.read_bytes()

    def test_trial_independence(self):
        few = {(r.framework, r.snr_db, r.seed): r.row() for r in H.run_records(small_cfg(trials=2))}
        many = {(r.framework, r.snr_db, r.seed): r.row() for r in H.run_records(small_cfg(trials=4))}
        for key, row in few.items():
            assert many[key] == row

    def test_all_failures_exit_3(self, tmp_path, monkeypatch):
        monkeypatch.setattr(H, "_gsc_trial", lambda *a, **k: 1 / 0)
        res = H.sweep(small_cfg(trials=1), tmp_path)
        assert res.n_ok == 0 and res.exit_code == 3
        rows = list(csv.DictReader(open(res.runs_csv)))
        assert all(r["status"] == "error:ZeroDivisionError" for r in rows)
        assert math.isnan(float(list(csv.DictReader(open(res.summary_csv)))[0]["kpe_px_median"]))

    def test_multiple_frames(self):
        recs = H.run_records(small_cfg(frameworks=("gscs",), snr_list_db=(10.0,), trials=2, frames=3))
        assert [(r.seed, r.frame) for r in recs] == [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]


class TestConfig:
    def test_validation(self):
        for bad in (
            dict(trials=0),
            dict(snr_list_db=()),
            dict(frameworks=("gscs", "nope")),
            dict(denoiser=None),
            dict(link_rate_bps=0.0),
            dict(workers=0),
            dict(t_o=-1.0),
        ):
            with pytest.raises(ConfigurationError):
                small_cfg(**bad)

    def test_non_ot_without_denoiser_is_fine(self):
        assert small_cfg(frameworks=("gscs",), denoiser=None).denoiser is None

    def test_dict_round_trip(self):
        cfg = small_cfg(
            channels=(ch.ChannelConfig("rician", rician_k=2.0), ch.ChannelConfig("awgn")),
            denoiser=DenoiserConfig(eta=0.01),
            seed=42,
        )
        back = H.ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert back == cfg

    def test_spec_style_fields(self):
        cfg = H.ExperimentConfig.from_dict(
            {
                "framework": "gscm_ot",
                "channel": [{"kind": "rayleigh", "snr_db": 0}, {"kind": "rayleigh", "snr_db": 10}],
                "trials": 2,
                "latency_constants": {"t_s": 0.1, "t_g": 2.0},
            }
        )
        assert cfg.frameworks == ("gscm_ot",) and cfg.snr_list_db == (0.0, 10.0)
        assert (cfg.t_s, cfg.t_g) == (0.1, 2.0)
        assert cfg.channels == (ch.ChannelConfig("rayleigh"),)

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigurationError):
            H.ExperimentConfig.from_dict({"trails": 3})

    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigurationError):
            H.ExperimentConfig.from_json(p)
