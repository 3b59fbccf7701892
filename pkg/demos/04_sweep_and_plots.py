"""
A small SNR sweep with charts
=============================

Runs every framework over three SNRs on a Rician channel, then writes the
CSV tables and SVG charts next to this script. The same thing is available
as ``semcom sweep`` and ``semcom plot``.
"""

from pathlib import Path

from semcom import channel as ch
from semcom import harness as H
from semcom.plotting import plot_emit
from semcom.scene import FRAMEWORKS

out = Path(__file__).with_name("sweep_output")
cfg = H.ExperimentConfig(
    frameworks=FRAMEWORKS,
    channels=(ch.ChannelConfig("rician"),),
    snr_list_db=(0.0, 10.0, 20.0),
    trials=5,
    t_o=0.0,
)
res = H.sweep(cfg, out)
print(f"{res.n_ok}/{res.n_rows} trials ok")

# medians per cell
for row in res.summary:
    print(f"{row['framework']:9s} {row['snr_db']:>5s} dB  KPE {float(row['kpe_px_median']):8.1f} px  "
          f"P2Point {float(row['p2point_m_median']):.4f} m  latency {float(row['total_s_median']):.4f} s")

for kind in ("kpe", "p2point", "latency"):
    for p in plot_emit(res.runs_csv, kind, out):
        print("wrote", p)

# one trial kept in detail for the scatter overlay
_, detail = H.run_trial(cfg, 0, framework="gscs_ot", channel=ch.ChannelConfig("rician", 0.0), keep_detail=True)
H.write_scatter_csv(out / "scatter.csv", detail)
print("wrote", plot_emit(out / "scatter.csv", "scatter_denoise", out)[0])
