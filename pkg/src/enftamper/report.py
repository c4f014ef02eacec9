"""Report rendering: delimited series for external tools plus matplotlib
figures saved next to them (phase estimates, smoothed IF, and attention
weights when a checkpoint is supplied).
"""

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .model import stack_batch
from .pipeline import extract_bundle, sequences_for_clip


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _phase_figure(path, phase):
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    frames = np.arange(phase.n_frames)
    ax1.plot(frames, phase.phi0, lw=0.7, label="phi0")
    ax1.plot(frames, phase.phi1, lw=0.7, label="phi1")
    ax1.set_ylabel("phase [rad]")
    ax1.legend(loc="upper right", fontsize=8)
    ax2.plot(frames, phase.f_dft1, lw=0.7, color="tab:green")
    ax2.set_ylabel("frame freq [Hz]")
    ax2.set_xlabel("frame")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _freq_figure(path, freq):
    t = (np.arange(len(freq.f_hil)) + freq.trim_samples) / freq.sample_rate
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(t, freq.f_hil, lw=0.6)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("instantaneous freq [Hz]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _attention_figure(path, weights, sizes):
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(weights, lw=0.5)
    edge = 0
    for name, size in sizes:
        ax.axvline(edge, color="gray", lw=0.5, ls="--")
        ax.text(edge + size / 2, 1.02, name, ha="center", fontsize=7,
                transform=ax.get_xaxis_transform())
        edge += size
    ax.set_xlabel("fused coordinate")
    ax.set_ylabel("attention weight")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(clip, cfg, out_dir, stem, net=None, stdz=None):
    """Emit CSV series and PNG figures for one clip; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    phase, freq = sequences_for_clip(clip, cfg)
    written = []

    p_csv = out / f"{stem}_phase.csv"
    _write_csv(p_csv, ["frame_index", "phi0", "phi1", "f_dft1"],
               [(i, phase.phi0[i], phase.phi1[i], phase.f_dft1[i])
                for i in range(phase.n_frames)])
    written.append(p_csv)
    f_csv = out / f"{stem}_freq.csv"
    _write_csv(f_csv, ["index", "f_hil"],
               [(i, v) for i, v in enumerate(freq.f_hil)])
    written.append(f_csv)

    p_png = out / f"{stem}_phase.png"
    _phase_figure(p_png, phase)
    written.append(p_png)
    f_png = out / f"{stem}_freq.png"
    _freq_figure(f_png, freq)
    written.append(f_png)

    if net is not None and stdz is not None:
        bundle = extract_bundle(clip, cfg, net.cfg.m_phase, net.cfg.m_freq)
        batch, _ = stack_batch([bundle], stdz)
        _, weights = net.forward(batch, training=False, return_attention=True)
        w = weights[0]
        a_csv = out / f"{stem}_attention.csv"
        _write_csv(a_csv, ["index", "weight"], [(i, v) for i, v in enumerate(w)])
        written.append(a_csv)
        a_png = out / f"{stem}_attention.png"
        sizes = [("shallow", 3), ("phase", net.phase_branch.out_dim),
                 ("freq", net.freq_branch.out_dim)]
        _attention_figure(a_png, w, sizes)
        written.append(a_png)
    return written
