"""End-to-end extraction: audio file -> ENF component -> phase/IF sequences
-> FeatureBundle, plus the per-corpus bookkeeping that pins the square-matrix
frame lengths to the longest sequences in a dataset.

The expensive DSP runs once per clip and is cached on disk, so training and
evaluation never touch audio again.
"""

import json
from pathlib import Path

import numpy as np

from .audio_io import read_wav, resample, wav_info
from .bandpass import extract_enf
from .config import PipelineConfig, config_hash
from .features import build_matrix, fit_sum_of_sines, frame_length_for, shallow_stats
from .instfreq import analytic_signal, instantaneous_frequency, smooth_and_trim
from .model import FeatureBundle
from .phase import estimate_phase, wrap_phase
from .storage import load_bundle, save_bundle

LABELS = {"genuine": 0, "tampered": 1}


def clip_to_enf(clip, cfg: PipelineConfig):
    work = resample(clip, cfg.resample_hz)
    return extract_enf(work, cfg.bandpass_spec())


def sequences_for_clip(clip, cfg: PipelineConfig):
    """Phase and smoothed-IF sequences for one clip."""
    enf = clip_to_enf(clip, cfg)
    phase = estimate_phase(enf, n_dft=cfg.n_dft)
    fi = instantaneous_frequency(analytic_signal(enf), enf.sample_rate)
    freq = smooth_and_trim(fi, enf.sample_rate, enf.nominal_hz)
    return phase, freq


def feature_sequences(phase, freq):
    """The two sequences that feed matrices and fits.

    Phase path: wrapped first differences of the high-resolution estimate.
    Frequency path: the smoothed IF itself.
    """
    return wrap_phase(np.diff(phase.phi1)), freq.f_hil


def sequence_lengths_for_samples(n_samples: int, rate: int, cfg: PipelineConfig):
    """(phase-diff length, IF length) from header arithmetic alone."""
    n_at_fs = int(round(n_samples * cfg.resample_hz / rate))
    hop = int(cfg.resample_hz // cfg.nominal_hz)
    frame_len = 10 * hop
    n_frames = (n_at_fs - frame_len) // hop + 1
    return n_frames - 1, n_at_fs - 2 * cfg.resample_hz


def corpus_max_lengths(manifest: dict, corpus_dir, cfg: PipelineConfig):
    """Longest phase-diff / IF lengths over a corpus, via WAV headers."""
    best_p, best_f = 0, 0
    for entry in manifest["entries"]:
        n, rate = wav_info(Path(corpus_dir) / entry["path"])
        lp, lf = sequence_lengths_for_samples(n, rate, cfg)
        best_p, best_f = max(best_p, lp), max(best_f, lf)
    return best_p, best_f


def matrix_dims(cfg: PipelineConfig):
    if cfg.max_phase_len is None or cfg.max_freq_len is None:
        raise ValueError("max sequence lengths are not pinned in this config")
    return frame_length_for(cfg.max_phase_len), frame_length_for(cfg.max_freq_len)


def extract_bundle(clip, cfg: PipelineConfig, m_phase: int, m_freq: int,
                   label=None) -> FeatureBundle:
    """Full feature extraction for one clip at pinned matrix sizes."""
    phase, freq = sequences_for_clip(clip, cfg)
    pseq, fseq = feature_sequences(phase, freq)
    if len(pseq) > m_phase * m_phase or len(fseq) > m_freq * m_freq:
        raise ValueError(
            "clip exceeds the configured maximum duration for this feature set")
    return FeatureBundle(
        shallow=shallow_stats(phase, freq),
        phase_matrix=build_matrix(pseq, m_phase),
        freq_matrix=build_matrix(fseq, m_freq),
        phase_coeffs=fit_sum_of_sines(pseq, cfg.fit_terms),
        freq_coeffs=fit_sum_of_sines(fseq, cfg.fit_terms),
        label=label,
        source_id=clip.source_id,
    )


def load_manifest(corpus_dir):
    with open(Path(corpus_dir) / "manifest.json") as fh:
        return json.load(fh)


def extract_corpus_features(corpus_dir, cfg: PipelineConfig, out_dir,
                            m_phase=None, m_freq=None, force=False,
                            progress=None):
    """Extract (with caching) FeatureBundles for every manifest entry.

    Matrix dims default to the corpus' own longest sequences; pass m_phase /
    m_freq to extract against another corpus' sizing (cross-condition
    evaluation against an existing checkpoint).  Returns the index dict.
    """
    corpus_dir = Path(corpus_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(corpus_dir)
    if m_phase is None or m_freq is None:
        max_p, max_f = corpus_max_lengths(manifest, corpus_dir, cfg)
        m_phase, m_freq = frame_length_for(max_p), frame_length_for(max_f)
    chash = config_hash(cfg)

    entries = []
    for i, entry in enumerate(manifest["entries"]):
        stem = Path(entry["path"]).stem
        bpath = out / f"{stem}.fb"
        done = False
        if bpath.exists() and not force:
            try:
                _, meta = load_bundle(bpath)
                done = (meta["config_hash"] == chash and meta["m_phase"] == m_phase
                        and meta["m_freq"] == m_freq)
            except Exception:
                done = False
        if not done:
            clip = read_wav(corpus_dir / entry["path"])
            bundle = extract_bundle(clip, cfg, m_phase, m_freq,
                                    label=LABELS[entry["label"]])
            save_bundle(bpath, bundle, chash)
        entries.append({"path": entry["path"], "bundle": bpath.name,
                        "label": entry["label"]})
        if progress:
            progress(i + 1, len(manifest["entries"]))

    index = {
        "kind": "feature-index",
        "schema_version": 1,
        "config_hash": chash,
        "m_phase": m_phase,
        "m_freq": m_freq,
        "corpus_manifest_hash": manifest.get("manifest_hash", ""),
        "entries": entries,
    }
    with open(out / "index.json", "w") as fh:
        json.dump(index, fh, indent=1)
    return index


def load_feature_set(features_dir):
    """Load all cached bundles behind an index; returns (index, bundles)."""
    features_dir = Path(features_dir)
    with open(features_dir / "index.json") as fh:
        index = json.load(fh)
    bundles = []
    for entry in index["entries"]:
        bundle, meta = load_bundle(features_dir / entry["bundle"])
        if meta["config_hash"] != index["config_hash"]:
            raise ValueError(f"bundle {entry['bundle']} does not match the index config")
        bundles.append(bundle)
    return index, bundles


def split_indices(labels, train_frac, val_frac, seed):
    """Deterministic stratified train/val/test index split."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        n_tr = int(round(len(idx) * train_frac))
        n_va = int(round(len(idx) * val_frac))
        train.extend(int(i) for i in idx[:n_tr])
        val.extend(int(i) for i in idx[n_tr:n_tr + n_va])
        test.extend(int(i) for i in idx[n_tr + n_va:])
    return sorted(train), sorted(val), sorted(test)
