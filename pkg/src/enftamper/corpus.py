"""Synthetic labeled corpus: speech-like noise plus a drifting grid tone,
with deletion/insertion tampering at crossfaded splice points.

Two generator parameterizations are provided: "a" (the default training
condition) and "b" (noisier, faster-drifting) for cross-condition
generalization tests.  Everything is deterministic per seed.
"""

import hashlib
import json
import math
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np
from scipy.signal import butter, lfilter, sosfilt

from .audio_io import AudioClip, write_wav

CROSSFADE_S = 0.005
DRIFT_CLAMP_HZ = 0.3


@dataclass(frozen=True)
class EnfModelParams:
    nominal_hz: float = 50.0
    drift_sigma: float = 0.02     # stationary std of the mean-reverting drift
    drift_tau: float = 20.0       # mean-reversion time constant, seconds
    enf_amplitude: float = 0.05   # grid-tone amplitude relative to full scale
    speech_band: tuple = (300.0, 3400.0)
    snr_db: float = 20.0          # speech-to-broadband-noise ratio
    audio_rate: int = 8000
    speech_level: float = 0.15    # target speech RMS
    syllable_band: tuple = (3.0, 8.0)


PARAM_A = EnfModelParams()
PARAM_B = EnfModelParams(drift_sigma=0.035, snr_db=8.0, enf_amplitude=0.045)

PARAMETERIZATIONS = {"a": PARAM_A, "b": PARAM_B}


@dataclass(frozen=True)
class TamperSpec:
    kind: str                 # "delete" or "insert"
    t0: float
    t1: float
    donor_id: str = ""

    def __post_init__(self):
        if self.kind not in ("delete", "insert"):
            raise ValueError("kind must be delete or insert")
        if not 0.0 < self.t0 <= self.t1:
            raise ValueError("need 0 < t0 <= t1")


def _ou_track(n, fs, sigma, tau, rng):
    """Mean-reverting drift with stationary std sigma, clamped to +-0.3 Hz."""
    alpha = math.exp(-1.0 / (fs * tau))
    xi = rng.standard_normal(n)
    xi[0] = rng.standard_normal() / math.sqrt(1.0 - alpha ** 2)  # stationary start
    drift = lfilter([sigma * math.sqrt(1.0 - alpha ** 2)], [1.0, -alpha], xi)
    return np.clip(drift, -DRIFT_CLAMP_HZ, DRIFT_CLAMP_HZ)


def synthesize_with_truth(duration, params: EnfModelParams, seed):
    """Synthesize a recording; returns (clip, per-sample true ENF in Hz)."""
    if not 5.0 <= duration <= 60.0:
        raise ValueError("duration must be within [5, 60] s")
    fs = params.audio_rate
    n = int(round(duration * fs))
    rng = np.random.default_rng(seed)

    drift = _ou_track(n, fs, params.drift_sigma, params.drift_tau, rng)
    f_true = params.nominal_hz + drift
    phase = 2.0 * np.pi * np.cumsum(f_true) / fs + rng.uniform(0.0, 2.0 * np.pi)
    enf = params.enf_amplitude * np.cos(phase)

    band = butter(4, params.speech_band, btype="bandpass", fs=fs, output="sos")
    speech = sosfilt(band, rng.standard_normal(n))
    syl = butter(2, params.syllable_band, btype="bandpass", fs=fs, output="sos")
    envelope = np.maximum(sosfilt(syl, rng.standard_normal(n)), 0.0)
    env_rms = np.sqrt(np.mean(envelope ** 2))
    if env_rms > 0:
        envelope /= env_rms
    speech *= envelope
    rms = np.sqrt(np.mean(speech ** 2))
    if rms > 0:
        speech *= params.speech_level / rms

    noise_rms = params.speech_level / 10.0 ** (params.snr_db / 20.0)
    noise = noise_rms * rng.standard_normal(n)

    y = speech + noise + enf
    peak = np.max(np.abs(y))
    if peak >= 0.999:
        y *= 0.999 / peak
    clip = AudioClip(samples=y, sample_rate=fs, source_id=f"synth-{seed}")
    return clip, f_true


def synthesize_recording(duration, params: EnfModelParams, seed) -> AudioClip:
    """Speech-like noise + broadband noise + slowly drifting grid tone."""
    clip, _ = synthesize_with_truth(duration, params, seed)
    return clip


def _crossfade_join(head, tail, fs):
    L = int(round(CROSSFADE_S * fs))
    if L == 0 or len(head) < L or len(tail) < L:
        return np.concatenate([head, tail])
    u = np.linspace(0.0, 1.0, L)
    mixed = head[-L:] * (1.0 - u) + tail[:L] * u
    return np.concatenate([head[:-L], mixed, tail[L:]])


def tamper_delete(clip: AudioClip, t0: float, t1: float) -> AudioClip:
    """Remove samples in [t0, t1) and rejoin with a 5 ms crossfade."""
    fs = clip.sample_rate
    i0, i1 = int(round(t0 * fs)), int(round(t1 * fs))
    if not 0 <= i0 <= i1 <= len(clip.samples):
        raise ValueError("deletion bounds outside the clip")
    if i0 == i1:
        return clip
    out = _crossfade_join(clip.samples[:i0], clip.samples[i1:], fs)
    return AudioClip(samples=out, sample_rate=fs, source_id=clip.source_id + "+del")


def tamper_insert(clip: AudioClip, donor: AudioClip, t: float, span: float,
                  seed) -> AudioClip:
    """Splice a random span-long donor segment in at time t (crossfaded)."""
    fs = clip.sample_rate
    if donor.sample_rate != fs:
        raise ValueError("donor sample rate differs from the clip")
    n_seg = int(round(span * fs))
    if n_seg > len(donor.samples):
        raise ValueError("span longer than the donor")
    it = int(round(t * fs))
    if not 0 <= it <= len(clip.samples):
        raise ValueError("insertion point outside the clip")
    rng = np.random.default_rng(seed)
    start = int(rng.integers(0, len(donor.samples) - n_seg + 1))
    seg = donor.samples[start:start + n_seg]
    out = _crossfade_join(clip.samples[:it], seg, fs)
    out = _crossfade_join(out, clip.samples[it:], fs)
    return AudioClip(samples=out, sample_rate=fs, source_id=clip.source_id + "+ins")


@dataclass(frozen=True)
class CorpusConfig:
    n_genuine: int = 100
    n_tampered: int = 100
    # just above the 10001-tap bandpass length at the 1 kHz analysis rate
    duration_s: float = 10.5
    tamper_min_s: float = 0.5
    tamper_max_s: float = 2.5
    parameterization: str = "a"

    def params(self) -> EnfModelParams:
        return PARAMETERIZATIONS[self.parameterization]


def manifest_hash(manifest: dict) -> str:
    blob = json.dumps(manifest, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def generate_corpus(out_dir, config: CorpusConfig, seed: int) -> dict:
    """Write labeled WAVs plus a manifest JSON; fully seeded and reproducible."""
    if config.n_genuine < 1 or config.n_tampered < 1:
        raise ValueError("need at least one clip per class")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = config.params()
    root = np.random.SeedSequence(seed)
    n_total = config.n_genuine + config.n_tampered
    children = root.spawn(n_total)
    pick_rng = np.random.default_rng(root.spawn(1)[0])

    entries = []
    for i in range(n_total):
        tampered = i >= config.n_genuine
        sub = [int(s) for s in children[i].generate_state(4)]
        name = f"clip_{i:04d}.wav"
        if not tampered:
            clip = synthesize_recording(config.duration_s, params, sub[0])
            tamper, splices = None, []
        else:
            span = float(pick_rng.uniform(config.tamper_min_s, config.tamper_max_s))
            kind = "delete" if pick_rng.random() < 0.5 else "insert"
            if kind == "delete":
                base = synthesize_recording(config.duration_s + span, params, sub[0])
                t0 = float(pick_rng.uniform(1.0, config.duration_s - 1.0))
                clip = tamper_delete(base, t0, t0 + span)
                tamper = {"kind": "delete", "t0": t0, "t1": t0 + span, "span": span}
                splices = [t0]
            else:
                base = synthesize_recording(config.duration_s - span, params, sub[0])
                donor = synthesize_recording(max(5.0, span + 2.0), params, sub[1])
                t0 = float(pick_rng.uniform(1.0, config.duration_s - span - 1.0))
                clip = tamper_insert(base, donor, t0, span, sub[2])
                tamper = {"kind": "insert", "t0": t0, "t1": t0 + span, "span": span,
                          "donor_seed": sub[1], "segment_seed": sub[2]}
                splices = [t0, t0 + span]
        write_wav(out / name, clip)
        entries.append({
            "path": name,
            "label": "tampered" if tampered else "genuine",
            "duration_s": len(clip.samples) / clip.sample_rate,
            "seed": sub[0],
            "tamper": tamper,
            "splice_times": splices,
        })

    manifest = {
        "schema_version": 1,
        "generator": {"seed": seed, **asdict(config), "params": asdict(params)},
        "entries": entries,
    }
    manifest["manifest_hash"] = manifest_hash(
        {k: v for k, v in manifest.items() if k != "manifest_hash"})
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest
