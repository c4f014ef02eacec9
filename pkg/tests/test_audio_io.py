import numpy as np
import pytest

from enftamper.audio_io import (
    AudioClip,
    WavFormatError,
    read_wav,
    resample,
    resample_filter,
    wav_info,
    write_wav,
)


def _tone(freq, fs, dur, amp=1.0, phase=0.0):
    t = np.arange(int(round(dur * fs))) / fs
    return amp * np.cos(2 * np.pi * freq * t + phase)


def test_read_wav_header_arithmetic(tmp_path):
    clip = AudioClip(samples=_tone(50, 8000, 1.0, amp=0.5), sample_rate=8000)
    path = tmp_path / "t.wav"
    write_wav(path, clip)
    back = read_wav(path)
    assert back.sample_rate == 8000
    assert len(back.samples) == 8000


def test_pcm_scaling_full_negative(tmp_path):
    import struct
    payload = struct.pack("<h", -32768)
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 1, 1, 8000, 16000, 2, 16,
        b"data", len(payload))
    p = tmp_path / "neg.wav"
    p.write_bytes(header + payload)
    clip = read_wav(p)
    assert clip.samples[0] == -1.0


def test_stereo_rejected(tmp_path):
    import struct
    payload = struct.pack("<hh", 0, 0)
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 1, 2, 8000, 32000, 4, 16,
        b"data", len(payload))
    p = tmp_path / "st.wav"
    p.write_bytes(header + payload)
    with pytest.raises(WavFormatError, match="multichannel"):
        read_wav(p)


def test_malformed_and_missing(tmp_path):
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"RIFX....WAVE")
    with pytest.raises(WavFormatError):
        read_wav(bad)
    with pytest.raises(FileNotFoundError):
        read_wav(tmp_path / "nope.wav")


def test_unsupported_codec(tmp_path):
    import struct
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 38, b"WAVE",
        b"fmt ", 16, 7, 1, 8000, 8000, 1, 8,  # mu-law
        b"data", 2) + b"\0\0"
    p = tmp_path / "ulaw.wav"
    p.write_bytes(header)
    with pytest.raises(WavFormatError, match="codec"):
        read_wav(p)


def test_float32_roundtrip(tmp_path):
    import struct
    vals = np.array([0.25, -0.5, 0.125], dtype="<f4")
    payload = vals.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 3, 1, 1000, 4000, 4, 32,
        b"data", len(payload))
    p = tmp_path / "f32.wav"
    p.write_bytes(header + payload)
    clip = read_wav(p)
    assert np.allclose(clip.samples, vals.astype(np.float64))


def test_pcm_float_pcm_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(0)
    ints = rng.integers(-32768, 32768, size=4096).astype(np.int16)
    clip = AudioClip(samples=ints / 32768.0, sample_rate=8000)
    p = tmp_path / "rt.wav"
    write_wav(p, clip)
    back = read_wav(p)
    assert np.array_equal(np.round(back.samples * 32768.0).astype(np.int16), ints)


def test_wav_info_matches_decode(tmp_path):
    clip = AudioClip(samples=_tone(100, 8000, 2.5), sample_rate=8000)
    p = tmp_path / "i.wav"
    write_wav(p, clip)
    n, rate = wav_info(p)
    assert (n, rate) == (20000, 8000)


def test_clip_invariants():
    with pytest.raises(ValueError):
        AudioClip(samples=np.array([]), sample_rate=8000)
    with pytest.raises(ValueError):
        AudioClip(samples=np.array([0.0, np.nan]), sample_rate=8000)
    with pytest.raises(ValueError):
        AudioClip(samples=np.array([0.0]), sample_rate=0)


def test_resample_identity():
    clip = AudioClip(samples=_tone(50, 1000, 1.0), sample_rate=1000)
    out = resample(clip, 1000)
    assert out is clip


def test_resample_rejects_upsampling_and_bad_rate():
    clip = AudioClip(samples=_tone(50, 1000, 1.0), sample_rate=1000)
    with pytest.raises(ValueError):
        resample(clip, 2000)
    with pytest.raises(ValueError):
        resample(clip, 0)


def test_resample_length_ratio_44100():
    clip = AudioClip(samples=np.ones(194481) * 0.1, sample_rate=44100)
    out = resample(clip, 1000)
    assert abs(len(out.samples) - 4410) <= 1


def test_resample_tone_amplitude():
    # 50 Hz unit tone, 8 kHz -> 1 kHz: compare against the analytic target
    clip = AudioClip(samples=_tone(50, 8000, 10.0), sample_rate=8000)
    out = resample(clip, 1000)
    assert abs(len(out.samples) - 10000) <= 1
    ref = _tone(50, 1000, len(out.samples) / 1000.0)[:len(out.samples)]
    mid = slice(1000, len(out.samples) - 1000)
    # amplitude via rms over whole cycles of the interior
    rms_out = np.sqrt(np.mean(out.samples[mid] ** 2))
    rms_ref = np.sqrt(np.mean(ref[mid] ** 2))
    db = 20 * np.log10(rms_out / rms_ref)
    assert abs(db) < 0.1
    assert np.max(np.abs(out.samples[mid] - ref[mid])) < 0.01


def test_resample_antialias_attenuation():
    # designed response must be >= 80 dB down above the target Nyquist
    for up, down in ((1, 8), (10, 441)):
        h = resample_filter(up, down)
        n_fft = 1 << 18
        mag = np.abs(np.fft.rfft(h / up, n_fft))
        f = np.fft.rfftfreq(n_fft, d=1.0)  # cycles/sample at the upsampled rate
        stop = f >= 0.5 / down
        atten = 20 * np.log10(mag[stop].max())
        assert atten <= -80.0, (up, down, atten)


def test_resample_dft_peak_preserved():
    # band-limited (< 400 Hz) content keeps its DFT peak within one bin of
    # a 2**16-point transform after resampling
    fs, target = 8000, 1000
    freq = 313.0
    clip = AudioClip(samples=_tone(freq, fs, 12.0), sample_rate=fs)
    out = resample(clip, target)
    n = 1 << 16
    spec = np.abs(np.fft.rfft(out.samples[500:-500], n))
    peak = np.argmax(spec) * target / n
    assert abs(peak - freq) <= target / n + 1e-9
