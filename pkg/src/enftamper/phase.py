"""Per-frame ENF phase estimation: conventional DFT phase and the
high-resolution derivative-spectrum estimate, plus the frame frequency.

Frames are ten nominal grid cycles long and hop by one cycle, windowed with
the endpoint-free Hanning convention (taps 0.5*(1-cos(2*pi*k/(M+1))),
k=1..M), whose tap sum is (M+1)/2.
"""

from dataclasses import dataclass

import numpy as np

_FFT_CHUNK = 64  # frames per batched rfft; bounds working memory


class DegenerateFrameError(ValueError):
    """Silent frame: no spectral energy in the search band."""


def wrap_phase(a):
    """Wrap angles to the principal interval (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w) if np.ndim(w) else (np.pi if w == -np.pi else float(w))


def hanning_window(m: int) -> np.ndarray:
    """Endpoint-free Hanning window of length m (sum = (m+1)/2)."""
    k = np.arange(1, m + 1, dtype=np.float64)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / (m + 1)))


@dataclass(frozen=True)
class FramingParams:
    frame_len: int
    hop: int
    window: np.ndarray

    @classmethod
    def for_rate(cls, sample_rate: float, nominal_hz: float) -> "FramingParams":
        cycle = sample_rate / nominal_hz
        if abs(cycle - round(cycle)) > 1e-9:
            raise ValueError("sample_rate must be an integer multiple of nominal_hz")
        hop = int(round(cycle))
        frame_len = 10 * hop
        return cls(frame_len=frame_len, hop=hop, window=hanning_window(frame_len))


@dataclass(frozen=True)
class PhaseSequence:
    """Per-frame phase estimates phi0/phi1 and frame frequency f_dft1."""

    phi0: np.ndarray
    phi1: np.ndarray
    f_dft1: np.ndarray
    n_frames: int
    flags: np.ndarray  # True where a silent frame inherited its predecessor

    def __post_init__(self):
        if not (len(self.phi0) == len(self.phi1) == len(self.f_dft1) == self.n_frames):
            raise ValueError("phase sequences must share one length")


def approx_derivative(enf) -> np.ndarray:
    """Two-point approximate first derivative, scaled by the sampling rate.

    out[n] = fs * (x[n] - x[n-1]); out[0] = 0 by convention.
    """
    x = np.asarray(enf.samples, dtype=np.float64)
    if len(x) < 2:
        raise ValueError("need at least two samples")
    out = np.zeros_like(x)
    out[1:] = enf.sample_rate * (x[1:] - x[:-1])
    return out


def frame_signal(x, fp: FramingParams) -> np.ndarray:
    """Split x into hop-spaced frames and apply the window.

    Returns an (n_frames, frame_len) array; frame k covers samples
    [k*hop, k*hop + frame_len).
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) < fp.frame_len:
        raise ValueError("signal shorter than one frame")
    n_frames = (len(x) - fp.frame_len) // fp.hop + 1
    view = np.lib.stride_tricks.sliding_window_view(x, fp.frame_len)[::fp.hop][:n_frames]
    return view * fp.window


def _scale_factor(k, n_dft):
    return (np.pi * k / n_dft) / np.sin(np.pi * k / n_dft)


def _phase_from_spectra(X, Xd, n_dft, nominal, f_d):
    """Vectorized per-frame estimation from raw/derivative frame spectra.

    X, Xd: (n_frames, n_bins) rfft outputs of the windowed raw frames and the
    windowed (forward-aligned) derivative frames.
    """
    k_lo = max(1, int(np.floor((nominal - 1.0) * n_dft / f_d)))
    k_hi = min(X.shape[1] - 1, int(np.ceil((nominal + 1.0) * n_dft / f_d)))
    band = np.abs(Xd[:, k_lo:k_hi + 1])
    kp = k_lo + np.argmax(band, axis=1)
    rows = np.arange(X.shape[0])
    mag_d = np.abs(Xd[rows, kp])
    mag_x = np.abs(X[rows, kp])
    bad = (mag_d <= 0.0) | (mag_x <= 0.0) | ~np.isfinite(mag_d) | ~np.isfinite(mag_x)
    mag_x_safe = np.where(mag_x > 0.0, mag_x, 1.0)

    f1 = _scale_factor(kp, n_dft) * mag_d / (2.0 * np.pi * mag_x_safe)
    f1 = np.clip(f1, nominal - 1.0, nominal + 1.0)
    phi0 = np.angle(X[rows, kp])

    kd = f1 * n_dft / f_d
    k_low = np.floor(kd).astype(int)
    k_high = np.ceil(kd).astype(int)
    th_low = np.angle(Xd[rows, k_low])
    th_high = np.angle(Xd[rows, k_high])
    frac = kd - k_low
    theta = th_low + frac * wrap_phase(th_high - th_low)  # k_high==k_low -> frac 0

    w0 = 2.0 * np.pi * f1 / f_d
    # tan-free form of the branch equation; scaling by cos(theta) only flips
    # the candidate between the two branch values, which are resolved below
    num = np.sin(theta) * (1.0 - np.cos(w0)) + np.sin(w0) * np.cos(theta)
    den = np.cos(theta) * (1.0 - np.cos(w0)) - np.sin(theta) * np.sin(w0)
    v = np.arctan2(num, den)
    alt = wrap_phase(v + np.pi)
    phi1 = np.where(np.abs(wrap_phase(v - phi0)) <= np.abs(wrap_phase(alt - phi0)), v, alt)
    return phi0, phi1, f1, bad


def estimate_frame_phase(frame_x, frame_dx, n_dft: int, nominal: float, f_d: float):
    """Estimate (phi0, phi1, f1) for one windowed frame pair.

    frame_x is the windowed raw frame, frame_dx the windowed derivative frame
    covering the same time span.  Raises DegenerateFrameError on silence.
    """
    frame_x = np.asarray(frame_x, dtype=np.float64)
    if n_dft < len(frame_x):
        raise ValueError("n_dft must be at least the frame length")
    X = np.fft.rfft(frame_x, n_dft)[None, :]
    Xd = np.fft.rfft(np.asarray(frame_dx, dtype=np.float64), n_dft)[None, :]
    phi0, phi1, f1, bad = _phase_from_spectra(X, Xd, n_dft, nominal, f_d)
    if bad[0]:
        raise DegenerateFrameError("no spectral energy in the search band")
    return float(phi0[0]), float(phi1[0]), float(f1[0])


def estimate_phase(enf, n_dft: int = 32768) -> PhaseSequence:
    """Run per-frame phase estimation over a whole EnfComponent.

    Silent frames inherit the previous frame's estimates and are flagged;
    a silent first frame falls back to (0, 0, nominal).
    """
    fp = FramingParams.for_rate(enf.sample_rate, enf.nominal_hz)
    if len(enf.samples) < fp.frame_len + fp.hop:
        raise ValueError("component shorter than two frames")
    if n_dft < fp.frame_len:
        raise ValueError("n_dft must be at least the frame length")
    dx = approx_derivative(enf)
    # advance the difference by one sample so frame k's derivative spectrum is
    # the discrete derivative of frame k's raw samples; the phi1 branch
    # identity assumes this alignment
    dx_fwd = np.append(dx[1:], 0.0)
    frames_x = frame_signal(enf.samples, fp)
    frames_dx = frame_signal(dx_fwd, fp)
    n = len(frames_x)

    phi0 = np.empty(n)
    phi1 = np.empty(n)
    f1 = np.empty(n)
    bad = np.empty(n, dtype=bool)
    for s in range(0, n, _FFT_CHUNK):
        e = min(s + _FFT_CHUNK, n)
        X = np.fft.rfft(frames_x[s:e], n_dft, axis=1)
        Xd = np.fft.rfft(frames_dx[s:e], n_dft, axis=1)
        phi0[s:e], phi1[s:e], f1[s:e], bad[s:e] = _phase_from_spectra(
            X, Xd, n_dft, enf.nominal_hz, enf.sample_rate)

    if bad.any():
        for i in np.flatnonzero(bad):
            if i == 0:
                phi0[0], phi1[0], f1[0] = 0.0, 0.0, enf.nominal_hz
            else:
                phi0[i], phi1[i], f1[i] = phi0[i - 1], phi1[i - 1], f1[i - 1]
    return PhaseSequence(phi0=phi0, phi1=phi1, f_dft1=f1, n_frames=n, flags=bad)
