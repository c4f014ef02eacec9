"""Narrowband zero-phase FIR isolation of the grid-frequency component.

The filter is a Kaiser windowed sinc bandpass.  At 10000 taps and a 1 kHz
rate the nominal layout (flat to +-0.3 Hz, 100 dB down at +-0.6 Hz) is not
attainable, so the designer searches cutoff placement and window shape for
the widest passband that still puts the stopband edges at least the
requested attenuation down, then normalizes the center-frequency gain to
exactly unity.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve, firwin, kaiser_beta


class InfeasibleFilterError(ValueError):
    """No Kaiser design of the given order meets the attenuation spec."""


@dataclass(frozen=True)
class BandpassSpec:
    center_hz: float = 50.0
    bandwidth_hz: float = 0.6
    order: int = 10000
    passband_ripple_db: float = 0.5
    stopband_atten_db: float = 100.0
    sample_rate: float = 1000.0

    def __post_init__(self):
        half = self.bandwidth_hz / 2.0
        if not (0.0 < self.center_hz - half and self.center_hz + half < self.sample_rate / 2.0):
            raise ValueError("band edges must lie strictly inside (0, fs/2)")
        if self.order % 2 != 0:
            raise ValueError("order must be even for integral group delay")


@dataclass(frozen=True)
class EnfComponent:
    """Narrowband-filtered ENF waveform at the analysis rate."""

    samples: np.ndarray
    sample_rate: float
    nominal_hz: float

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))


def _gain_at(taps, freq_hz, fs):
    n = np.arange(len(taps))
    return abs(np.sum(taps * np.exp(-2j * np.pi * freq_hz * n / fs)))


def _stopband_max_db(taps, spec: BandpassSpec, n_fft=1 << 20):
    # stopband edges sit one full bandwidth away from center (transition
    # region spans bandwidth/2 .. bandwidth on each side)
    mag = np.abs(np.fft.rfft(taps, n_fft))
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / spec.sample_rate)
    lo, hi = spec.center_hz - spec.bandwidth_hz, spec.center_hz + spec.bandwidth_hz
    mask = ((freqs <= lo) & (freqs >= 0.02)) | (freqs >= hi)
    return 20.0 * np.log10(max(mag[mask].max(), 1e-300))


@lru_cache(maxsize=8)
def design_bandpass(spec: BandpassSpec) -> np.ndarray:
    """Design the linear-phase bandpass taps for a BandpassSpec.

    Deterministic search: widest half-passband c (coarse 0.01 Hz grid) such
    that some Kaiser shape keeps the response outside +-bandwidth/2 at least
    stopband_atten below the (unity-normalized) center gain.
    """
    ntaps = spec.order + 1
    half = spec.bandwidth_hz / 2.0
    c_grid = np.arange(half, 0.1 * spec.bandwidth_hz, -0.01)
    shapes = [spec.stopband_atten_db + d for d in (10.0, 15.0, 5.0, 20.0)]
    for required_margin in (4.0, 1.0):
        for c in c_grid:
            for atten in shapes:
                taps = firwin(
                    ntaps,
                    [spec.center_hz - c, spec.center_hz + c],
                    pass_zero=False,
                    window=("kaiser", kaiser_beta(atten)),
                    fs=spec.sample_rate,
                )
                taps = taps / _gain_at(taps, spec.center_hz, spec.sample_rate)
                if _stopband_max_db(taps, spec) <= -(spec.stopband_atten_db + required_margin):
                    taps.flags.writeable = False
                    return taps
    raise InfeasibleFilterError(
        f"order {spec.order} cannot reach {spec.stopband_atten_db} dB at "
        f"+-{spec.bandwidth_hz} Hz around {spec.center_hz} Hz (fs={spec.sample_rate})")


def extract_enf(clip, spec: BandpassSpec) -> EnfComponent:
    """Zero-phase bandpass a clip into its ENF component.

    Single-pass linear-phase filtering; the symmetric-kernel 'same' alignment
    compensates the order/2 group delay exactly, so output length equals the
    input length with transient-contaminated (zero-padded) edges kept.
    """
    if float(clip.sample_rate) != float(spec.sample_rate):
        raise ValueError("clip rate does not match filter design rate")
    if len(clip.samples) <= spec.order + 1:
        raise ValueError("clip shorter than the filter length")
    taps = design_bandpass(spec)
    y = fftconvolve(clip.samples, taps, mode="same")
    return EnfComponent(samples=y, sample_rate=float(spec.sample_rate),
                        nominal_hz=float(spec.center_hz))
