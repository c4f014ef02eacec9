"""Instantaneous frequency of the ENF component via the analytic signal.

The per-sample frequency is the wrapped first difference of the analytic
signal's phase angle; a fifth-order elliptic low-pass removes the parasitic
oscillation of the numerical Hilbert transform, and one second is trimmed
from each end where the estimate suffers boundary effects.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import ellip, hilbert, sosfilt

from .phase import wrap_phase

SMOOTH_ORDER = 5
SMOOTH_CUTOFF_HZ = 20.0
SMOOTH_RIPPLE_DB = 0.5
SMOOTH_ATTEN_DB = 64.0


@dataclass(frozen=True)
class FrequencySequence:
    """Smoothed per-sample instantaneous frequency, trimmed at both ends."""

    f_hil: np.ndarray
    sample_rate: float
    trim_samples: int

    def __post_init__(self):
        f = np.asarray(self.f_hil, dtype=np.float64)
        object.__setattr__(self, "f_hil", f)
        if not np.all(np.isfinite(f)):
            raise ValueError("instantaneous frequency contains NaN/Inf")


def analytic_signal(enf) -> np.ndarray:
    """Complex analytic signal x + i*H{x} (frequency-domain construction)."""
    x = np.asarray(enf.samples, dtype=np.float64)
    if len(x) < 4:
        raise ValueError("need at least four samples")
    return hilbert(x)


def instantaneous_frequency(analytic, fs: float) -> np.ndarray:
    """Per-sample frequency from wrapped phase-angle differences.

    f[n] = fs/(2*pi) * wrap(angle[n] - angle[n-1]); f[0] duplicates f[1].
    Zero-magnitude samples inherit the previous estimate.
    """
    a = np.asarray(analytic)
    ang = np.angle(a)
    f = np.empty(len(a), dtype=np.float64)
    f[1:] = fs / (2.0 * np.pi) * wrap_phase(np.diff(ang))
    f[0] = f[1]
    dead = np.abs(a) == 0.0
    if dead.any():
        # forward-fill over zero-magnitude samples
        idx = np.arange(len(f))
        idx[dead] = 0
        np.maximum.accumulate(idx, out=idx)
        f = f[idx]
    return f


@lru_cache(maxsize=8)
def _smoother_sos(fs: float):
    return ellip(SMOOTH_ORDER, SMOOTH_RIPPLE_DB, SMOOTH_ATTEN_DB,
                 SMOOTH_CUTOFF_HZ, btype="low", fs=fs, output="sos")


def smooth_and_trim(f, fs: float, nominal: float) -> FrequencySequence:
    """Low-pass the raw IF sequence and drop one second from each end."""
    if not 0.0 < nominal < fs / 2.0:
        raise ValueError("nominal frequency must lie inside (0, fs/2)")
    f = np.asarray(f, dtype=np.float64)
    trim = int(round(fs))
    if len(f) <= 2 * trim:
        raise ValueError("sequence too short to survive the one-second trims")
    smoothed = sosfilt(_smoother_sos(float(fs)), f)
    return FrequencySequence(f_hil=smoothed[trim:len(f) - trim],
                             sample_rate=float(fs), trim_samples=trim)
