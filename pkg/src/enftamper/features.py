"""Feature construction: discontinuity statistics, square feature matrices,
and sum-of-sines fit coefficients.

The three families feed the classifier together: the scalar statistics react
to abrupt sequence changes, the matrices give a convolutional net local
detail, and the fit coefficients summarize global sequence shape.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .phase import wrap_phase

VAR_FLOOR = 1e-12

LM_LAMBDA0 = 1e-3
LM_MAX_ITER = 200
LM_REL_TOL = 1e-10
N_MULTISTART = 3


@dataclass(frozen=True)
class ShallowFeatures:
    """100*log variance of first differences of phi0, phi1 and f_hil."""

    F0: float
    F1: float
    Ff: float

    def as_array(self):
        return np.array([self.F0, self.F1, self.Ff], dtype=np.float64)


@dataclass(frozen=True)
class FeatureMatrix:
    """m x m grid of hop-spaced frames of one sequence (zero-padded tail)."""

    values: np.ndarray
    m: int
    pad_count: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.shape != (self.m, self.m):
            raise ValueError("matrix must be m x m")


@dataclass(frozen=True)
class FitCoefficients:
    """Sum-of-sines parameters, flattened (a1,b1,c1,...,a6,b6,c6)."""

    coeffs: np.ndarray
    rmse: float
    degenerate: bool = False

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        object.__setattr__(self, "coeffs", c)
        if c.ndim != 1 or c.size % 3 != 0:
            raise ValueError("coefficients come in (a, b, c) triplets")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite fit coefficients")


def _log_var_stat(diffs):
    return 100.0 * math.log(max(float(np.var(diffs)), VAR_FLOOR))


def shallow_stats(phase, freq) -> ShallowFeatures:
    """Scalar discontinuity statistics from the phase and IF sequences.

    Phase differences are wrapped to (-pi, pi] first; the variance is taken
    over the difference sequence and floored at 1e-12 before the log.
    """
    if phase.n_frames < 2 or len(freq.f_hil) < 2:
        raise ValueError("need at least two frames / samples")
    d0 = wrap_phase(np.diff(phase.phi0))
    d1 = wrap_phase(np.diff(phase.phi1))
    df = np.diff(freq.f_hil)
    return ShallowFeatures(F0=_log_var_stat(d0), F1=_log_var_stat(d1), Ff=_log_var_stat(df))


def frame_length_for(max_seq_len: int) -> int:
    """Square-matrix frame length for the longest sequence in a dataset."""
    if max_seq_len < 4:
        raise ValueError("sequence too short for matrix framing")
    s = math.isqrt(max_seq_len)
    return s if s * s == max_seq_len else s + 1


def build_matrix(seq, m: int) -> FeatureMatrix:
    """Reshape a sequence into m rows of m samples with adaptive overlap.

    hop = ceil((X - m)/(m - 1)); row r starts at r*hop; indices past the end
    of the sequence are zero-filled and counted in pad_count.
    """
    seq = np.asarray(seq, dtype=np.float64)
    x_len = len(seq)
    if m < 2:
        raise ValueError("m must be at least 2")
    if x_len < m:
        raise ValueError("sequence shorter than one frame")
    hop = 0 if x_len == m else -(-(x_len - m) // (m - 1))
    need = (m - 1) * hop + m
    pad = max(0, need - x_len)
    padded = np.pad(seq, (0, pad)) if pad else seq
    idx = np.arange(m)[:, None] * hop + np.arange(m)[None, :]
    return FeatureMatrix(values=padded[idx], m=m, pad_count=pad)


def _sos_model(theta, x):
    a = theta[0::3][:, None]
    b = theta[1::3][:, None]
    c = theta[2::3][:, None]
    return np.sum(a * np.sin(b * x[None, :] + c), axis=0)


def _sos_jacobian(theta, x):
    n_terms = len(theta) // 3
    J = np.empty((len(x), 3 * n_terms))
    for j in range(n_terms):
        a, b, c = theta[3 * j:3 * j + 3]
        arg = b * x + c
        s, co = np.sin(arg), np.cos(arg)
        J[:, 3 * j] = s
        J[:, 3 * j + 1] = a * x * co
        J[:, 3 * j + 2] = a * co
    return J


def _lm_fit(seq, x, theta0):
    """Damped Gauss-Newton on the sum-of-sines residual; returns (theta, cost)."""
    theta = theta0.copy()
    r = _sos_model(theta, x) - seq
    cost = float(r @ r)
    lam = LM_LAMBDA0
    for _ in range(LM_MAX_ITER):
        J = _sos_jacobian(theta, x)
        g = J.T @ r
        JtJ = J.T @ J
        d = np.diag(JtJ)
        damp = d + 1e-12 * max(d.max(), 1.0)  # keep dead terms solvable
        stepped = False
        while lam <= 1e12:
            try:
                delta = np.linalg.solve(JtJ + lam * np.diag(damp), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = theta + delta
            r_t = _sos_model(trial, x) - seq
            cost_t = float(r_t @ r_t)
            if np.isfinite(cost_t) and cost_t < cost:
                rel = (cost - cost_t) / max(cost, 1e-300)
                theta, r, cost = trial, r_t, cost_t
                lam = max(lam / 10.0, 1e-12)
                stepped = True
                if rel < LM_REL_TOL:
                    return theta, cost
                break
            lam *= 10.0
        if not stepped:
            break
    return theta, cost


def _strongest_peak(resid, win, n_fft, taken, min_sep):
    """Largest windowed-periodogram local maximum at least min_sep bins from
    the already-taken ones; parabolic refinement of the bin location."""
    mag = np.abs(np.fft.rfft(resid * win, n_fft))
    mag[0] = 0.0
    interior = mag[1:-1]
    cand = 1 + np.flatnonzero((interior >= mag[:-2]) & (interior > mag[2:]))
    cand = cand[np.argsort(mag[cand])[::-1]]
    for k in cand:
        if mag[k] <= 0.0:
            break
        if all(abs(k - p) >= min_sep for p in taken):
            km, k0 = mag[k - 1], mag[k]
            kp = mag[k + 1] if k + 1 < len(mag) else 0.0
            denom = km - 2.0 * k0 + kp
            frac = 0.5 * (km - kp) / denom if denom != 0.0 else 0.0
            return k + float(np.clip(frac, -0.5, 0.5))
    return None


def _periodogram_seed(seq, x, n_terms):
    """Initial (a, b, c) triplets from the dominant periodogram peaks.

    Peaks are extracted sequentially: after each new frequency the
    amplitudes/phases of all chosen terms are re-solved linearly and the
    model is subtracted, so closely spaced components surface one by one
    instead of hiding under a stronger neighbor's lobe.
    """
    z = seq - seq.mean()
    n = len(z)
    n_fft = 1 << max(9, int(math.ceil(math.log2(16 * n))))
    win = np.hanning(n)
    span = x[-1] - x[0] if len(x) > 1 else 1.0
    min_sep = max(2, int(round(0.75 * n_fft / n)))

    ks, bs = [], []
    resid = z
    coef = np.zeros(0)
    for _ in range(n_terms):
        k_ref = _strongest_peak(resid, win, n_fft, ks, min_sep)
        if k_ref is None:
            break
        ks.append(k_ref)
        bs.append(2.0 * np.pi * k_ref / n_fft * (n - 1) / span)
        cols = []
        for b in bs:
            cols.append(np.sin(b * x))
            cols.append(np.cos(b * x))
        M = np.stack(cols, axis=1)
        coef, *_ = np.linalg.lstsq(M, z, rcond=None)
        resid = z - M @ coef

    theta = np.zeros(3 * n_terms)
    theta[1::3] = 2.0 * np.pi * (np.arange(n_terms) + 1.0)  # dead-seed fallback
    for j, b in enumerate(bs):
        p, q = coef[2 * j], coef[2 * j + 1]  # p*sin(bx) + q*cos(bx)
        theta[3 * j] = math.hypot(p, q)
        theta[3 * j + 1] = b
        theta[3 * j + 2] = math.atan2(q, p)
    return theta


def _canonicalize(theta):
    """a_j >= 0, b_j >= 0, c_j in (-pi, pi], terms sorted by descending a_j."""
    t = theta.reshape(-1, 3).copy()
    neg_b = t[:, 1] < 0
    t[neg_b, 1] = -t[neg_b, 1]
    t[neg_b, 2] = np.pi - t[neg_b, 2]
    neg_a = t[:, 0] < 0
    t[neg_a, 0] = -t[neg_a, 0]
    t[neg_a, 2] = t[neg_a, 2] + np.pi
    t[:, 2] = wrap_phase(t[:, 2])
    order = np.argsort(-t[:, 0], kind="stable")
    return t[order].reshape(-1)


def fit_sum_of_sines(seq, n_terms: int = 6) -> FitCoefficients:
    """Least-squares fit of sum_j a_j*sin(b_j*x + c_j) over x in [0, 1].

    Levenberg-Marquardt with an analytic Jacobian, seeded from the largest
    periodogram peaks; best of three starts (the extra two perturb the seed
    frequencies by up to +-20%, deterministically).  If no start improves on
    the zero model, zero-amplitude coefficients are returned with
    rmse = RMS(seq) and the degenerate flag set.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if not np.all(np.isfinite(seq)):
        raise ValueError("non-finite input sequence")
    if len(seq) < 6 * n_terms:
        raise ValueError("sequence too short to constrain the fit")
    n = len(seq)
    if not seq.any():
        return FitCoefficients(coeffs=np.zeros(3 * n_terms), rmse=0.0)
    x = np.arange(n, dtype=np.float64) / (n - 1)

    seed = _periodogram_seed(seq, x, n_terms)
    rng = np.random.default_rng(2357)  # fixed stream: fits are pure functions
    starts = [seed]
    for _ in range(N_MULTISTART - 1):
        pert = seed.copy()
        pert[1::3] *= 1.0 + rng.uniform(-0.2, 0.2, size=n_terms)
        starts.append(pert)

    best_theta, best_cost = None, np.inf
    for theta0 in starts:
        theta, cost = _lm_fit(seq, x, theta0)
        if cost < best_cost:
            best_theta, best_cost = theta, cost

    cost_zero = float(seq @ seq)
    if best_theta is None or best_cost >= cost_zero:
        return FitCoefficients(coeffs=np.zeros(3 * n_terms),
                               rmse=float(np.sqrt(cost_zero / n)), degenerate=True)
    return FitCoefficients(coeffs=_canonicalize(best_theta),
                           rmse=float(np.sqrt(best_cost / n)))
