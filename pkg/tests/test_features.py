import math

import numpy as np
import pytest

from enftamper.features import (
    FeatureMatrix,
    FitCoefficients,
    build_matrix,
    fit_sum_of_sines,
    frame_length_for,
    shallow_stats,
)
from enftamper.instfreq import FrequencySequence
from enftamper.phase import PhaseSequence


def _phase_seq(phi):
    phi = np.asarray(phi, dtype=np.float64)
    return PhaseSequence(phi0=phi, phi1=phi, f_dft1=np.full(len(phi), 50.0),
                         n_frames=len(phi), flags=np.zeros(len(phi), bool))


def _freq_seq(f):
    return FrequencySequence(f_hil=np.asarray(f, dtype=np.float64),
                             sample_rate=1000.0, trim_samples=0)


def test_shallow_constant_sequences_hit_clamp():
    sh = shallow_stats(_phase_seq(np.full(100, 0.4)), _freq_seq(np.full(100, 50.0)))
    floor = 100.0 * math.log(1e-12)
    assert sh.F0 == pytest.approx(floor)
    assert sh.F1 == pytest.approx(floor)
    assert sh.Ff == pytest.approx(floor)


def test_shallow_alternating_closed_form():
    # wrapped diffs alternate +-d around mean zero: the variance term of the
    # statistic is exactly d**2 (mean over the N-1 difference samples)
    d = 0.1
    k = 10
    phi = np.zeros(2 * k + 1)
    phi[1::2] = d
    f = np.cumsum(np.resize([d, -d], 2 * k + 1))
    sh = shallow_stats(_phase_seq(phi), _freq_seq(f))
    assert sh.F0 == pytest.approx(100.0 * math.log(d * d), rel=1e-12)
    assert sh.Ff == pytest.approx(100.0 * math.log(d * d), rel=1e-12)


def test_shallow_constant_offset_invariance():
    rng = np.random.default_rng(0)
    phi = rng.uniform(-0.5, 0.5, 200)
    f = 50.0 + 0.01 * rng.standard_normal(300)
    a = shallow_stats(_phase_seq(phi), _freq_seq(f))
    b = shallow_stats(_phase_seq(phi + 1.0), _freq_seq(f))
    assert a.F0 == pytest.approx(b.F0, abs=1e-9)
    assert a.F1 == pytest.approx(b.F1, abs=1e-9)


def test_shallow_needs_two():
    with pytest.raises(ValueError):
        shallow_stats(_phase_seq([0.1]), _freq_seq([50.0, 50.0]))


@pytest.mark.parametrize("n,m", [(2055, 46), (37281, 194), (100, 10), (101, 11)])
def test_frame_length_for(n, m):
    assert frame_length_for(n) == m


def test_frame_length_too_short():
    with pytest.raises(ValueError):
        frame_length_for(3)


def test_build_matrix_exact_tiling():
    seq = np.arange(100, dtype=float)
    fm = build_matrix(seq, 10)
    assert fm.pad_count == 0
    assert np.array_equal(fm.values, seq.reshape(10, 10))


def test_build_matrix_alg_arithmetic():
    seq = np.arange(2055, dtype=float)
    fm = build_matrix(seq, 46)
    # hop = ceil(2009/45) = 45, overlap 1, pad = 45*45+46-2055 = 16
    assert fm.pad_count == 16
    for r in (0, 1, 17, 45):
        start = r * 45
        row = fm.values[r]
        valid = min(46, 2055 - start)
        assert np.array_equal(row[:valid], seq[start:start + valid])
        assert np.all(row[valid:] == 0.0)


def test_build_matrix_degenerate_hop():
    seq = np.arange(7, dtype=float)
    fm = build_matrix(seq, 7)
    assert fm.pad_count == 0
    assert all(np.array_equal(fm.values[r], seq) for r in range(7))


def test_build_matrix_errors():
    with pytest.raises(ValueError):
        build_matrix(np.arange(5.0), 6)
    with pytest.raises(ValueError):
        build_matrix(np.arange(5.0), 1)


@pytest.mark.parametrize("x_len", [30, 47, 100, 500, 900])
def test_build_matrix_roundtrip(x_len):
    # concatenating rows minus overlap minus pad reconstructs the sequence
    m = 30
    seq = np.random.default_rng(x_len).standard_normal(x_len)
    fm = build_matrix(seq, m)
    hop = 0 if x_len == m else -(-(x_len - m) // (m - 1))
    parts = [fm.values[r][:hop] for r in range(m - 1)] + [fm.values[m - 1]]
    rebuilt = np.concatenate(parts)
    rebuilt = rebuilt[:x_len] if fm.pad_count else rebuilt
    if hop > 0:
        assert np.array_equal(rebuilt[:x_len], seq)
    else:
        assert np.array_equal(fm.values[0], seq)


def _sos(a, b, c, n=600):
    x = np.arange(n) / (n - 1)
    return np.sum(np.asarray(a)[:, None] * np.sin(
        np.asarray(b)[:, None] * x[None, :] + np.asarray(c)[:, None]), axis=0)


def test_fit_recovers_self_generated_terms():
    rng = np.random.default_rng(1)
    for _ in range(5):
        while True:
            b = np.sort(rng.uniform(2 * np.pi, 2 * np.pi * 18.0, 6))
            if np.min(np.diff(b)) > 2 * np.pi * 2.0:
                break
        a = rng.uniform(0.5, 2.0, 6)
        c = rng.uniform(-np.pi, np.pi, 6)
        y = _sos(a, b, c)
        fit = fit_sum_of_sines(y, 6)
        assert fit.rmse < 1e-6 * np.sqrt(np.mean(y ** 2))
        assert not fit.degenerate


def test_fit_zero_sequence():
    fit = fit_sum_of_sines(np.zeros(200), 6)
    assert np.all(fit.coeffs == 0.0)
    assert fit.rmse == 0.0


def test_fit_single_sine_with_spare_terms():
    y = _sos([1.0], [2 * np.pi * 5.0], [0.3], n=400)
    fit = fit_sum_of_sines(y, 5)
    amps = np.sort(fit.coeffs[0::3])[::-1]
    assert fit.rmse < 1e-8
    assert abs(amps[0] - 1.0) < 1e-6
    assert np.all(amps[1:] < 1e-6)


def test_fit_nested_rmse_non_increasing():
    rng = np.random.default_rng(3)
    y = _sos(rng.uniform(0.5, 1.5, 4), np.array([1, 4, 9, 14.5]) * 2 * np.pi,
             rng.uniform(-3, 3, 4)) + 0.05 * rng.standard_normal(600)
    r3 = fit_sum_of_sines(y, 3).rmse
    r6 = fit_sum_of_sines(y, 6).rmse
    assert r6 <= r3 + 1e-12


def test_fit_canonical_form():
    y = _sos([1.2, 0.7], [2 * np.pi * 3, 2 * np.pi * 11], [0.4, -2.0], n=500)
    fit = fit_sum_of_sines(y, 3)
    t = fit.coeffs.reshape(-1, 3)
    assert np.all(t[:, 0] >= 0.0)
    assert np.all(t[:, 1] >= 0.0)
    assert np.all((t[:, 2] > -np.pi) & (t[:, 2] <= np.pi))
    assert np.all(np.diff(t[:, 0]) <= 1e-12)  # sorted by descending amplitude


def test_fit_deterministic():
    rng = np.random.default_rng(9)
    y = _sos([1.0, 0.5], [2 * np.pi * 2, 2 * np.pi * 7], [0.0, 1.0], n=300)
    y += 0.01 * rng.standard_normal(300)
    a = fit_sum_of_sines(y, 6)
    b = fit_sum_of_sines(y, 6)
    assert np.array_equal(a.coeffs, b.coeffs)
    assert a.rmse == b.rmse


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_sum_of_sines(np.array([np.nan] * 100), 6)
    with pytest.raises(ValueError):
        fit_sum_of_sines(np.ones(10), 6)


def test_matrix_and_coeff_types_validate():
    with pytest.raises(ValueError):
        FeatureMatrix(values=np.zeros((3, 4)), m=3, pad_count=0)
    with pytest.raises(ValueError):
        FitCoefficients(coeffs=np.zeros(17), rmse=0.0)
    with pytest.raises(ValueError):
        FitCoefficients(coeffs=np.array([np.inf] * 18), rmse=0.0)
