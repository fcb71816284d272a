import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from hdspectral.errors import InvalidBandwidth, InvalidInput, InvalidLag
from hdspectral.spectral import (BARTLETT, UNIFORM, BandwidthWarning, KernelSpec,
                                 MultivariateSeries, autocorrelation_magnitude, bandwidth_select,
                                 center_series, dft, fourier_dft, get_kernel, kernel_fourier,
                                 lag_window_estimate, sample_autocov, smoothed_periodogram)

KERNEL_NAMES = ["bartlett_modified", "uniform"]


def _series(rng, n, p):
    x = rng.standard_normal((n, p))
    return x - x.mean(axis=0)


# ---------------------------------------------------------------- centering


def test_center_zero_matrix_unchanged():
    s = center_series(np.zeros((4, 2)))
    assert np.array_equal(s.values, np.zeros((4, 2)))
    assert s.n == 4 and s.p == 2


def test_center_constant_and_ramp():
    s = center_series(np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]))
    np.testing.assert_allclose(s.values[:, 0], [-1.0, 0.0, 1.0])
    np.testing.assert_allclose(s.values[:, 1], 0.0)


def test_center_rejects_short_and_degenerate():
    with pytest.raises(InvalidInput):
        center_series(np.ones((1, 3)))
    with pytest.raises(InvalidInput):
        center_series(np.array([[1.0, 2.0], [1.0, 3.0]]), reject_degenerate=True)


def test_center_column_sums(rng):
    s = center_series(rng.standard_normal((500, 4)) + 7.0)
    assert np.all(np.abs(s.values.sum(axis=0)) <= 1e-10 * 500)


# ---------------------------------------------------------------- DFT


def test_dft_zero_series():
    assert np.array_equal(dft(np.zeros((8, 3)), 1.3), np.zeros(3, dtype=complex))


def test_dft_cosine_matches_direct_sum():
    n = 32
    w1 = 2 * math.pi / n
    t = np.arange(1, n + 1)
    x = np.cos(w1 * t)[:, None]
    expected = np.sum(np.cos(w1 * t) * np.exp(-1j * w1 * t)) / math.sqrt(2 * math.pi * n)
    assert abs(dft(x, w1)[0] - expected) < 1e-12


def test_dft_periodic(rng):
    x = _series(rng, 20, 2)
    np.testing.assert_allclose(dft(x, 0.9), dft(x, 0.9 + 2 * math.pi), atol=1e-12)


def test_fft_path_matches_direct(rng):
    x = _series(rng, 15, 3)
    z = fourier_dft(x)
    for k in range(15):
        np.testing.assert_allclose(z[k], oracles.dft(x, 2 * math.pi * k / 15), atol=1e-13)


def test_parseval(rng):
    x = _series(rng, 101, 3)
    z = fourier_dft(x)
    lhs = np.sum(np.abs(z) ** 2)
    rhs = np.sum(x ** 2) / (2 * math.pi)
    assert abs(lhs - rhs) <= 1e-8 * rhs


# ---------------------------------------------------------------- autocovariance


def test_autocov_last_lag_single_summand():
    x = np.arange(1.0, 7.0)[:, None]
    assert sample_autocov(x, 5)[0, 0] == pytest.approx(6.0 * 1.0 / 6)


def test_autocov_negative_lag_is_transpose(rng):
    x = _series(rng, 30, 3)
    np.testing.assert_allclose(sample_autocov(x, -4), sample_autocov(x, 4).T, atol=1e-15)


@pytest.mark.parametrize("u", [0, 1, 3, 7])
def test_autocov_matches_loop(rng, u):
    x = _series(rng, 9, 2)
    np.testing.assert_allclose(sample_autocov(x, u), oracles.autocov(x, u), atol=1e-14)


def test_autocov_lag_out_of_range():
    with pytest.raises(InvalidLag):
        sample_autocov(np.zeros((5, 1)), 5)


def test_autocov_variance_monte_carlo():
    rng = np.random.default_rng(11)
    inside = [0.95 <= sample_autocov(rng.standard_normal((10000, 1)), 0)[0, 0] <= 1.05
              for _ in range(200)]
    assert np.mean(inside) >= 0.99


# ---------------------------------------------------------------- kernels


def test_kernel_constants():
    assert BARTLETT.c_k2 == pytest.approx(2.0 / 3.0)
    assert UNIFORM.c_k2 == 2.0
    assert BARTLETT.fourier_decay_order == 2
    for k in (BARTLETT, UNIFORM):
        assert k(0.0) == 1.0
        assert k(0.4) == k(-0.4)
        assert k(1.2) == 0.0


def test_user_defined_kernel_constant():
    k = KernelSpec.user_defined(lambda u: max(0.0, 1.0 - u * u), 2.0)
    assert k.c_k2 == pytest.approx(16.0 / 15.0, rel=1e-8)


def test_unknown_kernel():
    with pytest.raises(InvalidInput):
        get_kernel("hann")


def test_kernel_fourier_at_zero():
    assert kernel_fourier(BARTLETT, 7, 0.0, 100).real == pytest.approx(1.0, abs=1e-14)
    assert kernel_fourier(UNIFORM, 5, 0.0, 100).real == pytest.approx(2.2, abs=1e-14)


def test_kernel_fourier_bartlett_closed_form():
    M = 6
    w = math.pi / M
    closed = math.sin(M * w / 2) ** 2 / math.sin(w / 2) ** 2 / M ** 2
    assert abs(kernel_fourier(BARTLETT, M, w, 200) - closed) < 1e-10


@pytest.mark.parametrize("kernel", KERNEL_NAMES)
@pytest.mark.parametrize("omega", [0.0, 0.3, 1.7, 3.1])
def test_kernel_fourier_matches_sum(kernel, omega):
    val = kernel_fourier(get_kernel(kernel), 4, omega, 11)
    assert abs(val - oracles.kappa(kernel, 4, omega, 11)) < 1e-13
    assert abs(np.imag(val)) <= 1e-12


def test_kernel_fourier_bandwidth_guard():
    with pytest.raises(InvalidBandwidth):
        kernel_fourier(BARTLETT, 10, 0.1, 10)


# ---------------------------------------------------------------- estimators


def test_lag_window_zero_series():
    f = lag_window_estimate(np.zeros((16, 2)), BARTLETT, 3, [0.0, 1.0])
    assert np.array_equal(f.matrices, np.zeros((2, 2, 2), dtype=complex))


@pytest.mark.parametrize("kernel", KERNEL_NAMES)
def test_lag_window_tiny_case_matches_loop(rng, kernel):
    x = _series(rng, 8, 2)
    freqs = [0.0, 0.5, 2.0]
    f = lag_window_estimate(x, kernel, 3, freqs)
    for l, w in enumerate(freqs):
        np.testing.assert_allclose(f.matrices[l], oracles.lag_window(x, kernel, 3, w), atol=1e-12)


def test_lag_window_white_noise_level():
    rng = np.random.default_rng(3)
    hits = []
    for _ in range(40):
        f = lag_window_estimate(rng.standard_normal((4096, 1)), BARTLETT, 16, [math.pi / 2])
        hits.append(0.7 <= f.matrices[0, 0, 0].real * 2 * math.pi <= 1.3)
    assert np.mean(hits) >= 0.95


def test_lag_window_bandwidth_range():
    with pytest.raises(InvalidBandwidth):
        lag_window_estimate(np.zeros((10, 2)), BARTLETT, 10, [0.0])


@pytest.mark.parametrize("kernel", KERNEL_NAMES)
def test_smoothed_periodogram_matches_loop(rng, kernel):
    x = _series(rng, 16, 2)
    np.testing.assert_allclose(smoothed_periodogram(x, kernel, 3, 0.8),
                               oracles.smoothed_periodogram(x, kernel, 3, 0.8), atol=1e-12)


def test_smoothed_periodogram_zero_and_guard():
    assert np.all(smoothed_periodogram(np.zeros((16, 2)), BARTLETT, 3, 0.2) == 0)
    with pytest.raises(InvalidBandwidth):
        smoothed_periodogram(np.zeros((16, 2)), BARTLETT, 8, 0.2)


def test_smoothed_periodogram_close_to_lag_window():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((4096, 3))
    M, w = 16, 1.1
    a = smoothed_periodogram(x, BARTLETT, M, w)
    b = lag_window_estimate(x, BARTLETT, M, [w]).matrices[0]
    scale = np.abs(np.diag(b)).max()
    assert np.abs(a - b).max() <= 5 * (M / 4096) * scale


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(6, 24), st.integers(1, 4)),
              elements=st.floats(-10, 10, allow_nan=False)),
       st.integers(1, 5), st.floats(0, 2 * math.pi))
def test_lag_window_hermitian_psd(x, M, omega):
    M = min(M, x.shape[0] - 1)
    f = lag_window_estimate(x - x.mean(axis=0), BARTLETT, M, [omega]).matrices[0]
    scale = max(np.abs(f).max(), 1e-300)
    assert np.abs(f - f.conj().T).max() <= 1e-10 * scale
    assert np.linalg.eigvalsh(f).min() >= -1e-8 * max(np.diag(f).real.max(), 1e-300)


def test_lag_window_scale_equivariance(rng):
    x = _series(rng, 50, 3)
    f1 = lag_window_estimate(x, BARTLETT, 5, [0.4]).matrices
    f2 = lag_window_estimate(2.5 * x, BARTLETT, 5, [0.4]).matrices
    np.testing.assert_allclose(f2, 6.25 * f1, rtol=1e-12)


# ---------------------------------------------------------------- bandwidth


def test_autocorrelation_magnitude_scale_free(rng):
    x = _series(rng, 200, 4)
    assert autocorrelation_magnitude(x, 2) == pytest.approx(autocorrelation_magnitude(3 * x, 2))


def test_bandwidth_white_noise_small():
    rng = np.random.default_rng(8)
    picks = [bandwidth_select(rng.standard_normal((2048, 3))) for _ in range(100)]
    assert np.mean(np.array(picks) <= 16) >= 0.9


def test_bandwidth_grows_for_persistent_series():
    rng = np.random.default_rng(9)
    larger = []
    for _ in range(20):
        e = rng.standard_normal(2148)
        x = np.zeros(2148)
        for t in range(1, 2148):
            x[t] = 0.9 * x[t - 1] + e[t]
        ar = bandwidth_select(x[100:, None])
        wn = bandwidth_select(rng.standard_normal((2048, 1)))
        larger.append(ar > wn)
    assert np.mean(larger) >= 0.9


def test_bandwidth_clamp_and_small_n():
    with pytest.raises(InvalidInput):
        bandwidth_select(np.random.default_rng(0).standard_normal((10, 2)))
    t = np.arange(400.0)
    trend = np.column_stack([t, np.sin(t / 50.0)])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        M = bandwidth_select(trend - trend.mean(axis=0))
    assert M == 100
    assert any(issubclass(w.category, BandwidthWarning) for w in caught)


def test_series_type():
    s = MultivariateSeries(np.zeros((5, 2)), 256.0)
    assert (s.n, s.p, s.sampling_rate) == (5, 2, 256.0)
