"""Frequency-domain building blocks: DFT, autocovariances, lag-window kernels,
spectral density estimates and automatic bandwidth selection.

All frequencies are in radians. The DFT uses the normalisation
``Z(w) = (2 pi n)^{-1/2} sum_{t=1}^{n} X_t exp(-i w t)`` with time starting at 1.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import InvalidBandwidth, InvalidInput, InvalidLag

TWO_PI = 2.0 * np.pi

# Equivalent-bandwidth correction applied to the flat-top oriented Politis rule.
JENKINS_FACTOR = {"bartlett_modified": 1.5, "uniform": 1.0, "user_defined": 1.0}


class BandwidthWarning(UserWarning):
    """The adaptive bandwidth rule found no cut-off and fell back to n/4."""


@dataclass(frozen=True)
class MultivariateSeries:
    """n x p real observations, rows are time points."""

    values: np.ndarray
    sampling_rate: Optional[float] = None
    centered: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise InvalidInput("series values must be a 2-d array")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def scaled(self, c: float) -> "MultivariateSeries":
        return MultivariateSeries(c * self.values, self.sampling_rate, self.centered)


@dataclass(frozen=True)
class KernelSpec:
    """Lag-window kernel K on [-1, 1] with its squared integral and Fourier decay order."""

    name: str
    evaluate: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    c_k2: float
    fourier_decay_order: float

    def __call__(self, u):
        return self.evaluate(np.asarray(u, dtype=float))

    @classmethod
    def user_defined(cls, func: Callable, fourier_decay_order: float) -> "KernelSpec":
        def evaluate(u):
            u = np.asarray(u, dtype=float)
            out = np.asarray(np.vectorize(func, otypes=[float])(u), dtype=float)
            return np.where(np.abs(u) > 1.0, 0.0, out)

        k0 = float(evaluate(np.array(0.0)))
        if not math.isclose(k0, 1.0, abs_tol=1e-12):
            raise InvalidInput(f"kernel must satisfy K(0) = 1, got {k0}")
        c_k2, _ = integrate.quad(lambda x: float(evaluate(np.array(x))) ** 2, -1.0, 1.0)
        return cls("user_defined", evaluate, c_k2, float(fourier_decay_order))


def _bartlett(u):
    u = np.abs(np.asarray(u, dtype=float))
    return np.where(u < 1.0, 1.0 - u, 0.0)


def _uniform(u):
    u = np.abs(np.asarray(u, dtype=float))
    return np.where(u <= 1.0, 1.0, 0.0)


BARTLETT = KernelSpec("bartlett_modified", _bartlett, 2.0 / 3.0, 2.0)
UNIFORM = KernelSpec("uniform", _uniform, 2.0, 16.0)

KERNELS = {k.name: k for k in (BARTLETT, UNIFORM)}


def get_kernel(name: str | KernelSpec) -> KernelSpec:
    if isinstance(name, KernelSpec):
        return name
    try:
        return KERNELS[name]
    except KeyError:
        raise InvalidInput(f"unknown kernel {name!r}; choose from {sorted(KERNELS)}") from None


@dataclass
class SpectralField:
    """Frequency-indexed p x p Hermitian matrices."""

    frequencies: np.ndarray
    matrices: np.ndarray
    kind: str = "density"

    def __post_init__(self):
        self.frequencies = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        self.matrices = np.asarray(self.matrices, dtype=complex)
        if self.matrices.ndim == 2:
            self.matrices = self.matrices[None]
        if self.matrices.shape[0] != self.frequencies.shape[0]:
            raise InvalidInput("one matrix per frequency required")

    def __len__(self):
        return self.frequencies.shape[0]

    def __getitem__(self, idx):
        return self.matrices[idx]

    @property
    def p(self) -> int:
        return self.matrices.shape[-1]


# ---------------------------------------------------------------------------
# series handling


def center_series(raw, sampling_rate: Optional[float] = None, reject_degenerate: bool = False
                  ) -> MultivariateSeries:
    """Subtract column means.

    With ``reject_degenerate`` a column with zero variance raises
    :class:`InvalidInput`; the analysis pipeline always sets it because such a
    column makes coherences undefined.
    """
    x = np.asarray(raw, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 2:
        raise InvalidInput("need at least 2 observations")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("series contains non-finite values")
    x = x - x.mean(axis=0)
    if reject_degenerate:
        scale = np.abs(x).max(axis=0)
        if np.any(scale == 0.0):
            bad = np.flatnonzero(scale == 0.0).tolist()
            raise InvalidInput(f"zero-variance columns: {bad}")
    return MultivariateSeries(x, sampling_rate, centered=True)


def _values(series) -> np.ndarray:
    if isinstance(series, MultivariateSeries):
        return series.values
    x = np.asarray(series, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def dft(series, omega: float) -> np.ndarray:
    """Finite Fourier transform at an arbitrary frequency (direct O(n p) sum)."""
    x = _values(series)
    n = x.shape[0]
    omega = float(omega) % TWO_PI
    t = np.arange(1, n + 1)
    phase = np.exp(-1j * omega * t)
    return phase @ x / np.sqrt(TWO_PI * n)


def fourier_dft(series) -> np.ndarray:
    """Z(w_k) at all Fourier frequencies w_k = 2 pi k / n, k = 0..n-1, shape (n, p)."""
    x = _values(series)
    n = x.shape[0]
    k = np.arange(n)
    # fft indexes time from 0; the extra phase shifts it to start at t = 1
    z = np.fft.fft(x, axis=0) * np.exp(-1j * TWO_PI * k / n)[:, None]
    return z / np.sqrt(TWO_PI * n)


def fourier_frequencies(n: int) -> np.ndarray:
    return TWO_PI * np.arange(n) / n


def sample_autocov(series, u: int) -> np.ndarray:
    """Biased sample autocovariance with divisor n; Gamma(-u) = Gamma(u)^T."""
    x = _values(series)
    n = x.shape[0]
    u = int(u)
    if abs(u) >= n:
        raise InvalidLag(f"|lag| must be < n = {n}, got {u}")
    if u < 0:
        return sample_autocov(x, -u).T
    return x[u:].T @ x[: n - u] / n


def autocovariances(series, max_lag: int) -> np.ndarray:
    """Stack of Gamma(0..max_lag), shape (max_lag + 1, p, p)."""
    x = _values(series)
    n, p = x.shape
    if max_lag >= n:
        raise InvalidLag(f"max_lag must be < n = {n}")
    out = np.empty((max_lag + 1, p, p))
    for u in range(max_lag + 1):
        out[u] = x[u:].T @ x[: n - u] / n
    return out


# ---------------------------------------------------------------------------
# kernels


def kernel_fourier(kernel: KernelSpec, M: int, omega, n: int):
    """kappa_M(w) = M^{-1} sum_{|u|<n} K(u/M) exp(-i u w).

    ``omega`` may be scalar or array. The kernel is even so the sum is real;
    the result is returned as complex for a uniform interface.
    """
    if M >= n or M < 1:
        raise InvalidBandwidth(f"need 1 <= M < n, got M={M}, n={n}")
    kernel = get_kernel(kernel)
    umax = min(int(math.floor(M)), n - 1)
    u = np.arange(1, umax + 1)
    w = kernel(u / M)
    omega_arr = np.asarray(omega, dtype=float)
    val = kernel(0.0) + 2.0 * np.cos(np.multiply.outer(omega_arr, u)) @ w
    val = val / M
    return val.astype(complex) if omega_arr.ndim else complex(val)


def _lag_weights(kernel: KernelSpec, M: int, n: int):
    umax = min(int(math.floor(M)), n - 1)
    lags = np.arange(umax + 1)
    return lags, kernel(lags / M)


# ---------------------------------------------------------------------------
# spectral density estimators


def lag_window_estimate(series, kernel: KernelSpec, M: int, frequencies) -> SpectralField:
    """f(w) = (2 pi)^{-1} sum_u K(u/M) Gamma(u) exp(-i u w)."""
    x = _values(series)
    n = x.shape[0]
    if not 1 <= M <= n - 1:
        raise InvalidBandwidth(f"need 1 <= M <= n-1, got M={M}, n={n}")
    kernel = get_kernel(kernel)
    freqs = np.atleast_1d(np.asarray(frequencies, dtype=float))
    lags, w = _lag_weights(kernel, M, n)
    keep = w != 0.0
    keep[0] = True
    lags, w = lags[keep], w[keep]
    gam = np.stack([sample_autocov(x, int(u)) for u in lags])
    phase = np.exp(-1j * np.multiply.outer(freqs, lags)) * w  # (L, U)
    half = np.einsum("lu,uij->lij", phase[:, 1:], gam[1:])
    f = w[0] * gam[0][None].astype(complex) + half + np.conj(np.swapaxes(half, 1, 2))
    f /= TWO_PI
    return SpectralField(freqs, f, "density")


def weighted_periodogram_sum(z: np.ndarray, kernel: KernelSpec, M: int, omega: float) -> np.ndarray:
    """sum_k kappa_M(w - w_k) Z(w_k) Z(w_k)^H for DFT rows ``z`` (shape (n, p)).

    This single accumulator is shared by the smoothed periodogram and the
    de-biased regression estimator so both use identical weights.
    """
    n = z.shape[0]
    kap = kernel_fourier(kernel, M, omega - fourier_frequencies(n), n).real
    return (z * kap[:, None]).T @ z.conj()


def smoothed_periodogram(series, kernel: KernelSpec, M: int, omega: float) -> np.ndarray:
    """(M/n) sum_k kappa_M(w - w_k) Z(w_k) Z(w_k)^H."""
    x = _values(series)
    n = x.shape[0]
    if not (1 <= M and 2 * M < n):
        raise InvalidBandwidth(f"need 1 <= M < n/2, got M={M}, n={n}")
    kernel = get_kernel(kernel)
    s = weighted_periodogram_sum(fourier_dft(x), kernel, M, float(omega))
    return (M / n) * s


# ---------------------------------------------------------------------------
# bandwidth


def autocorrelation_magnitude(series, h: int, gamma0: Optional[np.ndarray] = None) -> float:
    """Root-mean-square entry of the lag-h sample autocorrelation matrix."""
    x = _values(series)
    p = x.shape[1]
    g0 = sample_autocov(x, 0) if gamma0 is None else gamma0
    d = 1.0 / np.sqrt(np.diag(g0))
    r = sample_autocov(x, h) * np.outer(d, d)
    return float(np.linalg.norm(r) / p)


def bandwidth_select(series, k_n: int = 5, c_thres: float = 1.5,
                     kernel: KernelSpec | str = BARTLETT) -> int:
    """Adaptive truncation lag from the decay of sample autocorrelation matrices.

    Finds the smallest m >= 1 with a(h) below ``c_thres * sqrt(log10(n)/n)``
    for every h in [m, m + k_n], returns ``ceil(2 m * jenkins)`` clamped to
    [4, n/4]. Falls back to n/4 with a :class:`BandwidthWarning` when no such m
    exists.
    """
    x = _values(series)
    n = x.shape[0]
    if n < 20:
        raise InvalidInput(f"bandwidth selection needs n >= 20, got {n}")
    kernel = get_kernel(kernel)
    hi = n // 4
    thr = c_thres * math.sqrt(math.log10(n) / n)
    g0 = sample_autocov(x, 0)
    if np.any(np.diag(g0) <= 0):
        raise InvalidInput("zero-variance component")
    run = 0
    m_hat = None
    for h in range(1, min(hi + k_n, n - 1) + 1):
        if autocorrelation_magnitude(x, h, g0) < thr:
            run += 1
            if run == k_n + 1:
                m_hat = h - k_n
                break
        else:
            run = 0
        if h - run >= hi:
            break
    if m_hat is None:
        warnings.warn(f"no autocorrelation cut-off found below n/4; using M = {hi}",
                      BandwidthWarning, stacklevel=2)
        return hi
    factor = JENKINS_FACTOR.get(kernel.name, 1.0)
    M = int(math.ceil(2 * m_hat * factor))
    return int(min(max(M, 4), hi))
