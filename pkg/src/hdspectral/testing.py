"""Max-type tests for partial coherence over a frequency band and FDR control."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import EmptyGrid, InvalidBandwidth, InvalidInput
from .spectral import KernelSpec, get_kernel

RHO_CLAMP = 1.0 - 1e-6
BAND_TOL = 1e-12


@dataclass(frozen=True)
class FrequencyGrid:
    M: int
    N: int
    band: tuple
    l_indices: np.ndarray
    frequencies: np.ndarray

    @property
    def d(self) -> int:
        return int(self.frequencies.shape[0])

    @property
    def spacing(self) -> float:
        return math.pi * self.N / self.M


def _normalise_band(band) -> tuple:
    arr = np.asarray(band, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidInput("band must be (lo, hi) or a list of such intervals")
    for lo, hi in arr:
        if not (0.0 <= lo < hi <= math.pi + BAND_TOL):
            raise InvalidInput(f"band interval [{lo}, {hi}] must lie in [0, pi] with lo < hi")
    return tuple((float(lo), float(hi)) for lo, hi in arr)


def grid_spacing_parameter(M: int, kernel: KernelSpec) -> int:
    """N = log(M)^(2/r), rounded, at least 1."""
    r = get_kernel(kernel).fourier_decay_order
    return max(1, int(round(math.log(M) ** (2.0 / r))))


def build_grid(M: int, kernel: KernelSpec | str, band=(0.0, math.pi)) -> FrequencyGrid:
    """Frequencies pi l N / M, l = 1, ..., M/N - 1, restricted to the band."""
    if M < 4:
        raise InvalidBandwidth(f"grid construction needs M >= 4, got {M}")
    kernel = get_kernel(kernel)
    band = _normalise_band(band)
    N = grid_spacing_parameter(M, kernel)
    l_max = int(math.floor(M / N - 1 + 1e-12))
    ls = np.arange(1, l_max + 1)
    freqs = math.pi * ls * N / M
    inside = np.zeros(ls.shape, dtype=bool)
    for lo, hi in band:
        inside |= (freqs >= lo - BAND_TOL) & (freqs <= hi + BAND_TOL)
    inside &= (freqs > 0) & (freqs < math.pi)
    if not inside.any():
        raise EmptyGrid(f"no grid frequency of spacing pi*{N}/{M} falls inside {band}")
    return FrequencyGrid(int(M), N, band, ls[inside], freqs[inside])


# ---------------------------------------------------------------------------
# per-pair statistic


def clamp_rho(rho, limit: float = RHO_CLAMP):
    rho = np.asarray(rho, dtype=complex)
    mod = np.abs(rho)
    over = mod > limit
    out = np.where(over, rho / np.where(over, mod, 1.0) * limit, rho)
    return out, over


def vhat_inverse(rho_plugin: complex, c_k2: float) -> np.ndarray:
    """Inverse asymptotic covariance of (Re, Im) of the partial coherence estimate."""
    rho, _ = clamp_rho(rho_plugin)
    re, im = float(rho.real), float(rho.imag)
    m2 = re * re + im * im
    pref = 2.0 / (c_k2 * (1.0 - m2) ** 2)
    return pref * np.array([[1.0 - im * im, re * im], [re * im, 1.0 - re * re]])


def quadratic_forms(rho_de, rho_var, delta: float, n: int, M: int, c_k2: float) -> np.ndarray:
    """(n/M) w' V^{-1} w per frequency, with w the estimate shrunk by delta along its phase.

    Works elementwise on arrays of any shape.
    """
    rho_de = np.asarray(rho_de, dtype=complex)
    rv, _ = clamp_rho(rho_var)
    mod = np.abs(rho_de)
    phase = np.where(mod > 0, np.angle(rho_de), 0.0)
    shrunk = mod - delta
    w1 = shrunk * np.cos(phase)
    w2 = shrunk * np.sin(phase)
    re, im = rv.real, rv.imag
    m2 = re * re + im * im
    pref = 2.0 / (c_k2 * (1.0 - m2) ** 2)
    quad = pref * ((1.0 - im * im) * w1 * w1 + 2.0 * re * im * w1 * w2 + (1.0 - re * re) * w2 * w2)
    return (n / M) * quad


@dataclass
class PairStatistic:
    u: int
    v: int
    T: float
    per_frequency: list
    exceeded: bool
    clamped: bool = False

    @property
    def pair(self):
        return (self.u, self.v)


def pair_statistic_from_arrays(u, v, frequencies, rho_de, rho_pl, delta, n, M, c_k2,
                               use_debiased_variance: bool = False) -> PairStatistic:
    if not 0.0 <= delta < 1.0:
        raise InvalidInput("delta must lie in [0, 1)")
    rho_de = np.asarray(rho_de, dtype=complex)
    rho_pl = np.asarray(rho_pl, dtype=complex)
    if rho_de.size == 0:
        raise EmptyGrid("no frequencies for this pair")
    rho_var = rho_de if use_debiased_variance else rho_pl
    quads = quadratic_forms(rho_de, rho_var, delta, n, M, c_k2)
    exceeded = bool(np.abs(rho_de).max() > delta)
    T = float(quads.max()) if exceeded else 0.0
    per = [(float(w), complex(a), complex(b), float(q))
           for w, a, b, q in zip(frequencies, rho_de, rho_pl, quads)]
    clamped = bool(np.any(np.abs(rho_var) > RHO_CLAMP))
    return PairStatistic(int(u), int(v), T, per, exceeded, clamped)


def pair_statistic(estimates: Sequence, delta: float, n: int, M: int, c_k2: float,
                   use_debiased_variance: bool = False) -> PairStatistic:
    """Max-type statistic for one pair from its per-frequency de-biased estimates."""
    if len(estimates) == 0:
        raise EmptyGrid("no frequencies for this pair")
    u, v = estimates[0].u, estimates[0].v
    return pair_statistic_from_arrays(
        u, v, [e.omega for e in estimates], [e.rho_de for e in estimates],
        [e.rho_plugin for e in estimates], delta, n, M, c_k2, use_debiased_variance)


# ---------------------------------------------------------------------------
# null distribution


def g_tail(t, d):
    """G_d(t) = 1 - (1 - exp(-t/2))^d, the tail of the max of d chi^2_2 variables."""
    t = np.maximum(np.asarray(t, dtype=float), 0.0)
    d = np.asarray(d, dtype=float)
    with np.errstate(divide="ignore"):
        return -np.expm1(d * np.log1p(-np.exp(-t / 2.0)))


def g_tail_inverse(x, d) -> float:
    """Smallest t >= 0 with G_d(t) <= x."""
    if x >= 1.0:
        return 0.0
    if x <= 0.0:
        return math.inf
    return -2.0 * math.log(-math.expm1(math.log1p(-x) / d))


def single_test_quantile(d: int, alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise InvalidInput("alpha must lie in (0, 1)")
    if d < 1:
        raise InvalidInput("d must be a positive integer")
    return g_tail_inverse(alpha, d)


def single_test(stat: PairStatistic | float, d: int, alpha: float) -> bool:
    """True (reject) iff T >= the upper alpha quantile of G_d."""
    T = stat.T if isinstance(stat, PairStatistic) else float(stat)
    return T >= single_test_quantile(d, alpha)


# ---------------------------------------------------------------------------
# multiple testing


def _threshold_search(T, alpha, tail, tail_inverse):
    """Exact inf{t >= 0 : tail(t) / max(1, #{T_i >= t}) <= alpha}.

    ``#{T_i >= t}`` is constant on (T_(k+1), T_(k)] for the descending order
    statistics, and ``tail`` is decreasing, so the infimum on each piece is
    ``max(T_(k+1), tail_inverse(alpha * max(1, k)))``.
    """
    T = np.sort(np.maximum(np.asarray(T, dtype=float), 0.0))[::-1]
    q = T.size
    best = math.inf
    for k in range(q + 1):
        upper = math.inf if k == 0 else T[k - 1]
        lower = 0.0 if k == q else T[k]
        cand = max(lower, tail_inverse(alpha * max(1, k)))
        if cand <= upper and cand < best:
            best = cand
    return best


def fdr_threshold(stats: Iterable, d: int, q: int | None = None, alpha: float = 0.1) -> float:
    """Threshold t_hat for the FDR-controlling multiple test.

    The search runs over all t >= 0. Whenever some t <= 2 log(dq) satisfies the
    criterion this is the constrained infimum; otherwise the first feasible t
    beyond 2 log(dq) is returned, which for q = 1 equals the single-test
    critical value.
    """
    T = np.array([s.T if isinstance(s, PairStatistic) else float(s) for s in stats])
    q = T.size if q is None else int(q)
    if q < 1:
        raise InvalidInput("need at least one statistic")
    if not 0.0 < alpha < 1.0:
        raise InvalidInput("alpha must lie in (0, 1)")
    return _threshold_search(T, alpha, lambda t: g_tail(t, d) * q,
                             lambda x: g_tail_inverse(x / q, d))


def fdr_threshold_multiband(stats: Iterable, ds: Sequence[int], alpha: float = 0.1) -> float:
    """Threshold with per-pair grid sizes: numerator sum_(u,v) G_{d_uv}(t)."""
    T = np.array([s.T if isinstance(s, PairStatistic) else float(s) for s in stats])
    ds = np.asarray(ds, dtype=float)
    if T.size != ds.size or T.size == 0:
        raise InvalidInput("need one grid size per statistic")
    if np.unique(ds).size == 1:
        return fdr_threshold(T, int(ds[0]), T.size, alpha)

    def total(t):
        return float(np.sum(g_tail(t, ds)))

    def inverse(x):
        if total(0.0) <= x:
            return 0.0
        hi = 1.0
        while total(hi) > x:
            hi *= 2.0
            if hi > 1e6:
                return math.inf
        return brentq(lambda t: total(t) - x, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)

    return _threshold_search(T, alpha, total, inverse)


@dataclass
class MultiTestResult:
    alpha: float
    delta: float
    t_hat: float
    rejected: list
    statistics: list
    q: int
    d: int | list
    above_cap: bool = False

    @property
    def edges(self):
        return list(self.rejected)


def multiple_test(statistics: Sequence[PairStatistic], d: int, alpha: float, delta: float = 0.0
                  ) -> MultiTestResult:
    """Reject every pair with T >= t_hat; pairs are reported in lexicographic order."""
    stats = sorted(statistics, key=lambda s: (min(s.u, s.v), max(s.u, s.v)))
    if not stats:
        raise InvalidInput("empty pair set")
    seen = set()
    for s in stats:
        if s.u == s.v:
            raise InvalidInput(f"diagonal pair ({s.u}, {s.v}) is not a valid hypothesis")
        key = (min(s.u, s.v), max(s.u, s.v))
        if key in seen:
            raise InvalidInput(f"duplicate pair {key}")
        seen.add(key)
    q = len(stats)
    t_hat = fdr_threshold(stats, d, q, alpha)
    rejected = [(s.u, s.v) for s in stats if s.T >= t_hat]
    cap = 2.0 * math.log(d * q)
    return MultiTestResult(alpha, delta, t_hat, rejected, stats, q, d, bool(t_hat > cap))
