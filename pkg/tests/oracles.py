"""Slow, literal reference implementations used as test oracles.

Every function here is written as explicit loops straight from the defining
sums and shares no code with the package.
"""
import cmath
import math

import numpy as np


def bartlett(u):
    return max(0.0, 1.0 - abs(u))


def uniform(u):
    return 1.0 if abs(u) <= 1.0 else 0.0


KERNEL_FUNCS = {"bartlett_modified": bartlett, "uniform": uniform}


def autocov(x, u):
    n, p = x.shape
    g = np.zeros((p, p))
    for t in range(n):
        if 0 <= t + u < n:
            for i in range(p):
                for j in range(p):
                    g[i, j] += x[t + u, i] * x[t, j]
    return g / n


def lag_window(x, kernel, M, omega):
    n, p = x.shape
    K = KERNEL_FUNCS[kernel]
    f = np.zeros((p, p), dtype=complex)
    for u in range(-(n - 1), n):
        w = K(u / M)
        if w == 0.0:
            continue
        f += w * autocov(x, u) * cmath.exp(-1j * u * omega)
    return f / (2 * math.pi)


def dft(x, omega):
    n, p = x.shape
    z = np.zeros(p, dtype=complex)
    for t in range(1, n + 1):
        z += x[t - 1] * cmath.exp(-1j * omega * t)
    return z / math.sqrt(2 * math.pi * n)


def kappa(kernel, M, omega, n):
    K = KERNEL_FUNCS[kernel]
    return sum(K(u / M) * cmath.exp(-1j * u * omega) for u in range(-(n - 1), n)) / M


def weighted_sum(x, kernel, M, omega):
    n, p = x.shape
    out = np.zeros((p, p), dtype=complex)
    for k in range(n):
        wk = 2 * math.pi * k / n
        z = dft(x, wk)
        kap = kappa(kernel, M, omega - wk, n)
        for i in range(p):
            for j in range(p):
                out[i, j] += kap * z[i] * z[j].conjugate()
    return out


def smoothed_periodogram(x, kernel, M, omega):
    return M / x.shape[0] * weighted_sum(x, kernel, M, omega)


def beta_debiased(x, theta, kernel, M, u, v, omega):
    """Coefficient of Z_u in the regression of Z_v, one-step corrected.

    Residual e_k = Z_v - beta_v^H Z_{-v}, rotated regressor r_k = Z_{-v}^H gamma
    with gamma^H = theta_vv theta_{u,-v} - theta_uv theta_{v,-v}; the correction
    is sum kappa e_k r_k / sum kappa Z_u r_k.
    """
    n, p = x.shape
    rest = [j for j in range(p) if j != v]
    tvv = theta[v, v]
    beta = [-theta[j, v] / tvv for j in rest]
    gamma = [(tvv * theta[u, j] - theta[u, v] * theta[v, j]).conjugate() for j in rest]
    num = 0j
    den = 0j
    for k in range(n):
        wk = 2 * math.pi * k / n
        z = dft(x, wk)
        kap = kappa(kernel, M, omega - wk, n)
        resid = z[v] - sum(beta[i].conjugate() * z[j] for i, j in enumerate(rest))
        rot = sum(z[j].conjugate() * gamma[i] for i, j in enumerate(rest))
        num += kap * resid * rot
        den += kap * z[u] * rot
    return -theta[v, u] / tvv + num / den


def var_filter(x, coefs):
    n, p = x.shape
    m = len(coefs)
    y = np.zeros((n - m, p))
    for t in range(m, n):
        y[t - m] = x[t]
        for j in range(1, m + 1):
            for a in range(p):
                for b in range(p):
                    y[t - m, a] -= coefs[j - 1][a, b] * x[t - j, b]
    return y


def g_tail_bisect(target, ds, lo=0.0, hi=200.0, iters=200):
    """Smallest t with sum_i 1 - (1 - e^{-t/2})^{d_i} <= target, by bisection."""
    def total(t):
        return sum(1.0 - (1.0 - math.exp(-t / 2.0)) ** d for d in ds)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if total(mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def fdr_threshold_scan(T, d, q, alpha, step=1e-4, t_max=60.0):
    """Fine-grid scan of the FDR criterion, for coarse cross-checks."""
    T = np.asarray(T, dtype=float)
    t = 0.0
    while t <= t_max:
        g = 1.0 - (1.0 - math.exp(-t / 2.0)) ** d
        if g * q / max(1, int(np.sum(T >= t))) <= alpha:
            return t
        t += step
    return math.inf
