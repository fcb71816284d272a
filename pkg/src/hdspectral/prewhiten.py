"""Sparse VAR prewhitening: row-wise adaptive lasso fit, time-domain filtering
and frequency-domain recolouring."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import InvalidInput, InvalidOrder, SingularTransfer
from .spectral import MultivariateSeries, _values

N_LAMBDA = 50
LAMBDA_MIN_RATIO = 1e-3
CD_TOL = 1e-8
CD_MAX_SWEEPS = 1000
RSS_FLOOR = 1e-300


class StabilityWarning(UserWarning):
    pass


@dataclass
class VarModel:
    """VAR(m) filter with coefficient stack of shape (m, p, p)."""

    coefficients: np.ndarray
    fit_diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.ndim != 3:
            raise InvalidInput("coefficients must have shape (m, p, p)")

    @classmethod
    def identity(cls, p: int) -> "VarModel":
        return cls(np.zeros((0, p, p)))

    @property
    def order(self) -> int:
        return self.coefficients.shape[0]

    @property
    def p(self) -> int:
        return self.coefficients.shape[1]

    @property
    def nonzero_count(self) -> int:
        return int(np.count_nonzero(np.abs(self.coefficients) > 0))

    def companion_radius(self) -> float:
        m, p = self.order, self.p
        if m == 0:
            return 0.0
        comp = np.zeros((m * p, m * p))
        comp[:p] = np.hstack(list(self.coefficients))
        comp[p:, :-p] = np.eye((m - 1) * p)
        return float(np.max(np.abs(np.linalg.eigvals(comp))))

    def is_stable(self) -> bool:
        return self.companion_radius() < 1.0


def default_order(n: int) -> int:
    return int(math.ceil(math.log10(n)))


@njit(cache=True)
def _lasso_cd(G, c, yy, pen, b, tol, max_sweeps, objective):
    """Coordinate descent on 0.5 b'Gb - c'b + 0.5 yy + sum pen|b| (Gram form).

    Updates ``b`` in place, writes the objective after each sweep into
    ``objective`` and returns the number of sweeps performed.
    """
    d = c.shape[0]
    Gb = G @ b
    sweeps = 0
    for s in range(max_sweeps):
        maxdelta = 0.0
        for j in range(d):
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            rj = c[j] - Gb[j] + gjj * b[j]
            if rj > pen[j]:
                new = (rj - pen[j]) / gjj
            elif rj < -pen[j]:
                new = (rj + pen[j]) / gjj
            else:
                new = 0.0
            delta = new - b[j]
            if delta != 0.0:
                for k in range(d):
                    Gb[k] += delta * G[k, j]
                b[j] = new
                if abs(delta) > maxdelta:
                    maxdelta = abs(delta)
        obj = 0.5 * yy
        for j in range(d):
            obj += 0.5 * b[j] * Gb[j] - c[j] * b[j] + pen[j] * abs(b[j])
        objective[s] = obj
        sweeps = s + 1
        if maxdelta < tol:
            break
    return sweeps


def lasso_path_bic(G, c, yy, weights, n_eff, c_n, n_lambda=N_LAMBDA):
    """Weighted lasso path in Gram form with modified-BIC selection.

    Returns (coef, diagnostics). ``G = X'X/n_eff``, ``c = X'y/n_eff``,
    ``yy = y'y/n_eff``.
    """
    d = c.shape[0]
    ratio = np.where(weights > 0, np.abs(c) / weights, 0.0)
    lam_max = float(ratio.max())
    if lam_max == 0.0:
        return np.zeros(d), {"lambda": 0.0, "bic": math.log(max(yy, RSS_FLOOR)), "nonzero": 0}
    lams = lam_max * np.logspace(0, math.log10(LAMBDA_MIN_RATIO), n_lambda)
    b = np.zeros(d)
    obj = np.empty(CD_MAX_SWEEPS)
    best = (np.inf, None, None, None)
    for lam in lams:
        _lasso_cd(G, c, yy, lam * weights, b, CD_TOL, CD_MAX_SWEEPS, obj)
        rss = max(yy - 2.0 * c @ b + b @ G @ b, 0.0)
        k = int(np.count_nonzero(b))
        bic = math.log(max(rss, RSS_FLOOR)) + k * math.log(n_eff) / n_eff * c_n
        if bic < best[0]:
            best = (bic, b.copy(), lam, k)
    bic, coef, lam, k = best
    return coef, {"lambda": float(lam), "bic": float(bic), "nonzero": int(k)}


def _lag_design(x: np.ndarray, m: int):
    n = x.shape[0]
    design = np.hstack([x[m - j: n - j] for j in range(1, m + 1)])
    return design, x[m:]


def fit_sparse_var(series, order: int | None = None) -> VarModel:
    """Row-wise adaptive lasso VAR(order) with per-row modified-BIC penalty."""
    x = _values(series)
    n, p = x.shape
    m = default_order(n) if order is None else int(order)
    if m < 0:
        raise InvalidOrder("order must be non-negative")
    if m == 0:
        return VarModel.identity(p)
    if 10 * m >= n:
        raise InvalidOrder(f"order {m} too large for n = {n} (need n > 10 m)")
    design, target = _lag_design(x, m)
    n_eff = n - m
    G = design.T @ design / n_eff
    d = G.shape[0]
    ridge = 1e-3 * np.trace(G) / d
    c_n = math.log(p)
    coef = np.zeros((p, d))
    rows = []
    try:
        chol = np.linalg.cholesky(G + ridge * np.eye(d))
    except np.linalg.LinAlgError:
        chol = None
    for i in range(p):
        y = target[:, i]
        c = design.T @ y / n_eff
        yy = float(y @ y / n_eff)
        if chol is None:
            rows.append({"lambda": None, "bic": None, "nonzero": 0, "failed": True})
            continue
        init = np.linalg.solve(chol.T, np.linalg.solve(chol, c))
        weights = 1.0 / (np.abs(init) + 1e-6)
        coef[i], info = lasso_path_bic(G, c, yy, weights, n_eff, c_n)
        info["failed"] = False
        rows.append(info)
    phis = coef.reshape(p, m, p).transpose(1, 0, 2)
    model = VarModel(np.ascontiguousarray(phis), {"rows": rows, "n_eff": n_eff, "C_n": c_n})
    if not model.is_stable():
        warnings.warn("fitted VAR filter is not stable", StabilityWarning, stacklevel=2)
    return model


def apply_filter(series, model: VarModel) -> MultivariateSeries:
    """Y_t = X_t - sum_j Phi_j X_{t-j}; row t of the output is original time t + m."""
    x = _values(series)
    n = x.shape[0]
    m = model.order
    if n <= m:
        raise InvalidInput(f"need n > m, got n={n}, m={m}")
    y = x[m:].copy()
    for j in range(1, m + 1):
        y -= x[m - j: n - j] @ model.coefficients[j - 1].T
    rate = series.sampling_rate if isinstance(series, MultivariateSeries) else None
    return MultivariateSeries(y, rate, centered=True)


def transfer_function(model: VarModel, omega: float) -> np.ndarray:
    """Phi(w) = I - sum_j Phi_j exp(-i w j)."""
    out = np.eye(model.p, dtype=complex)
    for j in range(1, model.order + 1):
        out -= model.coefficients[j - 1] * np.exp(-1j * omega * j)
    return out


def recolor_spectrum(model: VarModel, whitened_sum: np.ndarray, omega: float) -> np.ndarray:
    """Phi(w)^{-1} S Phi(w)^{-H}."""
    s = np.asarray(whitened_sum, dtype=complex)
    if model.order == 0:
        return s.copy()
    phi = transfer_function(model, omega)
    if np.linalg.cond(phi) >= 1e12:
        raise SingularTransfer(f"transfer function near-singular at omega={omega:.6g}")
    left = np.linalg.solve(phi, s)
    return np.linalg.solve(phi, left.conj().T).conj().T
