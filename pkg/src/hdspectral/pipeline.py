"""End-to-end partial coherence graph estimation: prewhiten, estimate, de-bias, test."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .coherence import debiased_matrix
from .errors import HDSpectralError, InvalidBandwidth, InvalidInput
from .inverse import InverseEstimate, bic_path, glasso_solve, clime_solve, project_psd, \
    threshold_inverse
from .prewhiten import VarModel, apply_filter, default_order, fit_sparse_var, recolor_spectrum
from .spectral import (MultivariateSeries, bandwidth_select, center_series, fourier_dft,
                       get_kernel, lag_window_estimate, weighted_periodogram_sum)
from .testing import FrequencyGrid, MultiTestResult, build_grid, multiple_test, \
    pair_statistic_from_arrays


@contextmanager
def _stage(name: str):
    try:
        yield
    except HDSpectralError as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise


@dataclass
class AnalysisResult:
    test: MultiTestResult
    grid: FrequencyGrid
    tuning: dict
    rho_de: np.ndarray
    rho_plugin: np.ndarray
    unstable: np.ndarray
    inverses: list
    var_model: VarModel
    n: int
    regularizing_edges: list | None = None
    pairs: list = field(default_factory=list)

    @property
    def edges(self) -> list:
        return self.test.rejected

    @property
    def t_hat(self) -> float:
        return self.test.t_hat


def _inverse_at(args):
    S, n_eff, method, lam = args
    if lam == "auto":
        est, records = bic_path(S, n_eff, method)
        est.info["bic_path"] = records
        return est
    if method == "glasso":
        return glasso_solve(project_psd(S), float(lam))
    return clime_solve(S, float(lam))


def _map(fn, items, workers: int):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _pair_list(pairs, p):
    if pairs is None:
        return [(u, v) for u in range(p) for v in range(u + 1, p)]
    out = set()
    for u, v in pairs:
        u, v = int(u), int(v)
        if u == v:
            raise InvalidInput(f"diagonal pair ({u}, {v}) is not a valid hypothesis")
        if not (0 <= u < p and 0 <= v < p):
            raise InvalidInput(f"pair ({u}, {v}) out of range for p={p}")
        out.add((min(u, v), max(u, v)))
    if not out:
        raise InvalidInput("empty pair set")
    return sorted(out)


def analyze(data, *, delta: float = 0.0, alpha: float = 0.1, band=(0.0, math.pi),
            kernel="bartlett_modified", bandwidth="auto", prewhiten: bool = True,
            order: int | None = None, inverse: str = "glasso", lam="auto", pairs=None,
            k_n: int = 5, c_thres: float = 1.5, regularizing: bool = False,
            use_debiased_variance: bool = False, n_eff_bic: int | None = None,
            workers: int = 1) -> AnalysisResult:
    """Estimate the partial coherence graph of a multivariate series.

    Prewhitens with a sparse VAR, picks the truncation lag on the filtered
    series, estimates the spectral density and its inverse on the test grid,
    de-biases the partial coherences and applies the FDR-controlled max test.
    With ``regularizing`` the thresholded inverse-estimate graph is also
    returned for comparison.
    """
    if not 0.0 <= delta < 1.0:
        raise InvalidInput("delta must lie in [0, 1)")
    if not 0.0 < alpha < 1.0:
        raise InvalidInput("alpha must lie in (0, 1)")
    if inverse not in ("glasso", "clime"):
        raise InvalidInput(f"unknown inverse method {inverse!r}")
    kernel = get_kernel(kernel)
    rate = data.sampling_rate if isinstance(data, MultivariateSeries) else None
    raw = data.values if isinstance(data, MultivariateSeries) else data

    with _stage("input"):
        x = center_series(raw, rate, reject_degenerate=True)
    n, p = x.values.shape
    if p < 2:
        raise InvalidInput("need at least two component series")
    pair_list = _pair_list(pairs, p)

    with _stage("prewhitening"):
        if prewhiten:
            m = default_order(n) if order is None else int(order)
            model = fit_sparse_var(x, m)
        else:
            model = VarModel.identity(p)
        y = apply_filter(x, model).values if model.order > 0 else x.values
    n_y = y.shape[0]

    with _stage("bandwidth"):
        if bandwidth == "auto":
            M = bandwidth_select(y, k_n, c_thres, kernel)
        else:
            M = int(bandwidth)
        if not (1 <= M and 2 * M < n_y):
            raise InvalidBandwidth(f"need 1 <= M < n/2, got M={M}, n={n_y}")
        grid = build_grid(M, kernel, band)

    with _stage("spectral-estimation"):
        f_y = lag_window_estimate(y, kernel, M, grid.frequencies)
        f_x = [recolor_spectrum(model, f_y[l], w) for l, w in enumerate(grid.frequencies)]

    n_eff = n_y if n_eff_bic is None else int(n_eff_bic)
    with _stage("inverse-estimation"):
        inverses = _map(_inverse_at, [(S, n_eff, inverse, lam) for S in f_x], workers)

    with _stage("debiasing"):
        z = fourier_dft(y)
        rho_de, rho_pl, unstable = [], [], []
        for l, w in enumerate(grid.frequencies):
            S = recolor_spectrum(model, weighted_periodogram_sum(z, kernel, M, w), w)
            r_de, r_pl, bad = debiased_matrix(S, inverses[l])
            rho_de.append(r_de)
            rho_pl.append(r_pl)
            unstable.append(bad)
        rho_de, rho_pl, unstable = np.array(rho_de), np.array(rho_pl), np.array(unstable)

    with _stage("testing"):
        stats = [pair_statistic_from_arrays(u, v, grid.frequencies, rho_de[:, u, v],
                                            rho_pl[:, u, v], delta, n_y, M, kernel.c_k2,
                                            use_debiased_variance)
                 for u, v in pair_list]
        result = multiple_test(stats, grid.d, alpha, delta)

    reg_edges = None
    if regularizing:
        support = np.zeros((p, p), dtype=bool)
        for est in inverses:
            support |= threshold_inverse(est, est.lam).offdiag_support()
        reg_edges = [(u, v) for u, v in pair_list if support[u, v]]

    tuning = {
        "n": n, "p": p, "n_filtered": n_y,
        "kernel": kernel.name, "c_k2": kernel.c_k2,
        "M": int(M), "bandwidth_source": "auto" if bandwidth == "auto" else "fixed",
        "k_n": k_n, "c_thres": c_thres,
        "N": grid.N, "d": grid.d, "grid_l": grid.l_indices.tolist(),
        "frequencies": grid.frequencies.tolist(), "band": [list(b) for b in grid.band],
        "prewhiten": bool(prewhiten), "var_order": model.order,
        "var_nonzero": model.nonzero_count,
        "inverse": inverse, "lambda_mode": "auto" if lam == "auto" else "fixed",
        "lambda": [float(e.lam) for e in inverses], "n_eff_bic": n_eff,
        "delta": delta, "alpha": alpha, "q": len(pair_list),
    }
    return AnalysisResult(result, grid, tuning, rho_de, rho_pl, unstable, inverses, model,
                          n_y, reg_edges, pair_list)
