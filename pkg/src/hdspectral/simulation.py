"""Sparse VARMA data-generating processes with known spectra, and FDR/power experiments."""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from .errors import DegenerateSpectrum, GenerationFailure, InvalidInput, SingularTransfer
from .spectral import MultivariateSeries

KINDS = ("varma11", "vma5")
BURN_IN = 500
TARGET_RADIUS = 0.7
SUPPORT_GRID = 64
NONZERO_TOL = 1e-8
S2_LEVEL = 0.2
GAMMA_TOL = 1e-14


@dataclass
class VarmaModel:
    ar: list
    ma: list
    sigma_eps: np.ndarray
    seed: int | None = None
    s1: float = float("nan")
    s2: float = float("nan")

    def __post_init__(self):
        self.ar = [np.asarray(a, dtype=float) for a in self.ar]
        self.ma = [np.asarray(b, dtype=float) for b in self.ma]
        self.sigma_eps = np.atleast_2d(np.asarray(self.sigma_eps, dtype=float))
        p = self.sigma_eps.shape[0]
        for mat in self.ar + self.ma:
            if mat.shape != (p, p):
                raise InvalidInput("coefficient matrices must be p x p")
        if np.linalg.eigvalsh(self.sigma_eps).min() <= 0:
            raise InvalidInput("sigma_eps must be positive definite")

    @property
    def p(self) -> int:
        return self.sigma_eps.shape[0]

    @property
    def sparsity_summary(self) -> dict:
        return {"S1": self.s1, "S2": self.s2}


def _companion_radius(mats) -> float:
    if not mats:
        return 0.0
    p = mats[0].shape[0]
    m = len(mats)
    comp = np.zeros((m * p, m * p))
    comp[:p] = np.hstack(mats)
    comp[p:, :-p] = np.eye((m - 1) * p)
    return float(np.abs(np.linalg.eigvals(comp)).max())


def ar_radius(model: VarmaModel) -> float:
    return _companion_radius(model.ar)


def ma_radius(model: VarmaModel) -> float:
    # invertibility of I + sum B_j L^j is governed by the companion of -B_j
    return _companion_radius([-b for b in model.ma])


# ---------------------------------------------------------------------------
# spectra


def true_spectral_density(model: VarmaModel, omega: float) -> np.ndarray:
    """f(w) = (2 pi)^{-1} A(w)^{-1} B(w) Sigma B(w)^H A(w)^{-H}."""
    p = model.p
    eye = np.eye(p, dtype=complex)
    A = eye.copy()
    for j, a in enumerate(model.ar, start=1):
        A -= a * np.exp(-1j * omega * j)
    B = eye.copy()
    for j, b in enumerate(model.ma, start=1):
        B += b * np.exp(-1j * omega * j)
    if np.linalg.cond(A) >= 1e12:
        raise SingularTransfer(f"AR transfer function singular at omega={omega:.6g}")
    H = np.linalg.solve(A, B)
    f = H @ model.sigma_eps @ H.conj().T / (2.0 * math.pi)
    return 0.5 * (f + f.conj().T)


def true_inverse_density(model: VarmaModel, omega: float) -> np.ndarray:
    f = true_spectral_density(model, omega)
    if np.linalg.cond(f) >= 1e14:
        raise DegenerateSpectrum(f"true spectral density singular at omega={omega:.6g}")
    return np.linalg.inv(f)


def true_partial_coherence_matrix(model: VarmaModel, omega: float) -> np.ndarray:
    th = true_inverse_density(model, omega)
    s = 1.0 / np.sqrt(np.diagonal(th).real)
    rho = -th * s[:, None] * s[None, :]
    np.fill_diagonal(rho, 1.0)
    return rho


def true_partial_coherence(model: VarmaModel, u: int, v: int, omega: float) -> complex:
    return complex(true_partial_coherence_matrix(model, omega)[u, v])


def max_partial_coherence(model: VarmaModel, n_grid: int = SUPPORT_GRID) -> np.ndarray:
    """max over a grid on [0, pi] of |rho_uv(w)|, as a p x p matrix with zero diagonal."""
    out = np.zeros((model.p, model.p))
    for w in np.linspace(0.0, math.pi, n_grid):
        out = np.maximum(out, np.abs(true_partial_coherence_matrix(model, w)))
    np.fill_diagonal(out, 0.0)
    return out


def sparsity(model: VarmaModel, n_grid: int = SUPPORT_GRID):
    mx = max_partial_coherence(model, n_grid)
    iu = np.triu_indices(model.p, 1)
    vals = mx[iu]
    return float(np.mean(vals > NONZERO_TOL)), float(np.mean(vals > S2_LEVEL))


# ---------------------------------------------------------------------------
# autocovariances


def _state_space(model: VarmaModel):
    """X_t = H s_t, s_{t+1} = F s_t + G e_{t+1} with s_t = (X_t..X_{t-P+1}, e_t..e_{t-Q})."""
    p, P, Q = model.p, len(model.ar), len(model.ma)
    dim = p * (P + Q + 1)
    F = np.zeros((dim, dim))
    G = np.zeros((dim, p))
    H = np.zeros((p, dim))
    xe = P * p                          # offset of the innovation block
    if P:
        for j, a in enumerate(model.ar):
            F[:p, j * p:(j + 1) * p] = a
        for j, b in enumerate(model.ma):
            F[:p, xe + j * p: xe + (j + 1) * p] = b
        G[:p] = np.eye(p)
        F[p:P * p, :(P - 1) * p] = np.eye((P - 1) * p)
        H[:, :p] = np.eye(p)
    else:
        H[:, xe: xe + p] = np.eye(p)
        for j, b in enumerate(model.ma):
            H[:, xe + (j + 1) * p: xe + (j + 2) * p] = b
    G[xe: xe + p] = np.eye(p)
    F[xe + p:, xe: xe + Q * p] = np.eye(Q * p)
    return F, G, H


def model_autocovariances(model: VarmaModel, max_lag: int) -> np.ndarray:
    """Gamma(k) = E[X_{t+k} X_t'] for k = 0..K, K <= max_lag, truncated once below 1e-14."""
    F, G, H = _state_space(model)
    P0 = solve_discrete_lyapunov(F, G @ model.sigma_eps @ G.T)
    out = []
    cur = P0 @ H.T
    for k in range(max_lag + 1):
        g = H @ cur
        out.append(g)
        if k > 0 and np.abs(g).max() < GAMMA_TOL:
            break
        cur = F @ cur
    return np.array(out)


def exact_dft_variance(model: VarmaModel, n: int, omega: float) -> np.ndarray:
    """(2 pi)^{-1} sum_{|k|<n} (1 - |k|/n) Gamma(k) e^{-i w k}."""
    gam = model_autocovariances(model, n - 1)
    out = gam[0].astype(complex)
    for k in range(1, gam.shape[0]):
        w = (1.0 - k / n) * np.exp(-1j * omega * k)
        out = out + w * gam[k] + np.conj(w) * gam[k].T
    return out / (2.0 * math.pi)


# ---------------------------------------------------------------------------
# generation


def _random_entries(rng, size, lo, hi):
    return rng.uniform(lo, hi, size) * rng.choice([-1.0, 1.0], size)


def _fill_pairs(support: np.ndarray) -> int:
    """Off-diagonal pairs of the inverse spectral support induced by AR support."""
    s = support.astype(int)
    cover = (s.T @ s) > 0
    return int(np.triu(cover, 1).sum())


def _target_pairs(p: int, density: float) -> int:
    return int(round(density * p * (p - 1) / 2))


def _sparse_ar_support(p, density, rng):
    """Banded-plus-random AR(1) support grown greedily until the induced pair count hits target."""
    target = _target_pairs(p, density)
    support = np.eye(p, dtype=bool)
    band = [(i, i + 1) if rng.random() < 0.5 else (i + 1, i) for i in range(p - 1)]
    band = [band[k] for k in rng.permutation(len(band))]
    off = [(i, j) for i in range(p) for j in range(p) if i != j]
    rand = [off[k] for k in rng.permutation(len(off))]
    count = 0
    for i, j in band + rand:
        if count >= target:
            break
        if support[i, j]:
            continue
        support[i, j] = True
        new = _fill_pairs(support)
        if new > target:
            support[i, j] = False
        else:
            count = new
    return support


def _scale_to_radius(mats, radius_fn, rng, max_attempts=100):
    for _ in range(max_attempts):
        r = radius_fn(mats)
        if r <= TARGET_RADIUS:
            return mats
        mats = [m * (TARGET_RADIUS / r) * 0.999 for m in mats]
    if radius_fn(mats) > TARGET_RADIUS:
        raise GenerationFailure("could not reach the target spectral radius")
    return mats


def _finish(model: VarmaModel) -> VarmaModel:
    model.s1, model.s2 = sparsity(model)
    return model


def sparse_var1(p: int, density: float, seed: int, coef_range=(0.3, 0.5)) -> VarmaModel:
    """Sparse stable VAR(1) with diagonal unit-scale innovations."""
    rng = np.random.default_rng(seed)
    support = _sparse_ar_support(p, density, rng)
    A = np.zeros((p, p))
    A[support] = _random_entries(rng, int(support.sum()), *coef_range)
    A = _scale_to_radius([A], _companion_radius, rng)[0]
    sigma = np.diag(rng.uniform(0.5, 1.5, p))
    return _finish(VarmaModel([A], [], sigma, seed))


def _varma11(p, density, rng, seed):
    support = _sparse_ar_support(p, density, rng)
    A = np.zeros((p, p))
    A[support] = _random_entries(rng, int(support.sum()), 0.3, 0.5)
    A = _scale_to_radius([A], _companion_radius, rng)[0]
    B = np.diag(_random_entries(rng, p, 0.2, 0.5))
    sigma = np.diag(rng.uniform(0.5, 1.5, p))
    return VarmaModel([A], [B], sigma, seed)


def _vma5(p, density, rng, seed):
    """Block-diagonal VMA(5); every pair inside a block is connected."""
    target = _target_pairs(p, density)
    order = rng.permutation(p)
    blocks, used, pairs = [], 0, 0
    while used < p:
        remaining = target - pairs
        if remaining <= 0:
            size = 1
        else:
            # largest block size in [2, 6] that does not overshoot the target
            size = 2
            for s in range(6, 1, -1):
                if s * (s - 1) // 2 <= remaining:
                    size = s
                    break
        size = min(size, p - used)
        blocks.append(order[used: used + size])
        used += size
        pairs += size * (size - 1) // 2
    mats = []
    for j in range(5):
        Bj = np.zeros((p, p))
        decay = 0.7 ** j
        for blk in blocks:
            k = len(blk)
            Bj[np.ix_(blk, blk)] = _random_entries(rng, (k, k), 0.2, 0.5) * decay
        mats.append(Bj)
    mats = _scale_to_radius(mats, lambda ms: _companion_radius([-m for m in ms]), rng)
    sigma = np.diag(rng.uniform(0.5, 1.5, p))
    return VarmaModel([], mats, sigma, seed)


def generate_sparse_varma(p: int, kind: str = "varma11", density: float = 0.05,
                          seed: int = 0) -> VarmaModel:
    if p < 2:
        raise InvalidInput("p must be at least 2")
    if not 0.0 < density <= 0.2:
        raise InvalidInput("density must lie in (0, 0.2]")
    if kind not in KINDS:
        raise InvalidInput(f"unknown kind {kind!r}; choose from {', '.join(KINDS)}")
    rng = np.random.default_rng(seed)
    build = _varma11 if kind == "varma11" else _vma5
    return _finish(build(p, density, rng, seed))


# ---------------------------------------------------------------------------
# simulation


def simulate_path(model: VarmaModel, n: int, seed, innovations: str = "gaussian"
                  ) -> MultivariateSeries:
    """VARMA recursion with a 500-step burn-in."""
    if n < 64:
        raise InvalidInput("n must be at least 64")
    rng = np.random.default_rng(seed)
    p, P, Q = model.p, len(model.ar), len(model.ma)
    total = n + BURN_IN
    if innovations == "gaussian":
        raw = rng.standard_normal((total + Q, p))
    elif innovations == "uniform":
        raw = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), (total + Q, p))
    else:
        raise InvalidInput(f"unknown innovation law {innovations!r}")
    eps = raw @ np.linalg.cholesky(model.sigma_eps).T
    drive = eps[Q:].copy()
    for j, b in enumerate(model.ma, start=1):
        drive += eps[Q - j: Q - j + total] @ b.T
    if P == 0:
        x = drive
    else:
        x = np.zeros((total, p))
        ar_t = [a.T for a in model.ar]
        for t in range(total):
            acc = drive[t].copy()
            for j in range(1, min(P, t) + 1):
                acc += x[t - j] @ ar_t[j - 1]
            x[t] = acc
    return MultivariateSeries(x[BURN_IN:], None, centered=False)


# ---------------------------------------------------------------------------
# experiments


STRONG_MARGIN = 0.3


@dataclass
class ExperimentConfig:
    kind: str = "varma11"
    p: int = 20
    n: int = 2048
    alpha: float = 0.1
    delta: float = 0.0
    method: str = "testing"
    replications: int = 10
    seed: int = 0
    density: float = 0.05
    strong_margin: float = STRONG_MARGIN
    bandwidth: object = "auto"
    inverse: str = "glasso"
    prewhiten: bool = True

    def validate(self):
        if self.replications < 1:
            raise InvalidInput("replications must be at least 1")
        if self.method not in ("testing", "regularizing", "both"):
            raise InvalidInput(f"unknown method {self.method!r}")
        if self.kind not in KINDS and self.kind != "var1":
            raise InvalidInput(f"unknown kind {self.kind!r}")


def build_model(cfg: ExperimentConfig) -> VarmaModel:
    if cfg.kind == "var1":
        return sparse_var1(cfg.p, cfg.density, cfg.seed)
    return generate_sparse_varma(cfg.p, cfg.kind, cfg.density, cfg.seed)


def replication_seeds(seed: int, replications: int) -> list:
    """Independent per-replication streams spawned from the base seed."""
    return np.random.SeedSequence(seed).spawn(replications)


def _rates(edges, alt, strong, nulls):
    edges = set(edges)
    false = len(edges & nulls)
    fdr = false / max(1, len(edges))
    power = len(edges & alt) / len(alt) if alt else None
    strong_power = len(edges & strong) / len(strong) if strong else None
    return {"fdr": fdr, "power": power, "strong_power": strong_power,
            "rejections": len(edges), "false_rejections": false}


def _one_replication(args):
    from .pipeline import analyze
    model, cfg, seq, truth = args
    series = simulate_path(model, cfg.n, seq)
    res = analyze(series, delta=cfg.delta, alpha=cfg.alpha, bandwidth=cfg.bandwidth,
                  inverse=cfg.inverse, prewhiten=cfg.prewhiten, regularizing=True)
    alt, strong, nulls = truth
    out = {}
    if cfg.method in ("testing", "both"):
        out["testing"] = _rates(res.edges, alt, strong, nulls)
    if cfg.method in ("regularizing", "both"):
        out["regularizing"] = _rates(res.regularizing_edges, alt, strong, nulls)
    out["M"] = res.tuning["M"]
    return out


def truth_sets(model: VarmaModel, delta: float, strong_margin: float = STRONG_MARGIN,
               n_grid: int = 256):
    mx = max_partial_coherence(model, n_grid)
    p = model.p
    alt, strong, nulls = set(), set(), set()
    for u in range(p):
        for v in range(u + 1, p):
            if mx[u, v] > delta + NONZERO_TOL:
                alt.add((u, v))
                if mx[u, v] > delta + strong_margin:
                    strong.add((u, v))
            else:
                nulls.add((u, v))
    return alt, strong, nulls


def _summarise(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return {"mean": None, "sd": None}
    arr = np.array(vals, dtype=float)
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {"mean": float(arr.mean()), "sd": sd}


@dataclass
class ExperimentReport:
    config: dict
    model_summary: dict
    aggregates: dict
    replications: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"schema_version": 1, "config": self.config, "model": self.model_summary,
                "aggregates": self.aggregates, "replications": self.replications}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        def fmt(s):
            if s["mean"] is None:
                return "NA"
            return f"{s['mean']:.3f}({s['sd']:.3f})"
        lines = [f"{'method':<14}{'alpha':>7}  {'FDR(sd)':>14}  {'Power(sd)':>14}  {'StrongPower(sd)':>16}"]
        for method, agg in self.aggregates.items():
            lines.append(f"{method:<14}{self.config['alpha']:>7.3f}  {fmt(agg['fdr']):>14}  "
                         f"{fmt(agg['power']):>14}  {fmt(agg['strong_power']):>16}")
        return "\n".join(lines) + "\n"


def run_experiment(cfg: ExperimentConfig | None = None, workers: int = 1, **kwargs
                   ) -> ExperimentReport:
    """Repeated simulate-and-test runs; identical output for any worker count."""
    cfg = cfg or ExperimentConfig(**kwargs)
    cfg.validate()
    model = build_model(cfg)
    truth = truth_sets(model, cfg.delta, cfg.strong_margin)
    jobs = [(model, cfg, s, truth) for s in replication_seeds(cfg.seed, cfg.replications)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(_one_replication, jobs))
    else:
        reps = [_one_replication(j) for j in jobs]
    methods = [m for m in ("testing", "regularizing") if m in reps[0]]
    aggregates = {}
    for m in methods:
        aggregates[m] = {key: _summarise([r[m][key] for r in reps])
                         for key in ("fdr", "power", "strong_power")}
    summary = {"p": model.p, "S1": model.s1, "S2": model.s2,
               "alternatives": len(truth[0]), "strong_alternatives": len(truth[1]),
               "ar_radius": ar_radius(model), "ma_radius": ma_radius(model)}
    config = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
    return ExperimentReport(config, summary, aggregates, reps)
