"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary; running this file as a script prints the same lines directly.
"""
import json
import math
import time

import numpy as np
import pytest
from scipy import stats

import oracles
from conftest import ACCEPTANCE_LINES
from hdspectral.cli import main as cli_main
from hdspectral.coherence import beta_debiased, debias_accumulator, debiased_matrix
from hdspectral.inverse import clime_solve, glasso_solve
from hdspectral.pipeline import analyze
from hdspectral.simulation import (exact_dft_variance, run_experiment, simulate_path,
                                   sparse_var1, true_partial_coherence_matrix,
                                   true_spectral_density)
from hdspectral.spectral import BARTLETT, lag_window_estimate, smoothed_periodogram
from hdspectral.testing import g_tail, single_test, single_test_quantile, vhat_inverse


def record(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def hermitian_pd(rng, p):
    a = rng.standard_normal((p, p)) + 1j * rng.standard_normal((p, p))
    return a @ a.conj().T + p * np.eye(p)


# ---------------------------------------------------------------- 1


def test_oracle_equivalence():
    start = time.perf_counter()
    worst = worst_rel = 0.0
    where = None
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(8, 17))
        p = int(rng.integers(2, 4))
        M = int(rng.integers(1, min(5, n // 2 - 1) + 1))
        kernel = ["bartlett_modified", "uniform"][seed % 2]
        x = rng.standard_normal((n, p))
        x -= x.mean(axis=0)
        w = float(rng.uniform(0, 2 * math.pi))
        lw = lag_window_estimate(x, kernel, M, [w]).matrices[0]
        sp = smoothed_periodogram(x, kernel, M, w)
        theta = hermitian_pd(rng, p)
        u, v = rng.choice(p, 2, replace=False)
        b = beta_debiased(x, theta, kernel, M, int(u), int(v), w)
        dev = abs(b - oracles.beta_debiased(x, theta, kernel, M, int(u), int(v), w))
        worst_rel = max(worst_rel, dev / max(1.0, abs(b)))
        if dev > worst:
            worst, where = dev, (seed, n, p, M, abs(b))
        worst = max(worst, np.abs(lw - oracles.lag_window(x, kernel, M, w)).max(),
                    np.abs(sp - oracles.smoothed_periodogram(x, kernel, M, w)).max())
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 10.0
    record(1, ok, f"max abs deviation {worst:.2e} (tol 1e-12), max relative {worst_rel:.1e}, "
                  f"worst beta case seed/n/p/M/|beta| {where}, {elapsed:.1f}s (budget 10s)")
    assert ok


# ---------------------------------------------------------------- 2


def test_structural_invariants():
    rng = np.random.default_rng(2002)
    herm = psd = conj = gap = 0.0
    instances = 0
    for _ in range(200):
        n = int(rng.integers(20, 200))
        p = int(rng.integers(2, 7))
        M = int(rng.integers(1, n // 4 + 1))
        x = rng.standard_normal((n, p)) * rng.uniform(0.1, 10, p)
        x -= x.mean(axis=0)
        w = float(rng.uniform(0, math.pi))
        f = lag_window_estimate(x, BARTLETT, M, [w]).matrices[0]
        scale = np.abs(f).max()
        herm = max(herm, np.abs(f - f.conj().T).max() / scale)
        psd = max(psd, -np.linalg.eigvalsh(f).min() / np.diag(f).real.max())
        lam = float(rng.uniform(0.01, 0.3)) * np.diag(f).real.max()
        theta = glasso_solve(f, lam).matrix
        rho, _, _ = debiased_matrix(debias_accumulator(x, BARTLETT, M, w), theta)
        conj = max(conj, np.abs(rho - rho.conj().T).max())
        s = hermitian_pd(rng, min(p, 4))
        lam_c = float(rng.uniform(0.02, 0.4))
        gap = max(gap, clime_solve(s, lam_c).feasibility_gap - lam_c)
        instances += 1
    ok = herm <= 1e-10 and psd <= 1e-8 and conj == 0.0 and gap <= 1e-7
    record(2, ok, f"{instances} instances: hermitian {herm:.1e}, -lambda_min/scale {psd:.1e}, "
                  f"conjugation {conj:.1e}, CLIME gap-lambda {gap:.1e}")
    assert ok


# ---------------------------------------------------------------- 3


def test_quantile_identity():
    rng = np.random.default_rng(3003)
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(1, 200))
        alpha = float(rng.uniform(0.001, 0.5))
        worst = max(worst, abs(float(g_tail(single_test_quantile(d, alpha), d)) - alpha))
    q = single_test_quantile(1, 0.05)
    ok = worst <= 1e-12 and abs(q - 5.99146) <= 1e-4
    record(3, ok, f"max |G_d(q) - alpha| {worst:.1e} (tol 1e-12), q(1, 0.05) = {q:.5f}")
    assert ok


# ---------------------------------------------------------------- 4


@pytest.mark.slow
def test_size_white_noise():
    p, n, reps = 4, 2048, 500
    seqs = np.random.SeedSequence(4004).spawn(reps)
    hits = {0.05: np.zeros((p, p)), 0.1: np.zeros((p, p))}
    start = time.perf_counter()
    for seq in seqs:
        x = np.random.default_rng(seq).standard_normal((n, p))
        res = analyze(x)
        for s in res.test.statistics:
            for a in hits:
                hits[a][s.u, s.v] += single_test(s, res.grid.d, a)
    elapsed = time.perf_counter() - start
    iu = np.triu_indices(p, 1)
    worst = {a: float((h[iu] / reps).max()) for a, h in hits.items()}
    ok = all(worst[a] <= a + 0.03 for a in worst) and elapsed < 600
    record(4, ok, f"max per-pair size {worst[0.05]:.3f} at 0.05, {worst[0.1]:.3f} at 0.1 "
                  f"(limit alpha+0.03), {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- 5


@pytest.mark.slow
def test_normality_var1():
    p, n, M, reps = 10, 4096, 8, 200
    model = sparse_var1(p, 0.1, 11)
    seqs = np.random.SeedSequence(5005).spawn(reps)
    start = time.perf_counter()
    draws = []
    for seq in seqs:
        res = analyze(simulate_path(model, n, seq), bandwidth=M)
        draws.append(res.rho_de)
    elapsed = time.perf_counter() - start
    draws = np.array(draws)
    n_eff = res.n
    passed = cells = 0
    for l, w in enumerate(res.grid.frequencies):
        truth = true_partial_coherence_matrix(model, w)
        for u in range(p):
            for v in range(u + 1, p):
                V = np.linalg.inv(vhat_inverse(truth[u, v], BARTLETT.c_k2))
                err = math.sqrt(n_eff / M) * (draws[:, l, u, v] - truth[u, v])
                re = err.real / math.sqrt(V[0, 0])
                im = err.imag / math.sqrt(V[1, 1])
                ok_cell = (stats.kstest(re, "norm").pvalue >= 0.01
                           and stats.kstest(im, "norm").pvalue >= 0.01)
                passed += ok_cell
                cells += 1
    frac = passed / cells
    ok = frac >= 0.95 and elapsed < 1200
    record(5, ok, f"KS pass fraction {frac:.3f} over {cells} cells (need 0.95), {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- 6


@pytest.mark.slow
def test_fdr_sparse_var1():
    start = time.perf_counter()
    rep = run_experiment(kind="var1", p=20, n=2048, density=0.05, alpha=0.1, delta=0.0,
                         replications=200, seed=3, method="both")
    elapsed = time.perf_counter() - start
    t, r = rep.aggregates["testing"], rep.aggregates["regularizing"]
    fdr, strong = t["fdr"]["mean"], t["strong_power"]["mean"]
    reg_dominates = (r["power"]["mean"] > t["power"]["mean"]
                     and r["fdr"]["mean"] <= fdr + 0.05)
    ok = fdr <= 0.15 and strong is not None and strong >= 0.5 and not reg_dominates \
        and elapsed < 1800
    record(6, ok, f"S1 {rep.model_summary['S1']:.3f}; testing FDR {fdr:.3f} (max 0.15), "
                  f"strong power {strong:.3f} (min 0.5), power {t['power']['mean']:.3f}; "
                  f"regularizing FDR {r['fdr']['mean']:.3f}, power {r['power']['mean']:.3f}; "
                  f"{elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- 7


def test_dft_variance_rate():
    model = sparse_var1(6, 0.2, 7)
    freqs = np.linspace(0.1, math.pi - 0.1, 16)
    errs = []
    for n in (64, 128, 256):
        errs.append(max(np.abs(exact_dft_variance(model, n, w)
                               - true_spectral_density(model, w)).max() for w in freqs))
    factors = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = all(1.5 <= f <= 2.5 for f in factors)
    record(7, ok, f"errors {', '.join(f'{e:.2e}' for e in errs)}; "
                  f"factors {factors[0]:.3f}, {factors[1]:.3f} (need [1.5, 2.5])")
    assert ok


# ---------------------------------------------------------------- 8


def test_cli_determinism(tmp_path):
    model = sparse_var1(6, 0.2, 8)
    x = simulate_path(model, 1024, 9).values
    data = tmp_path / "series.csv"
    np.savetxt(data, x, delimiter=",", header=",".join(f"s{i}" for i in range(6)), comments="")
    outputs = {}
    for label, workers in (("analyze-a", 1), ("analyze-b", 1), ("analyze-c", 4)):
        out = tmp_path / f"{label}.json"
        code = cli_main(["analyze", "--input", str(data), "--seed", "5", "--output", str(out),
                         "--dot", str(tmp_path / f"{label}.dot"), "--workers", str(workers)])
        assert code == 0
        outputs[label] = out.read_bytes() + (tmp_path / f"{label}.dot").read_bytes()
    for label, workers in (("simulate-a", 1), ("simulate-b", 1), ("simulate-c", 3)):
        out = tmp_path / f"{label}.json"
        code = cli_main(["simulate", "--kind", "varma11", "--p", "8", "--n", "256", "--reps", "3",
                         "--density", "0.1", "--method", "both", "--seed", "5",
                         "--output", str(out), "--table", str(tmp_path / f"{label}.txt"),
                         "--workers", str(workers)])
        assert code == 0
        outputs[label] = out.read_bytes() + (tmp_path / f"{label}.txt").read_bytes()
    same_analyze = outputs["analyze-a"] == outputs["analyze-b"] == outputs["analyze-c"]
    same_sim = outputs["simulate-a"] == outputs["simulate-b"] == outputs["simulate-c"]
    json.loads((tmp_path / "analyze-a.json").read_text())
    ok = same_analyze and same_sim
    record(8, ok, f"analyze identical across runs and 1/4 workers: {same_analyze}; "
                  f"simulate identical across runs and 1/3 workers: {same_sim}")
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
