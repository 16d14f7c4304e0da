"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The desk-scale benchmark (criterion 7) takes roughly ten minutes on one core.
Set ``FASTANNEAL_FULL_SCALE=1`` to also run the full-scale benchmark
(T=500, 150 replications, 5000 iterations; several hours).
"""
import csv
import math
import os

import numpy as np
import pytest
from scipy import stats

from fastanneal._rng import make_rng
from fastanneal.cli import main
from fastanneal.coupling import coupled_pf_step, CoupledFilterPair, run_coupled_filters
from fastanneal.experiments import (CIRCLE_PRESET, LINEAR_GAUSSIAN_PRESET, compare_classical_fast,
                                    coupling_grid, fit_tv_linear, pf_check, stationary_anchor)
from fastanneal.ssm import ParticleCloud, multinomial_resample, pf_loglik, simulate

from gate import verdict

CHECKPOINTS = [100, 200, 500, 1000, 2000, 5000, 10_000, 20_000, 50_000, 100_000]
THETA0 = np.array([0.9, 18.0, 10.0, math.sqrt(10.0), 1.0])
LOWER = np.array([0.45, 9.0, 5.0, 0.316, 0.5])
UPPER = np.array([1.8, 36.0, 20.0, 36.0, 2.0])


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# 1 -------------------------------------------------------------------------

def test_criterion_1_stationary_anchor():
    parts, ok = [], True
    for beta in (5.0, 10.0, 20.0):
        r = stationary_anchor(beta, 0.1, samples=100_000, seed=101)
        good = abs(r.p_hat - r.exact) <= 4 * r.stderr
        ok &= good
        parts.append(f"beta={beta:g}: {r.p_hat:.4f} vs {r.exact:.4f} (z={r.z:+.2f}, burn-in {r.burn_in})")
    assert verdict(1, ok, "; ".join(parts))


# 2, 3 ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def comparison():
    return compare_classical_fast(CHECKPOINTS, 10_000, seed=303, epsilons=(0.05, 0.1),
                                  alpha=1 / 3, tau=1.0, beta0=1.0, block_size=10_000)


def test_criterion_2_fast_rate(comparison):
    curve, fit = comparison.fast[0], comparison.fast_fits[0]
    assert curve.epsilon == 0.05
    rho, p = stats.spearmanr(curve.ns, curve.p_hat)
    decreasing = bool(np.all(np.diff(curve.p_hat) < 0))
    in_band = -0.5 <= fit.slope <= -0.18
    ok = in_band and p < 0.01 and rho < 0
    assert verdict(2, ok, f"slope {fit.slope:.4f} (band [-0.5, -0.18]), strictly decreasing={decreasing}, "
                          f"Spearman rho={rho:.3f} p={p:.2g}; p_hat {curve.p_hat[0]:.4f} -> {curve.p_hat[-1]:.4f}")


def test_criterion_3_classical_rate(comparison):
    parts, ok = [], True
    for curve, fit in zip(comparison.classical, comparison.classical_fits):
        target = -1.0 * curve.epsilon
        good = abs(fit.slope - target) <= 0.4 * abs(target)
        rho, p = stats.spearmanr(curve.ns, curve.p_hat)
        ok &= good and p < 0.01
        parts.append(f"eps={curve.epsilon}: slope {fit.slope:.4f} vs {target:.3f} (Spearman p={p:.2g})")
    for eps, z, p in comparison.paired:
        ok &= p < 0.01
        parts.append(f"fast<classical at n={comparison.final_n}, eps={eps}: z={z:.2f} p={p:.2g}")
    assert verdict(3, ok, "; ".join(parts))


# 4 -------------------------------------------------------------------------

def test_criterion_4_particle_filter():
    rep = pf_check(LINEAR_GAUSSIAN_PRESET, T=50, Ns=(100, 1000, 10_000), seeds=20, seed=404)
    rel, sd = rep.mean_rel_error(), rep.sd()
    ok = rel[-1] < 0.02 and bool(np.all(np.diff(sd) < 0))
    assert verdict(4, ok, f"kalman {rep.kalman:.4f}; mean rel. error at N=1e4 {100 * rel[-1]:.3f}%; "
                          f"sd over seeds {', '.join(f'{v:.3f}' for v in sd)}")


# 5 -------------------------------------------------------------------------

def _resampling_unbiased():
    rng = make_rng(505, 0)
    w = rng.dirichlet(np.ones(10))
    N, draws = 10, 100_000
    idx = multinomial_resample(np.tile(w, (draws, 1)), N, rng)
    counts = np.stack([(idx == i).sum(axis=1) for i in range(w.size)], axis=1)
    mean = counts.mean(axis=0)
    se = np.sqrt(N * w * (1 - w) / draws)
    worst = float(np.max(np.abs(mean - N * w) / se))
    return worst < 4, f"resampling max |z|={worst:.2f}"


def _marginal_equivalence():
    model, T, N, Np, seeds = CIRCLE_PRESET, 10, 100, 150, 200
    _, y = simulate(model, None, T, make_rng(505, 1))
    coupled = np.array([run_coupled_filters(model, None, y, N, Np, make_rng(505, 2, s), return_logliks=True)[1]
                        for s in range(seeds)])
    alone_s = np.array([pf_loglik(model, None, y, N, make_rng(505, 3, s)) for s in range(seeds)])
    alone_l = np.array([pf_loglik(model, None, y, Np, make_rng(505, 4, s)) for s in range(seeds)])
    p_s = stats.ks_2samp(coupled[:, 0], alone_s).pvalue
    p_l = stats.ks_2samp(coupled[:, 1], alone_l).pvalue
    return min(p_s, p_l) > 0.001, f"marginal KS p-values N: {p_s:.3f}, N': {p_l:.3f}"


def _binomial_law():
    model = CIRCLE_PRESET
    rng = make_rng(505, 5)
    N, Np = 40, 60
    big = rng.random(Np)
    shared = np.arange(N) % 4 != 0
    small = big[:N].copy()
    small[~shared] = rng.random(int((~shared).sum()))
    pair = CoupledFilterPair(ParticleCloud(3, small), ParticleCloud(3, big), shared)
    th, y = model.default_theta(), 0.61
    ws, wl = model.obs_density(th, y, small, 3), model.obs_density(th, y, big, 3)
    ws, wl = ws / ws.sum(), wl / wl.sum()
    p = float(np.minimum(ws, wl[:N])[shared].sum())
    draws = np.array([coupled_pf_step(model, None, pair, y, rng)[1] for _ in range(20_000)])
    expected = stats.binom.pmf(np.arange(N + 1), N, p) * draws.size
    observed = np.bincount(draws, minlength=N + 1)
    keep = expected >= 5
    pv = stats.chisquare(np.append(observed[keep], observed[~keep].sum()),
                         np.append(expected[keep], expected[~keep].sum())).pvalue
    return pv > 0.001, f"|J_t+1| ~ Binomial({N}, {p:.3f}) chi-square p={pv:.3f}"


def test_criterion_5_resampling_and_coupling():
    results = [_resampling_unbiased(), _marginal_equivalence(), _binomial_law()]
    assert verdict(5, all(r[0] for r in results), "; ".join(r[1] for r in results))


# 6 -------------------------------------------------------------------------

def test_criterion_6_tv_linear_shape():
    model = CIRCLE_PRESET
    r_low = model.lower_bound()
    s = np.linspace(0, 1, 1001)
    r = model.obs_density(model.default_theta(), 0.0, s, 1)
    compact = bool(np.all(r >= r_low) and np.all(r <= 1 / r_low))
    rows = coupling_grid(model, T=10, Ns=(100, 200, 400), ratios=(1.1, 1.25, 1.5), reps=50, seed=606)
    fit = fit_tv_linear(rows, t=5)
    ok = compact and fit.r_squared > 0.9
    assert verdict(6, ok, f"t=5: tv_bound ~ {fit.intercept:.3f} + {fit.slope:.3f} (N'-N)/N, "
                          f"R^2={fit.r_squared:.4f}; r in [{r.min():.3f}, {r.max():.3f}], r_low={r_low:.3f}")


# 7 -------------------------------------------------------------------------

def test_criterion_7_benchmark_desk_scale(tmp_path):
    code = main(["benchmark", "--seed", "2024", "--preset", "paper-benchmark", "--desk-scale",
                 "--out-dir", str(tmp_path)])
    assert code == 0
    csvs = sorted(p.name for p in tmp_path.glob("*.csv"))
    est = np.array([[float(r[k]) for k in ("a", "b", "gamma", "sigma_v", "sigma_w")]
                    for r in _rows(tmp_path / "study.csv")])
    mean = est.mean(axis=0)
    rel = np.abs(mean - THETA0) / THETA0
    inside = bool(np.all((est >= LOWER) & (est <= UPPER)))
    ok = inside and bool(np.all(rel[[0, 2, 4]] < 0.25)) and len(csvs) == 3 and est.shape[0] == 20
    assert verdict(7, ok, "desk means " + ", ".join(f"{m:.3f}" for m in mean)
                   + "; rel. error a/gamma/sigma_w " + "/".join(f"{100 * v:.1f}%" for v in rel[[0, 2, 4]])
                   + f"; all inside box={inside}; CSVs {csvs}")


@pytest.mark.skipif(os.environ.get("FASTANNEAL_FULL_SCALE") != "1",
                    reason="full-scale benchmark takes hours; set FASTANNEAL_FULL_SCALE=1")
def test_criterion_7_benchmark_full_scale(tmp_path):
    code = main(["benchmark", "--seed", "2024", "--preset", "paper-benchmark", "--out-dir", str(tmp_path)])
    assert code == 0
    est = np.array([[float(r[k]) for k in ("a", "b", "gamma", "sigma_v", "sigma_w")]
                    for r in _rows(tmp_path / "study.csv")])
    paper = np.array([0.85, 19.1, 10.1, 3.4, 1.01])
    mean, sd = est.mean(axis=0), est.std(axis=0, ddof=1)
    ok = bool(np.all(np.abs(mean - paper) <= 2 * sd))
    print(f"criterion 7 (full scale): {'PASS' if ok else 'FAIL'}  means {mean}, sds {sd}")
    assert ok


# 8 -------------------------------------------------------------------------

SMALL_RUNS = {
    "anneal": ["anneal", "--preset", "appendix-a-example", "--set", "annealer.iterations=500"],
    "anneal-noisy": ["anneal", "--preset", "paper-benchmark", "--set", "benchmark.T=15",
                     "--set", "annealer.iterations=40"],
    "rate": ["rate", "--preset", "fast-rate-13", "--set", "rate.reps=600", "--set", "rate.block_size=150",
             "--set", "rate.checkpoints=[10, 30, 100, 300]", "--set", "rate.epsilons=[0.05, 0.1]"],
    "rate-compare": ["rate", "--preset", "fast-rate-13", "--set", "rate.reps=400", "--set", "rate.block_size=100",
                     "--set", "rate.compare=true", "--set", "rate.checkpoints=[10, 30, 100, 300]"],
    "benchmark": ["benchmark", "--preset", "paper-benchmark", "--set", "benchmark.T=15", "--set",
                  "benchmark.reps=6", "--set", "benchmark.block_size=2", "--set", "annealer.iterations=25"],
    "couple": ["couple", "--preset", "compact-coupling", "--set", "couple.reps=6", "--set", "couple.T=5",
               "--set", "couple.kernel_reps=20000"],
    "pf-check": ["pf-check", "--preset", "linear-gaussian", "--set", "pf.seeds=6", "--set", "pf.Ns=[100, 1000]"],
}


def test_criterion_8_determinism(tmp_path):
    bad = []
    for name, args in SMALL_RUNS.items():
        outputs = []
        for run_id, threads in enumerate((1, 1, 3)):
            d = tmp_path / f"{name}-{run_id}"
            assert main(args + ["--seed", "808", "--threads", str(threads), "--out-dir", str(d)]) == 0
            outputs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
        if not (outputs[0] == outputs[1] == outputs[2]) or not any(k.endswith(".csv") for k in outputs[0]):
            bad.append(name)
    ok = not bad
    assert verdict(8, ok, f"{len(SMALL_RUNS)} command configurations re-run with --threads 1, 1, 3: "
                          + ("byte-identical" if ok else f"differences in {bad}"))
