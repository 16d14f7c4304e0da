"""Experiment drivers: convergence-rate measurement, the exactly solvable
one-dimensional example, the benchmark state-space study, particle-filter
checks and coupling grids.

Replications are grouped into fixed-size blocks; block ``k`` of a
sub-experiment with tag ``g`` draws from stream ``make_rng(seed, g, k)``.
Outputs therefore depend on ``(config, seed)`` only, whatever the thread
count.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from ._rng import blocks, make_rng, map_ordered
from .acceptance import Classical, Polynomial
from .annealer import AnnealerConfig, Objective, run_batch
from .coupling import run_coupled_filters
from .domain import BoxDomain, GaussianRandomWalk, UniformIndependence, default_step_scale
from .schedules import (AffinePrecision, ConstantCooling, LogarithmicCooling,
                        PowerCooling)
from .ssm import (PAPER_THETA0, BenchmarkModel, BenchmarkParams, CircleModel,
                  LinearGaussianModel, kalman_loglik, pf_loglik, simulate)

# stream tags
_TAG_DATA, _TAG_CHAINS, _TAG_CELLS = 0, 1, 2


# ---------------------------------------------------------------------------
# the exactly solvable example: Theta = [-1/2, 1/2], psi(x) = -|x|

APPA_PSI_MAX = 0.0
APPA_OSC = 0.5


def appendix_a_domain() -> BoxDomain:
    return BoxDomain([-0.5], [0.5])


def _neg_abs(points):
    return -np.abs(points).sum(axis=-1)


def appendix_a_objective() -> Objective:
    return Objective.exact(_neg_abs, vectorized=True)


def appendix_a_config(scheme: str = "fast", iterations: int = 1000, seed: int = 0, *,
                      alpha: float = 1 / 3, tau: float = 1.0, beta0: float = 1.0,
                      beta: Optional[float] = None, record_every: int = 1) -> AnnealerConfig:
    """Annealer configuration for the example with the uniform independence kernel.

    ``scheme`` is ``"fast"`` (polynomial acceptance, power cooling),
    ``"classical"`` (exponential acceptance, logarithmic cooling) or
    ``"homogeneous"`` (exponential acceptance at the fixed ``beta``).
    """
    if scheme == "fast":
        acc, cool = Polynomial(tau), PowerCooling(alpha)
    elif scheme == "classical":
        acc, cool = Classical(), LogarithmicCooling(beta0)
    elif scheme == "homogeneous":
        acc, cool = Classical(), ConstantCooling(beta)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return AnnealerConfig(acc, cool, UniformIndependence(), appendix_a_domain(),
                          iterations=iterations, seed=seed, record_every=record_every)


def exact_stationary_appA(beta: float, epsilon: float) -> float:
    """Stationary mass of ``{|x| >= epsilon}`` for the classical kernel at ``beta``."""
    if not 0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 1/2)")
    if not beta > 0:
        raise ValueError("beta must be positive")
    return (math.exp(-beta * epsilon) - math.exp(-beta / 2)) / (1.0 - math.exp(-beta / 2))


@dataclass
class AnchorResult:
    beta: float
    epsilon: float
    p_hat: float
    stderr: float
    exact: float
    samples: int
    burn_in: int

    @property
    def z(self) -> float:
        return (self.p_hat - self.exact) / self.stderr


def anchor_burn_in(beta: float, osc: float = APPA_OSC, eps_k: float = 1.0, cap: int = 5000) -> int:
    """``10 g(beta osc) / eps_K`` steps, capped."""
    return int(min(math.ceil(10.0 * math.exp(beta * osc) / eps_k), cap))


def stationary_anchor(beta: float, epsilon: float, samples: int = 100_000, seed: int = 0,
                      burn_in: Optional[int] = None) -> AnchorResult:
    """Run ``samples`` independent homogeneous classical chains on the example
    for ``burn_in`` steps and estimate the stationary mass of ``{|x| >= epsilon}``."""
    burn = anchor_burn_in(beta) if burn_in is None else int(burn_in)
    cfg = appendix_a_config("homogeneous", iterations=burn, seed=seed, beta=beta)
    res = run_batch(cfg, appendix_a_objective(), samples, make_rng(seed))
    hit = (-np.abs(res.final_theta[:, 0]) <= APPA_PSI_MAX - epsilon)
    p = float(hit.mean())
    exact = exact_stationary_appA(beta, epsilon)
    # the binomial stderr is evaluated at the exact value so p_hat = 0 or 1 is not degenerate
    se = math.sqrt(exact * (1 - exact) / samples)
    return AnchorResult(beta, epsilon, p, se, exact, samples, burn)


# ---------------------------------------------------------------------------
# exceedance curves and rate fits


@dataclass
class ExceedanceCurve:
    epsilon: float
    checkpoints: list = field(default_factory=list)  # (n, p_hat, stderr, reps)

    @property
    def ns(self) -> np.ndarray:
        return np.array([c[0] for c in self.checkpoints])

    @property
    def p_hat(self) -> np.ndarray:
        return np.array([c[1] for c in self.checkpoints])

    @property
    def stderr(self) -> np.ndarray:
        return np.array([c[2] for c in self.checkpoints])


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    n_range: tuple


class InsufficientDataError(ValueError):
    pass


def fit_loglog_slope(curve: ExceedanceCurve, n_min: Optional[float] = None,
                     n_max: Optional[float] = None) -> RateFit:
    """Least squares of ``log p_hat`` on ``log n`` over positive checkpoints in range."""
    ns, ps = curve.ns.astype(float), curve.p_hat
    keep = ps > 0
    if n_min is not None:
        keep &= ns >= n_min
    if n_max is not None:
        keep &= ns <= n_max
    if keep.sum() < 4:
        raise InsufficientDataError(
            f"need >= 4 checkpoints with p_hat > 0 in range, got {int(keep.sum())}")
    x, y = np.log(ns[keep]), np.log(ps[keep])
    res = stats.linregress(x, y)
    return RateFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2),
                   (int(ns[keep].min()), int(ns[keep].max())))


def _block_snapshots(cfg, objective, reps, checkpoints, seed, block_size, threads, tag=_TAG_CHAINS):
    cks = sorted(set(int(c) for c in checkpoints))
    cfg = replace(cfg, iterations=max(cks))

    def one(block):
        k, (start, stop) = block
        return run_batch(cfg, objective, stop - start, make_rng(seed, tag, k), checkpoints=cks).snapshots

    parts = map_ordered(one, enumerate(blocks(reps, block_size)), threads)
    return {n: np.concatenate([p[n] for p in parts]) for n in cks}


def _curve_from_snapshots(snaps, exact_psi, psi_max, epsilon):
    curve = ExceedanceCurve(float(epsilon))
    for n in sorted(snaps):
        hit = exact_psi(snaps[n]) <= psi_max - epsilon
        p = float(hit.mean())
        r = hit.size
        curve.checkpoints.append((n, p, math.sqrt(p * (1 - p) / r), r))
    return curve


def _exact_psi_for(objective: Objective, exact_psi):
    if exact_psi is not None:
        return exact_psi
    if objective.noisy:
        raise ValueError("a noisy objective needs exact_psi to evaluate exceedance")
    return objective.evaluate


def exceedance_curves(cfg: AnnealerConfig, objective: Objective, psi_max: float,
                      epsilons: Sequence[float], checkpoint_ns: Sequence[int], reps: int,
                      seed: int, exact_psi=None, block_size: int = 2500, threads: int = 1):
    """One set of chains, exceedance curves for several ``epsilon``."""
    if reps < 100:
        raise ValueError(f"reps must be >= 100, got {reps}")
    if list(checkpoint_ns) != sorted(checkpoint_ns):
        raise ValueError("checkpoint_ns must be sorted")
    psi = _exact_psi_for(objective, exact_psi)
    snaps = _block_snapshots(cfg, objective, reps, checkpoint_ns, seed, block_size, threads)
    return [_curve_from_snapshots(snaps, psi, psi_max, e) for e in epsilons]


def exceedance_curve(cfg: AnnealerConfig, objective: Objective, psi_max: float, epsilon: float,
                     checkpoint_ns: Sequence[int], reps: int, seed: int, exact_psi=None,
                     block_size: int = 2500, threads: int = 1) -> ExceedanceCurve:
    """Fraction of ``reps`` chains with ``psi(theta_n) <= psi_max - epsilon`` at each checkpoint.

    Exceedance always uses the exact ``psi``; for a noisy objective pass it as
    ``exact_psi`` (a vectorized callable on ``(m, d)`` arrays).
    """
    return exceedance_curves(cfg, objective, psi_max, [epsilon], checkpoint_ns, reps, seed,
                             exact_psi, block_size, threads)[0]


def paired_one_sided(better, worse):
    """Paired test that ``P(better) < P(worse)`` from per-replication 0/1 outcomes.

    Returns ``(z, p_value)`` for the mean of ``worse - better``.
    """
    d = np.asarray(worse, dtype=float) - np.asarray(better, dtype=float)
    sd = d.std(ddof=1)
    if sd == 0:
        return (math.inf, 0.0) if d.mean() > 0 else (0.0, 1.0)
    z = d.mean() / (sd / math.sqrt(d.size))
    return float(z), float(stats.norm.sf(z))


@dataclass
class Comparison:
    fast: list
    classical: list
    fast_fits: list
    classical_fits: list
    final_n: int
    paired: list  # (epsilon, z, p_value) fast-beats-classical at final_n


def compare_classical_fast(checkpoint_ns: Sequence[int], reps: int, seed: int,
                           epsilons: Sequence[float] = (0.05,), *, alpha: float = 1 / 3,
                           tau: float = 1.0, beta0: float = 1.0, block_size: int = 2500,
                           threads: int = 1, fit_min=None, fit_max=None) -> Comparison:
    """Both schemes on the example with identical per-block streams (hence identical ``theta_0``)."""
    obj = appendix_a_objective()
    out = {}
    for scheme in ("fast", "classical"):
        cfg = appendix_a_config(scheme, seed=seed, alpha=alpha, tau=tau, beta0=beta0)
        out[scheme] = _block_snapshots(cfg, obj, reps, checkpoint_ns, seed, block_size, threads)
    curves = {s: [_curve_from_snapshots(out[s], _neg_abs, APPA_PSI_MAX, e) for e in epsilons]
              for s in out}
    fits = {s: [fit_loglog_slope(c, fit_min, fit_max) for c in curves[s]] for s in curves}
    last = max(checkpoint_ns)
    paired = []
    for e in epsilons:
        hf = _neg_abs(out["fast"][last]) <= APPA_PSI_MAX - e
        hc = _neg_abs(out["classical"][last]) <= APPA_PSI_MAX - e
        z, p = paired_one_sided(hf, hc)
        paired.append((e, z, p))
    return Comparison(curves["fast"], curves["classical"], fits["fast"], fits["classical"], last, paired)


def write_curves_csv(path, curves: Sequence[ExceedanceCurve], scheme: Optional[str] = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["epsilon", "n", "p_hat", "stderr", "reps"]
        w.writerow((["scheme"] if scheme else []) + head)
        for c in curves:
            for n, p, se, r in c.checkpoints:
                w.writerow(([scheme] if scheme else []) + [repr(c.epsilon), n, repr(p), repr(se), r])


def write_fits_csv(path, rows) -> None:
    """``rows``: iterable of ``(scheme, epsilon, RateFit)``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "epsilon", "slope", "intercept", "r_squared", "n_min", "n_max"])
        for scheme, eps, f in rows:
            w.writerow([scheme, repr(float(eps)), repr(f.slope), repr(f.intercept),
                        repr(f.r_squared), f.n_range[0], f.n_range[1]])


# ---------------------------------------------------------------------------
# benchmark state-space study

BENCHMARK_LOWER = (0.45, 9.0, 5.0, 0.316, 0.5)
BENCHMARK_UPPER = (1.8, 36.0, 20.0, 36.0, 2.0)
BENCHMARK_LOG_SCALE = (False, False, False, True, True)


@dataclass
class BenchmarkStudy:
    T: int = 500
    reps: int = 150
    iterations: int = 5000
    theta0: BenchmarkParams = PAPER_THETA0
    beta_scale: float = 10.0
    alpha: float = 0.25
    tau: float = 1.0
    n_floor: int = 20
    n1: float = 1.0
    lower: tuple = BENCHMARK_LOWER
    upper: tuple = BENCHMARK_UPPER
    log_scale: tuple = BENCHMARK_LOG_SCALE
    block_size: int = 150

    @classmethod
    def desk_scale(cls, **kw) -> "BenchmarkStudy":
        base = dict(T=100, reps=20, iterations=2000, block_size=20)
        base.update(kw)
        return cls(**base)

    def domain(self) -> BoxDomain:
        return BoxDomain(self.lower, self.upper, self.log_scale)

    def annealer_config(self, seed: int) -> AnnealerConfig:
        dom = self.domain()
        return AnnealerConfig(
            acceptance=Polynomial(self.tau),
            cooling=PowerCooling(self.alpha, self.beta_scale),
            kernel=GaussianRandomWalk(default_step_scale(dom)),
            domain=dom, iterations=self.iterations, seed=seed,
            precision=AffinePrecision(0.0, self.n1, floor=self.n_floor))


@dataclass
class BenchmarkResult:
    observations: np.ndarray
    estimates: np.ndarray  # (reps, 5)
    mean: np.ndarray
    std: np.ndarray
    names: tuple = BenchmarkModel.param_names

    def normplot_rows(self):
        """``(coordinate, rank, estimate, normal_quantile)`` with Blom plotting positions."""
        n = self.estimates.shape[0]
        q = stats.norm.ppf((np.arange(1, n + 1) - 0.375) / (n + 0.25))
        rows = []
        for k, name in enumerate(self.names):
            for i, v in enumerate(np.sort(self.estimates[:, k])):
                rows.append((name, i + 1, float(v), float(q[i])))
        return rows

    def write_csvs(self, out_dir) -> list:
        import os
        paths = [os.path.join(out_dir, f) for f in ("study.csv", "summary.csv", "normplot.csv")]
        with open(paths[0], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rep", *self.names])
            for i, row in enumerate(self.estimates):
                w.writerow([i, *(repr(float(v)) for v in row)])
        with open(paths[1], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["coordinate", "mean", "stderr"])
            for name, m, s in zip(self.names, self.mean, self.std):
                w.writerow([name, repr(float(m)), repr(float(s))])
        with open(paths[2], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["coordinate", "rank", "estimate", "normal_quantile"])
            for name, r, v, q in self.normplot_rows():
                w.writerow([name, r, repr(v), repr(q)])
        return paths


def benchmark_objective(observations, model: Optional[BenchmarkModel] = None) -> Objective:
    model = BenchmarkModel() if model is None else model
    obs = np.asarray(observations, dtype=float)

    def loglik(points, N, rng):
        return pf_loglik(model, points, obs, N, rng)

    return Objective.approximate(loglik, vectorized=True)


def run_benchmark_study(study: BenchmarkStudy, seed: int, threads: int = 1,
                        progress=None, cfg: Optional[AnnealerConfig] = None) -> BenchmarkResult:
    """Simulate one dataset from ``theta0`` and anneal the particle-filter
    log-likelihood in ``study.reps`` independent replications.

    ``cfg`` replaces the annealer settings derived from ``study``.
    ``progress(n, outcome)`` is forwarded to the annealer as a step hook.
    """
    model = BenchmarkModel()
    _, obs = simulate(model, study.theta0.as_array(), study.T, make_rng(seed, _TAG_DATA))
    cfg = study.annealer_config(seed) if cfg is None else cfg
    if cfg.domain.dim != 5:
        raise ValueError("the benchmark domain must be 5-dimensional")
    objective = benchmark_objective(obs, model)

    def one(block):
        k, (start, stop) = block
        return run_batch(cfg, objective, stop - start, make_rng(seed, _TAG_CHAINS, k),
                         on_step=progress).final_theta

    finals = np.concatenate(map_ordered(one, enumerate(blocks(study.reps, study.block_size)), threads))
    std = finals.std(axis=0, ddof=1) if finals.shape[0] > 1 else np.zeros(finals.shape[1])
    return BenchmarkResult(obs, finals, finals.mean(axis=0), std)


# ---------------------------------------------------------------------------
# particle filter against the Kalman oracle

LINEAR_GAUSSIAN_PRESET = LinearGaussianModel(phi=0.8, sigma_v=1.0, c=1.0, sigma_w=1.0, m0=0.0, s0=1.0)


@dataclass
class PFCheck:
    kalman: float
    Ns: list
    logliks: np.ndarray  # (len(Ns), seeds)
    observations: np.ndarray

    def rel_errors(self) -> np.ndarray:
        return np.abs(self.logliks - self.kalman) / abs(self.kalman)

    def mean_rel_error(self) -> np.ndarray:
        return self.rel_errors().mean(axis=1)

    def sd(self) -> np.ndarray:
        return self.logliks.std(axis=1, ddof=1)


def pf_check(model: LinearGaussianModel = LINEAR_GAUSSIAN_PRESET, T: int = 50,
             Ns: Sequence[int] = (100, 1000, 10000), seeds: int = 20, seed: int = 0,
             threads: int = 1) -> PFCheck:
    """Particle-filter log-likelihoods across seeds and particle counts, against Kalman."""
    _, obs = simulate(model, None, T, make_rng(seed, _TAG_DATA))
    ref = kalman_loglik(model, obs)

    def one(i):
        rng = make_rng(seed, _TAG_CHAINS, i)
        return [pf_loglik(model, None, obs, int(N), rng) for N in Ns]

    vals = np.array(map_ordered(one, range(seeds), threads)).T
    return PFCheck(ref, [int(n) for n in Ns], vals, obs)


# ---------------------------------------------------------------------------
# coupled particle filter grids

CIRCLE_PRESET = CircleModel(drift=0.1, sigma=0.1, kappa=0.5)


def _derived_seed(seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=(_TAG_CELLS, *key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def coupling_grid(model=CIRCLE_PRESET, T: int = 10, Ns: Sequence[int] = (100, 200, 400),
                  ratios: Sequence[float] = (1.1, 1.25, 1.5), reps: int = 50, seed: int = 0,
                  threads: int = 1, observations=None):
    """Coupled filter runs over an ``(N, N'/N)`` grid.

    Returns rows ``(t, N, Nprime, seed, shared_count, tv_bound)``; ``seed`` is
    the derived per-replication seed, reproducible on its own via ``make_rng``.
    """
    obs = (simulate(model, None, T, make_rng(seed, _TAG_DATA))[1]
           if observations is None else np.asarray(observations, dtype=float))
    cells = [(N, int(round(N * r))) for N in Ns for r in ratios]
    jobs = [(c, r) for c in range(len(cells)) for r in range(reps)]

    def one(job):
        c, r = job
        N, Np = cells[c]
        s = _derived_seed(seed, c, r)
        recs = run_coupled_filters(model, None, obs, N, Np, make_rng(s))
        return [(rec.t, N, Np, s, rec.shared_count, rec.tv_bound) for rec in recs]

    rows = []
    for part in map_ordered(one, jobs, threads):
        rows.extend(part)
    return rows


@dataclass
class LinearFit:
    slope: float
    intercept: float
    r_squared: float
    x: np.ndarray
    y: np.ndarray


def fit_tv_linear(rows, t: int) -> LinearFit:
    """Regress the replication-averaged ``tv_bound`` at time ``t`` on ``(N'-N)/N``."""
    cells = {}
    for tt, N, Np, _, _, tv in rows:
        if tt == t:
            cells.setdefault((N, Np), []).append(tv)
    keys = sorted(cells)
    x = np.array([(Np - N) / N for N, Np in keys])
    y = np.array([np.mean(cells[k]) for k in keys])
    res = stats.linregress(x, y)
    return LinearFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2), x, y)


def write_coupling_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "N", "Nprime", "seed", "shared_count", "tv_bound"])
        for t, N, Np, s, sc, tv in rows:
            w.writerow([t, N, Np, s, sc, repr(float(tv))])
