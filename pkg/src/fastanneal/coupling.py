"""Couplings of approximations at two precisions ``N <= N'``.

Used to bound total-variation distances empirically: two objects built on
shared randomness differ with a probability that upper-bounds the distance
between their laws.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .acceptance import AcceptanceFunction
from .annealer import Objective
from .domain import BoxDomain, ProposalKernel
from .ssm import (DegenerateWeightsError, ParticleCloud, StateSpaceModel,
                  multinomial_resample, normalize_log_weights)


def _check_sizes(N, Nprime):
    if N < 1 or Nprime < N:
        raise ValueError(f"need 1 <= N <= Nprime, got N={N}, Nprime={Nprime}")


class SampleMeanObjective:
    """``psi^N(x) = (1/N) sum_i h(xi_i; x)`` for i.i.d. ``xi_i``.

    ``h_sampler(points, size, rng)`` returns an ``(m, size)`` array of
    summands for a batch of ``m`` points.  The coupled evaluation reuses the
    first ``N`` of the ``N'`` summands.
    """

    def __init__(self, h_sampler: Callable):
        self.h_sampler = h_sampler

    def __call__(self, points, N, rng):
        return self.h_sampler(np.atleast_2d(points), int(N), rng).mean(axis=-1)

    def coupled_eval(self, points, N, Nprime, rng):
        h = self.h_sampler(np.atleast_2d(points), int(Nprime), rng)
        return h[:, :N].mean(axis=-1), h.mean(axis=-1)

    @property
    def objective(self) -> Objective:
        return Objective.approximate(self, vectorized=True)


def coupled_mc_means(h_sampler, x, N: int, Nprime: int, rng):
    """Coupled sample means at one point; ``psi^N`` reuses the first ``N`` summands."""
    _check_sizes(N, Nprime)
    a, b = SampleMeanObjective(h_sampler).coupled_eval(np.atleast_2d(x), N, Nprime, rng)
    return float(a[0]), float(b[0])


@dataclass
class CoupledKernelOutcome:
    x: np.ndarray
    z: np.ndarray
    accept_N: np.ndarray
    accept_Nprime: np.ndarray

    @property
    def disagree(self):
        return self.accept_N != self.accept_Nprime


def _coupled_values(objective, points, N, Nprime, rng):
    if isinstance(objective, SampleMeanObjective):
        return objective.coupled_eval(points, N, Nprime, rng)
    inner = getattr(objective, "fn", None)
    if isinstance(inner, SampleMeanObjective):
        return inner.coupled_eval(points, N, Nprime, rng)
    if isinstance(objective, Objective) and not objective.noisy:
        v = objective.evaluate(points)
        return v, v
    # no coupling available: independent approximations
    return objective.evaluate(points, N, rng), objective.evaluate(points, Nprime, rng)


def coupled_kernel_samples(mu_sampler, kernel: ProposalKernel, domain: BoxDomain,
                           fn: AcceptanceFunction, beta: float, objective, N: int,
                           Nprime: int, rng, reps: int = 1, n: int = 1) -> CoupledKernelOutcome:
    """``reps`` coupled draws from ``mu K^N_beta`` and ``mu K^{N'}_beta``.

    Each draw shares ``x ~ mu``, ``z ~ K(x, .)`` and the uniform ``U``; the
    two chains differ only through their accept decisions.
    """
    _check_sizes(N, Nprime)
    x = np.atleast_2d(mu_sampler(rng, reps))
    z = kernel.propose(domain, x, n, rng)
    vN, vNp = _coupled_values(objective, np.concatenate([x, z]), N, Nprime, rng)
    m = x.shape[0]
    u = rng.random(m)
    aN = u <= fn.f(beta * np.maximum(vN[:m] - vN[m:], 0.0))
    aNp = u <= fn.f(beta * np.maximum(vNp[:m] - vNp[m:], 0.0))
    return CoupledKernelOutcome(x, z, aN, aNp)


def coupled_kernel_sample(mu_sampler, kernel, domain, fn, beta, objective, N, Nprime, rng, n: int = 1):
    out = coupled_kernel_samples(mu_sampler, kernel, domain, fn, beta, objective, N, Nprime, rng, 1, n)
    return CoupledKernelOutcome(out.x[0], out.z[0], bool(out.accept_N[0]), bool(out.accept_Nprime[0]))


def estimate_kernel_tv(mu_sampler, kernel, domain, fn, beta, objective, N, Nprime, rng,
                       reps: int, n: int = 1, batch: int = 100_000):
    """Mean disagreement rate (an upper bound on the TV distance) and its stderr."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    hits = 0
    done = 0
    while done < reps:
        k = min(batch, reps - done)
        out = coupled_kernel_samples(mu_sampler, kernel, domain, fn, beta, objective, N, Nprime, rng, k, n)
        hits += int(out.disagree.sum())
        done += k
    rate = hits / reps
    return rate, float(np.sqrt(rate * (1.0 - rate) / reps))


# ---------------------------------------------------------------------------
# coupled particle filters


@dataclass
class CoupledFilterPair:
    """Two predictive clouds of sizes ``N <= N'`` agreeing on the ``shared`` slots."""

    cloud_N: ParticleCloud
    cloud_Nprime: ParticleCloud
    shared: np.ndarray

    def __post_init__(self):
        n = self.cloud_N.size
        if self.cloud_Nprime.size < n:
            raise ValueError("the second cloud must be at least as large as the first")
        if self.shared.shape != (n,):
            raise ValueError("shared mask must have length N")

    def check(self) -> bool:
        n = self.cloud_N.size
        a = self.cloud_N.positions[self.shared]
        b = self.cloud_Nprime.positions[:n][self.shared]
        return bool(np.array_equal(a, b))


class CoupledRecord(NamedTuple):
    t: int
    shared_count: int
    tv_bound: float


def tv_bound(N: int, Nprime: int, shared_count: int) -> float:
    """``1 - N/N' + #J^c (1/N + 1/N')`` with ``#J^c = N' - #J``."""
    return 1.0 - N / Nprime + (Nprime - shared_count) * (1.0 / N + 1.0 / Nprime)


def _residual(w, m):
    res = np.maximum(w - m, 0.0)
    s = res.sum()
    total = m.sum() + s
    if abs(total - 1.0) > 1e-12:
        raise AssertionError(f"coupled ancestor law sums to {total!r}, not 1")
    return res / s if s > 0 else w


def _draw(weights, k, rng):
    if k == 0:
        return np.empty(0, dtype=np.int64)
    return multinomial_resample(weights, k, rng)


def coupled_pf_step(model: StateSpaceModel, theta, pair: CoupledFilterPair, y_t: float, rng,
                    mutate: bool = True):
    """Advance both filters one step under the maximal ancestor coupling on ``J_t``.

    For each slot ``i <= N``, with probability ``p = sum_{j in J_t} min(w_j, w'_j)``
    both filters take the same ancestor (drawn proportionally to the minima)
    and share its mutation; otherwise each filter draws from its residual law
    over its full index range.  Slots ``N < i <= N'`` use the large filter's
    weights alone.  Each filter is marginally a standalone bootstrap filter.

    Returns ``(next_pair, shared_count, (log_inc_N, log_inc_Nprime))``.
    """
    theta = model.default_theta() if theta is None else np.asarray(theta, dtype=float)
    t = pair.cloud_N.t
    xs, xl = pair.cloud_N.positions, pair.cloud_Nprime.positions
    N, Np = xs.size, xl.size
    ws, inc_s = normalize_log_weights(model.obs_logdensity(theta, y_t, xs, t))
    wl, inc_l = normalize_log_weights(model.obs_logdensity(theta, y_t, xl, t))
    if not (np.isfinite(inc_s) and np.isfinite(inc_l)):
        raise DegenerateWeightsError(t, theta)

    J = pair.shared
    m = np.where(J, np.minimum(ws, wl[:N]), 0.0)
    p = float(m.sum())
    res_s = _residual(ws, m)
    res_l = _residual(wl, np.concatenate([m, np.zeros(Np - N)]))

    coupled = rng.random(N) < p
    nc = int(coupled.sum())
    anc_c = _draw(m / p, nc, rng) if nc else np.empty(0, dtype=np.int64)
    anc_s = _draw(res_s, N - nc, rng)
    anc_l = _draw(res_l, N - nc, rng)
    anc_x = _draw(wl, Np - N, rng)

    new_c, new_s, new_l, new_x = xs[anc_c], xs[anc_s], xl[anc_l], xl[anc_x]
    if mutate:
        new_c = model.sample_transition(theta, new_c, t + 1, rng)
        new_s = model.sample_transition(theta, new_s, t + 1, rng)
        new_l = model.sample_transition(theta, new_l, t + 1, rng)
        new_x = model.sample_transition(theta, new_x, t + 1, rng)

    out_s = np.empty(N)
    out_l = np.empty(Np)
    out_s[coupled] = new_c
    out_s[~coupled] = new_s
    head = np.empty(N)
    head[coupled] = new_c
    head[~coupled] = new_l
    out_l[:N] = head
    out_l[N:] = new_x
    nxt = CoupledFilterPair(ParticleCloud(t + 1, out_s), ParticleCloud(t + 1, out_l), coupled)
    return nxt, nc, (float(inc_s), float(inc_l))


def initial_pair(model: StateSpaceModel, theta, N: int, Nprime: int, rng) -> CoupledFilterPair:
    _check_sizes(N, Nprime)
    theta = model.default_theta() if theta is None else np.asarray(theta, dtype=float)
    big = model.sample_initial(theta, Nprime, rng)
    return CoupledFilterPair(ParticleCloud(1, big[:N].copy()), ParticleCloud(1, big),
                             np.ones(N, dtype=bool))


def run_coupled_filters(model: StateSpaceModel, theta, observations, N: int, Nprime: int, rng,
                        return_logliks: bool = False):
    """Run the coupled pair over the observations.

    Returns one :class:`CoupledRecord` per ``t = 1..T`` describing the
    predictive clouds at ``t`` (before weighting with ``y_t``).  With
    ``return_logliks`` also returns the two filters' log-likelihood estimates.
    """
    obs = np.asarray(observations, dtype=float)
    pair = initial_pair(model, theta, N, Nprime, rng)
    records = []
    ll_s = ll_l = 0.0
    for k, y in enumerate(obs):
        shared = int(pair.shared.sum())
        records.append(CoupledRecord(pair.cloud_N.t, shared, tv_bound(N, Nprime, shared)))
        pair, _, (a, b) = coupled_pf_step(model, theta, pair, y, rng, mutate=k < obs.size - 1)
        ll_s += a
        ll_l += b
    if return_logliks:
        return records, (ll_s, ll_l)
    return records
