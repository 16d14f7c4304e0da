import math

import numpy as np
import pytest
from scipy import stats

from fastanneal._rng import make_rng
from fastanneal.acceptance import Classical, Polynomial
from fastanneal.annealer import Objective
from fastanneal.coupling import (CoupledFilterPair, SampleMeanObjective, coupled_kernel_sample,
                                 coupled_kernel_samples, coupled_mc_means, coupled_pf_step,
                                 estimate_kernel_tv, initial_pair, run_coupled_filters, tv_bound)
from fastanneal.domain import BoxDomain, UniformIndependence, sample_uniform
from fastanneal.ssm import CircleModel, LinearGaussianModel, ParticleCloud, simulate

APPA = BoxDomain([-0.5], [0.5])
NOISE = 1.0


def h_noisy(points, size, rng):
    return -np.abs(points[:, 0])[:, None] + NOISE * rng.standard_normal((points.shape[0], size))


def mu(rng, k):
    return sample_uniform(APPA, rng, k)


def test_coupled_means_reuse_prefix():
    h = lambda p, size, rng: np.tile(np.arange(1.0, size + 1), (p.shape[0], 1))
    a, b = coupled_mc_means(h, np.array([0.0]), 3, 5, make_rng(0))
    assert a == 2.0 and b == 3.0
    a, b = coupled_mc_means(h_noisy, np.array([0.1]), 7, 7, make_rng(1))
    assert a == b


def test_size_validation():
    with pytest.raises(ValueError):
        coupled_mc_means(h_noisy, np.array([0.0]), 5, 4, make_rng(0))


def test_exact_objective_never_disagrees():
    exact = Objective.exact(lambda p: -np.abs(p[:, 0]), vectorized=True)
    rate, se = estimate_kernel_tv(mu, UniformIndependence(), APPA, Classical(), 10.0, exact,
                                  5, 50, make_rng(2), reps=10_000)
    assert rate == 0.0


def test_single_sample_types():
    out = coupled_kernel_sample(mu, UniformIndependence(), APPA, Polynomial(1.0), 3.0,
                                SampleMeanObjective(h_noisy), 4, 8, make_rng(3))
    assert isinstance(out.accept_N, bool) and out.x.shape == (1,)


@pytest.mark.parametrize("fn,beta,N,Np", [(Polynomial(1.0), 5.0, 10, 20), (Classical(), 2.0, 5, 50),
                                          (Polynomial(0.5), 1.0, 100, 110)])
def test_disagreement_below_first_order_bound(fn, beta, N, Np):
    """P(decisions differ) <= 2 beta sup|f'| E|psi^N - psi^N'|."""
    reps = 100_000
    rate, se = estimate_kernel_tv(mu, UniformIndependence(), APPA, fn, beta, SampleMeanObjective(h_noisy),
                                  N, Np, make_rng(4), reps)
    e_abs = NOISE * math.sqrt(2 / math.pi * (1 / N - 1 / Np))
    bound = 2 * beta * fn.sup_abs_fprime() * e_abs
    assert rate > 0
    assert rate <= bound + 4 * se


def test_coupled_kernel_marginal():
    """The N-chain decision has the law of an uncoupled kernel step."""
    reps = 100_000
    sm = SampleMeanObjective(h_noisy)
    out = coupled_kernel_samples(mu, UniformIndependence(), APPA, Polynomial(1.0), 5.0, sm, 10, 40,
                                 make_rng(5), reps)
    x, z = out.x, out.z
    rng = make_rng(6)
    vals = sm(np.concatenate([x, z]), 10, rng)
    p = Polynomial(1.0).f(5.0 * np.maximum(vals[:reps] - vals[reps:], 0))
    ref = rng.random(reps) <= p
    diff = out.accept_N.mean() - ref.mean()
    assert abs(diff) < 4 * math.sqrt(2 * 0.25 / reps)


def test_tv_bound_formula():
    assert tv_bound(100, 100, 100) == 0.0
    assert tv_bound(100, 150, 100) == pytest.approx(1 - 100 / 150 + 50 * (1 / 100 + 1 / 150))
    assert tv_bound(10, 10, 7) == pytest.approx(3 * 0.2)


def test_pair_validation():
    c = ParticleCloud(1, np.zeros(3))
    with pytest.raises(ValueError):
        CoupledFilterPair(ParticleCloud(1, np.zeros(5)), c, np.ones(5, bool))
    with pytest.raises(ValueError):
        CoupledFilterPair(c, c, np.ones(2, bool))


def test_shared_slots_agree_along_a_run():
    model = CircleModel()
    _, y = simulate(model, None, 8, make_rng(7))
    rng = make_rng(8)
    pair = initial_pair(model, None, 50, 80, rng)
    for t, yt in enumerate(y):
        assert pair.check()
        pair, nc, _ = coupled_pf_step(model, None, pair, yt, rng)
        assert nc == int(pair.shared.sum()) <= 50


def test_equal_sizes_stay_identical():
    model = LinearGaussianModel()
    _, y = simulate(model, None, 15, make_rng(9))
    recs, (a, b) = run_coupled_filters(model, None, y, 64, 64, make_rng(10), return_logliks=True)
    assert all(r.tv_bound == 0.0 and r.shared_count == 64 for r in recs)
    assert a == b


def test_first_record():
    model = CircleModel()
    _, y = simulate(model, None, 4, make_rng(11))
    recs = run_coupled_filters(model, None, y, 100, 125, make_rng(12))
    assert [r.t for r in recs] == [1, 2, 3, 4]
    assert recs[0].shared_count == 100
    assert recs[0].tv_bound == pytest.approx(tv_bound(100, 125, 100))


def test_shared_count_binomial_on_frozen_state():
    model = CircleModel()
    rng = make_rng(13)
    N, Np = 40, 60
    big = rng.random(Np)
    shared = np.arange(N) % 3 != 0
    small = big[:N].copy()
    small[~shared] = rng.random((~shared).sum())
    pair = CoupledFilterPair(ParticleCloud(2, small), ParticleCloud(2, big), shared)
    th, y = model.default_theta(), 0.37
    ws = model.obs_density(th, y, small, 2)
    wl = model.obs_density(th, y, big, 2)
    ws, wl = ws / ws.sum(), wl / wl.sum()
    p = np.minimum(ws, wl[:N])[shared].sum()
    draws = np.array([coupled_pf_step(model, None, pair, y, rng)[1] for _ in range(20_000)])
    k = np.arange(N + 1)
    expected = stats.binom.pmf(k, N, p) * draws.size
    observed = np.bincount(draws, minlength=N + 1)
    # pool sparse tails
    keep = expected >= 5
    obs_b = np.append(observed[keep], observed[~keep].sum())
    exp_b = np.append(expected[keep], expected[~keep].sum())
    assert stats.chisquare(obs_b, exp_b).pvalue > 1e-3
