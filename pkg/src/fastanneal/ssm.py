"""State-space models and the bootstrap particle filter.

Models carry scalar states.  Every model method broadcasts over an optional
leading parameter axis: ``theta`` of shape ``(d,)`` pairs with states of
shape ``(N,)``, and ``theta`` of shape ``(M, d)`` with states ``(M, N)``.
That lets one filter pass evaluate the log-likelihood at ``M`` parameter
values at once, which is how the annealer's noisy objective is vectorized.

Random numbers in a filter pass are consumed in a fixed order: initial
draws, then for each ``t`` the resampling uniforms followed by the mutation
noise.  The mutation after the last observation is skipped since it does
not affect the log-likelihood.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


class DegenerateWeightsError(FloatingPointError):
    """Every particle weight vanished at time ``t``."""

    def __init__(self, t: int, theta):
        self.t = t
        self.theta = None if theta is None else np.asarray(theta).tolist()
        super().__init__(f"all particle weights are zero at t={t} for theta={self.theta}")


def _col(theta, k: int):
    """Parameter ``k`` shaped to broadcast against a state array."""
    theta = np.asarray(theta, dtype=float)
    return theta[..., k, None]


class StateSpaceModel:
    """Interface.  ``t`` is 1-based; ``sample_initial`` draws ``S_1``."""

    param_names: tuple = ()

    def default_theta(self) -> np.ndarray:
        raise NotImplementedError

    def sample_initial(self, theta, n: int, rng) -> np.ndarray:
        raise NotImplementedError

    def sample_transition(self, theta, states, t: int, rng) -> np.ndarray:
        """Draw ``S_t`` given ``S_{t-1} = states``."""
        raise NotImplementedError

    def obs_logdensity(self, theta, y: float, states, t: int) -> np.ndarray:
        raise NotImplementedError

    def obs_density(self, theta, y: float, states, t: int) -> np.ndarray:
        return np.exp(self.obs_logdensity(theta, y, states, t))

    def sample_observation(self, theta, states, t: int, rng) -> np.ndarray:
        raise NotImplementedError

    def _shape(self, theta, n):
        theta = np.asarray(theta, dtype=float)
        return theta.shape[:-1] + (n,)


_LOG_2PI = math.log(2.0 * math.pi)


def _normal_logpdf(x, mean, sd):
    z = (x - mean) / sd
    return -0.5 * z * z - np.log(sd) - 0.5 * _LOG_2PI


@dataclass(frozen=True)
class BenchmarkParams:
    a: float
    b: float
    gamma: float
    sigma_v: float
    sigma_w: float

    def __post_init__(self):
        if not (self.sigma_v > 0 and self.sigma_w > 0):
            raise ValueError("sigma_v and sigma_w must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.gamma, self.sigma_v, self.sigma_w])


PAPER_THETA0 = BenchmarkParams(0.9, 18.0, 10.0, math.sqrt(10.0), 1.0)


class BenchmarkModel(StateSpaceModel):
    """``S_t = a S + b S/(1+S^2) + gamma cos(1.2 t) + sigma_v V``, ``Y_t = S_t^2/20 + sigma_w W``.

    ``theta = (a, b, gamma, sigma_v, sigma_w)``.  The initial state
    ``S_0 ~ N(0, sigma_v^2)`` is propagated once to give ``S_1``.
    """

    param_names = ("a", "b", "gamma", "sigma_v", "sigma_w")
    initial_rule = "S_0 ~ N(0, sigma_v^2); S_1 drawn from the transition at t=1"

    def __init__(self, s0_fixed: Optional[float] = None):
        self.s0_fixed = s0_fixed

    def default_theta(self):
        return PAPER_THETA0.as_array()

    def sample_initial(self, theta, n, rng):
        shape = self._shape(theta, n)
        if self.s0_fixed is None:
            s0 = _col(theta, 3) * rng.standard_normal(shape)
        else:
            s0 = np.full(shape, float(self.s0_fixed))
        return self.sample_transition(theta, s0, 1, rng)

    def sample_transition(self, theta, states, t, rng):
        a, b, g, sv = (_col(theta, k) for k in range(4))
        s = states
        mean = a * s + b * s / (1.0 + s * s) + g * math.cos(1.2 * t)
        return mean + sv * rng.standard_normal(np.shape(states))

    def obs_logdensity(self, theta, y, states, t):
        return _normal_logpdf(y, states * states / 20.0, _col(theta, 4))

    def sample_observation(self, theta, states, t, rng):
        return states * states / 20.0 + _col(theta, 4) * rng.standard_normal(np.shape(states))


@dataclass(frozen=True)
class LinearGaussianModel(StateSpaceModel):
    """``S_1 ~ N(m0, s0^2)``, ``S_t = phi S_{t-1} + sigma_v V``, ``Y_t = c S_t + sigma_w W``.

    ``theta = (phi, sigma_v, c, sigma_w)``; the initial law is fixed.
    """

    phi: float = 0.8
    sigma_v: float = 1.0
    c: float = 1.0
    sigma_w: float = 1.0
    m0: float = 0.0
    s0: float = 1.0

    param_names = ("phi", "sigma_v", "c", "sigma_w")

    def __post_init__(self):
        if not (self.sigma_v > 0 and self.sigma_w > 0 and self.s0 > 0):
            raise ValueError("noise standard deviations must be positive")

    def default_theta(self):
        return np.array([self.phi, self.sigma_v, self.c, self.sigma_w])

    def sample_initial(self, theta, n, rng):
        return self.m0 + self.s0 * rng.standard_normal(self._shape(theta, n))

    def sample_transition(self, theta, states, t, rng):
        return _col(theta, 0) * states + _col(theta, 1) * rng.standard_normal(np.shape(states))

    def obs_logdensity(self, theta, y, states, t):
        return _normal_logpdf(y, _col(theta, 2) * states, _col(theta, 3))

    def sample_observation(self, theta, states, t, rng):
        return _col(theta, 2) * states + _col(theta, 3) * rng.standard_normal(np.shape(states))


@dataclass(frozen=True)
class CircleModel(StateSpaceModel):
    """Compact-state model on the unit circle ``[0, 1)``.

    ``S_1 ~ U[0, 1)``, ``S_t = S_{t-1} + drift + sigma V (mod 1)`` and
    ``r(y | s) = 1 + kappa cos(2 pi (y - s))`` for ``y`` in ``[0, 1)``, so
    ``1 - kappa <= r <= 1 + kappa``.  ``theta = (drift, sigma, kappa)``.
    """

    drift: float = 0.1
    sigma: float = 0.1
    kappa: float = 0.5

    param_names = ("drift", "sigma", "kappa")

    def __post_init__(self):
        if not 0 <= self.kappa < 1:
            raise ValueError("kappa must lie in [0, 1)")

    def default_theta(self):
        return np.array([self.drift, self.sigma, self.kappa])

    def lower_bound(self) -> float:
        """A constant ``r_low`` with ``r_low <= r <= 1/r_low``."""
        return min(1.0 - self.kappa, 1.0 / (1.0 + self.kappa))

    def sample_initial(self, theta, n, rng):
        return rng.random(self._shape(theta, n))

    def sample_transition(self, theta, states, t, rng):
        step = _col(theta, 0) + _col(theta, 1) * rng.standard_normal(np.shape(states))
        return np.mod(states + step, 1.0)

    def obs_logdensity(self, theta, y, states, t):
        return np.log1p(_col(theta, 2) * np.cos(2.0 * math.pi * (y - states)))

    def sample_observation(self, theta, states, t, rng):
        # rejection sampling from the density on [0, 1) with envelope 1 + kappa
        states = np.asarray(states, dtype=float)
        kappa = float(np.asarray(theta)[..., 2].max())
        out = np.empty(states.shape)
        todo = np.ones(states.shape, dtype=bool)
        while todo.any():
            y = rng.random(states.shape)
            u = rng.random(states.shape)
            ok = todo & (u * (1.0 + kappa) <= np.exp(self.obs_logdensity(theta, y, states, t)))
            out[ok] = y[ok]
            todo &= ~ok
        return out


@dataclass
class ParticleCloud:
    """Predictive particle approximation at time ``t`` (given ``y_{1:t-1}``)."""

    t: int
    positions: np.ndarray

    def __post_init__(self):
        if np.shape(self.positions)[-1] < 1:
            raise ValueError("a particle cloud needs at least one particle")

    @property
    def size(self) -> int:
        return np.shape(self.positions)[-1]


if numba is not None:
    @numba.njit(cache=True)
    def _merge(cum, u):
        rows, n = u.shape
        k = cum.shape[1]
        out = np.empty((rows, n), dtype=np.int64)
        for r in range(rows):
            j = 0
            for i in range(n):
                v = u[r, i]
                while j < k - 1 and cum[r, j] <= v:
                    j += 1
                out[r, i] = j
        return out
else:  # pragma: no cover
    def _merge(cum, u):
        return np.stack([np.minimum(np.searchsorted(c, ui, side="right"), c.size - 1)
                         for c, ui in zip(cum, u)])


def normalize_log_weights(logw):
    """Max-shifted normalisation.  Returns ``(weights, log_mean_weight)``.

    ``log_mean_weight`` is ``log((1/N) sum exp(logw))`` per row; rows whose
    weights all vanish give ``-inf`` and NaN weights.
    """
    logw = np.asarray(logw, dtype=float)
    m = np.max(logw, axis=-1, keepdims=True)
    finite = np.isfinite(m)
    shifted = np.exp(logw - np.where(finite, m, 0.0))
    s = np.sum(shifted, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = shifted / s
        lm = np.where(finite & (s > 0), m + np.log(s / logw.shape[-1]), -np.inf)
    return w, lm[..., 0]


def multinomial_resample(weights, size: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``size`` i.i.d. draws from the normalised ``weights``.

    Batched over leading axes.  The draws are produced in sorted order (the
    uniforms are sorted before inversion); as a multiset they are exactly an
    i.i.d. categorical sample.
    """
    w = np.asarray(weights, dtype=float)
    lead = w.shape[:-1]
    w2 = w.reshape(-1, w.shape[-1])
    cum = np.cumsum(w2, axis=1)
    cum /= cum[:, -1:]
    cum[:, -1] = 1.0
    u = np.sort(rng.random((w2.shape[0], size)), axis=1)
    idx = _merge(cum, u)
    return idx.reshape(lead + (size,))


def _take(positions, idx):
    if positions.ndim == 1:
        return positions[idx]
    return np.take_along_axis(positions, idx, axis=-1)


def pf_step(model: StateSpaceModel, theta, cloud: ParticleCloud, y_t: float, rng,
            mutate: bool = True):
    """Weight, resample and mutate the predictive cloud at time ``cloud.t``.

    Returns ``(next_cloud, log_increment)`` where ``log_increment`` is
    ``log((1/N) sum_i r(y_t | xi_i))`` over the cloud before resampling.
    """
    theta = model.default_theta() if theta is None else np.asarray(theta, dtype=float)
    t = cloud.t
    logw = model.obs_logdensity(theta, y_t, cloud.positions, t)
    w, inc = normalize_log_weights(logw)
    if not np.all(np.isfinite(inc)):
        raise DegenerateWeightsError(t, theta)
    n = cloud.size
    idx = multinomial_resample(w, n, rng)
    survivors = _take(cloud.positions, idx)
    if mutate:
        survivors = model.sample_transition(theta, survivors, t + 1, rng)
    inc = float(inc) if np.ndim(inc) == 0 else inc
    return ParticleCloud(t + 1, survivors), inc


def initial_cloud(model: StateSpaceModel, theta, N: int, rng) -> ParticleCloud:
    if N < 1:
        raise ValueError("N must be >= 1")
    theta = model.default_theta() if theta is None else np.asarray(theta, dtype=float)
    return ParticleCloud(1, model.sample_initial(theta, int(N), rng))


def pf_loglik(model: StateSpaceModel, theta, observations, N: int, rng,
              return_increments: bool = False):
    """Bootstrap particle filter estimate of the log-likelihood.

    ``theta`` may be a single parameter vector or a batch ``(M, d)``; the
    result is a float or an ``(M,)`` array accordingly.
    """
    obs = np.asarray(observations, dtype=float)
    if obs.ndim != 1 or obs.size < 1:
        raise ValueError("observations must be a non-empty 1-d sequence")
    theta = model.default_theta() if theta is None else np.asarray(theta, dtype=float)
    cloud = initial_cloud(model, theta, N, rng)
    incs = []
    for k, y in enumerate(obs):
        cloud, inc = pf_step(model, theta, cloud, y, rng, mutate=k < obs.size - 1)
        incs.append(inc)
    incs = np.array(incs)
    total = incs.sum(axis=0)
    total = float(total) if np.ndim(total) == 0 else total
    return (total, incs) if return_increments else total


def kalman_loglik(model: LinearGaussianModel, observations) -> float:
    """Exact log-likelihood by the Kalman predictive decomposition."""
    phi, sv, c, sw = model.phi, model.sigma_v, model.c, model.sigma_w
    m, P = model.m0, model.s0 ** 2
    ll = 0.0
    for y in np.asarray(observations, dtype=float):
        S = c * c * P + sw * sw
        if not S > 0:
            raise ArithmeticError("non-positive predictive variance in Kalman recursion")
        resid = y - c * m
        ll += -0.5 * (_LOG_2PI + math.log(S) + resid * resid / S)
        K = P * c / S
        m, P = m + K * resid, (1.0 - K * c) * P
        m, P = phi * m, phi * phi * P + sv * sv
    return float(ll)


def simulate(model: StateSpaceModel, theta, T: int, rng):
    """Draw ``(states, observations)`` of length ``T``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    theta = model.default_theta() if theta is None else np.asarray(theta, dtype=float)
    states = np.empty(T)
    obs = np.empty(T)
    s = model.sample_initial(theta, 1, rng)
    for t in range(1, T + 1):
        if t > 1:
            s = model.sample_transition(theta, s, t, rng)
        states[t - 1] = s[0]
        obs[t - 1] = model.sample_observation(theta, s, t, rng)[0]
    return states, obs


def write_observations(path, observations, metadata: Optional[dict] = None) -> None:
    """CSV with columns ``t,y``; metadata goes to ``<path>.meta.json``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "y"])
        for t, y in enumerate(np.asarray(observations, dtype=float), start=1):
            w.writerow([t, repr(float(y))])
    if metadata is not None:
        with open(f"{path}.meta.json", "w", encoding="utf-8") as fh:
            json.dump(metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_observations(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    rows.sort(key=lambda r: int(r["t"]))
    return np.array([float(r["y"]) for r in rows])
