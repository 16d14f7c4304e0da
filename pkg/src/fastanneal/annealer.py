"""Annealing loops: classical, fast exact-objective and fast noisy-objective.

The three schemes share one step: propose ``Z ~ K(theta_n, .)``, then move
to ``Z`` with probability ``f(beta_n * (psi(theta_n) - psi(Z))_+)``.  Which
scheme runs is decided by the configuration (acceptance function, cooling
schedule) and by whether the objective is exact or noisy.  In noisy mode
both values are fresh approximations ``psi^{N_n}`` drawn at every step; the
current-state value is never cached.

Random numbers are consumed in a fixed order per step: proposal, objective
draws (current point then proposal), acceptance uniform.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._rng import make_rng
from .acceptance import AcceptanceFunction
from .domain import BoxDomain, ProposalKernel, propose, sample_uniform
from .schedules import CoolingSchedule, PrecisionSchedule


@dataclass(frozen=True)
class Objective:
    """The function to maximise.

    ``fn(x)`` for an exact objective, ``fn(x, N, rng)`` for a noisy one.
    With ``vectorized=True`` the callable receives a batch ``(m, d)`` and
    returns ``(m,)``; otherwise it is called once per point.
    """

    fn: Callable
    noisy: bool = False
    vectorized: bool = False

    @classmethod
    def exact(cls, fn, vectorized: bool = False) -> "Objective":
        return cls(fn, noisy=False, vectorized=vectorized)

    @classmethod
    def approximate(cls, fn, vectorized: bool = False) -> "Objective":
        return cls(fn, noisy=True, vectorized=vectorized)

    def evaluate(self, points, N: Optional[int] = None, rng=None) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.noisy:
            if N is None or rng is None:
                raise ValueError("noisy objective needs N and rng")
            if self.vectorized:
                out = self.fn(pts, N, rng)
            else:
                out = [self.fn(p, N, rng) for p in pts]
        else:
            out = self.fn(pts) if self.vectorized else [self.fn(p) for p in pts]
        return np.asarray(out, dtype=float).reshape(pts.shape[0])


@dataclass(frozen=True)
class AnnealerConfig:
    acceptance: AcceptanceFunction
    cooling: CoolingSchedule
    kernel: ProposalKernel
    domain: BoxDomain
    iterations: int
    seed: int
    precision: Optional[PrecisionSchedule] = None
    record_every: int = 1

    def __post_init__(self):
        if int(self.iterations) < 1:
            raise ValueError("iterations must be >= 1")
        if int(self.record_every) < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class Record:
    n: int
    theta: np.ndarray
    psi: float
    beta: float
    N: Optional[int]
    accepted: bool


@dataclass
class Trajectory:
    """Thinned record of one chain.

    Record ``n`` holds the state ``theta_n`` reached after step ``n - 1``,
    together with the ``beta`` and ``N`` that step used, and the objective
    value (exact or the approximation used in the decision) at ``theta_n``.
    """

    records: list = field(default_factory=list)
    final_theta: Optional[np.ndarray] = None

    def thetas(self) -> np.ndarray:
        return np.array([r.theta for r in self.records])

    def write_csv(self, path) -> None:
        d = len(self.final_theta) if self.final_theta is not None else len(self.records[0].theta)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "beta", "N", "psi", "accepted"] + [f"theta_{i}" for i in range(d)])
            for r in self.records:
                w.writerow([r.n, repr(float(r.beta)), "" if r.N is None else r.N,
                            repr(float(r.psi)), int(r.accepted)] + [repr(float(v)) for v in r.theta])


class AnnealingError(RuntimeError):
    """A step failed; ``trajectory`` holds everything recorded before it."""

    def __init__(self, message, trajectory: Trajectory):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass
class StepOutcome:
    theta: np.ndarray
    accepted: np.ndarray
    psi_current: np.ndarray
    psi_proposal: np.ndarray
    N: Optional[int]
    beta: float

    @property
    def psi_next(self) -> np.ndarray:
        return np.where(self.accepted, self.psi_proposal, self.psi_current)


def _step(cfg: AnnealerConfig, objective: Objective, theta, n: int, rng,
          psi_current=None) -> StepOutcome:
    theta = np.atleast_2d(theta)
    beta = cfg.cooling.beta(n)
    z = propose(cfg.kernel, cfg.domain, theta, max(n, 1), rng)
    if objective.noisy:
        if cfg.precision is None:
            raise ValueError("noisy objective requires a precision schedule")
        N = cfg.precision.n_at(n)
        vals = objective.evaluate(np.concatenate([theta, z]), N, rng)
        psi_x, psi_z = vals[:theta.shape[0]], vals[theta.shape[0]:]
    else:
        N = None
        psi_x = objective.evaluate(theta) if psi_current is None else np.asarray(psi_current, dtype=float)
        psi_z = objective.evaluate(z)
    gap = np.maximum(psi_x - psi_z, 0.0)
    prob = np.where(gap > 0, cfg.acceptance.f(beta * gap), 1.0)
    accepted = rng.random(theta.shape[0]) < prob
    new = np.where(accepted[:, None], z, theta)
    return StepOutcome(new, accepted, psi_x, psi_z, N, beta)


def step_exact(cfg: AnnealerConfig, objective: Objective, theta_n, n: int, rng):
    """One move of the exact-objective chain; returns ``(theta_next, accepted)``."""
    if objective.noisy:
        raise ValueError("step_exact needs an exact objective")
    single = np.ndim(theta_n) == 1
    out = _step(cfg, objective, theta_n, n, rng)
    if single:
        return out.theta[0], bool(out.accepted[0])
    return out.theta, out.accepted


def step_noisy(cfg: AnnealerConfig, objective: Objective, theta_n, n: int, rng):
    """One move on fresh approximations ``psi^{N_n}``.

    Returns ``(theta_next, accepted, psihat_current, psihat_proposal)``.
    """
    if not objective.noisy:
        raise ValueError("step_noisy needs a noisy objective")
    single = np.ndim(theta_n) == 1
    out = _step(cfg, objective, theta_n, n, rng)
    if single:
        return out.theta[0], bool(out.accepted[0]), float(out.psi_current[0]), float(out.psi_proposal[0])
    return out.theta, out.accepted, out.psi_current, out.psi_proposal


@dataclass
class BatchRun:
    final_theta: np.ndarray
    snapshots: dict
    accept_count: np.ndarray


def run_batch(cfg: AnnealerConfig, objective: Objective, reps: int, rng: np.random.Generator,
              theta0=None, checkpoints: Sequence[int] = (), on_step=None) -> BatchRun:
    """Run ``reps`` independent chains in lockstep on one random stream.

    ``snapshots[n]`` is the ``(reps, d)`` array of states ``theta_n`` for each
    requested checkpoint ``0 <= n <= cfg.iterations``.  ``on_step(n, outcome)``
    is called after every step.
    """
    if theta0 is None:
        theta = sample_uniform(cfg.domain, rng, reps)
    else:
        theta = np.array(np.broadcast_to(np.asarray(theta0, dtype=float), (reps, cfg.domain.dim)))
    wanted = set(int(c) for c in checkpoints)
    if any(c < 0 or c > cfg.iterations for c in wanted):
        raise ValueError("checkpoints must lie in [0, iterations]")
    snaps = {}
    if 0 in wanted:
        snaps[0] = theta.copy()
    psi = None
    count = np.zeros(reps, dtype=np.int64)
    for n in range(int(cfg.iterations)):
        out = _step(cfg, objective, theta, n, rng, psi_current=psi)
        theta = out.theta
        count += out.accepted
        if not objective.noisy:
            psi = out.psi_next
        if on_step is not None:
            on_step(n, out)
        if n + 1 in wanted:
            snaps[n + 1] = theta.copy()
    return BatchRun(theta, snaps, count)


def run(cfg: AnnealerConfig, objective: Objective, hooks: Optional[Callable[[Record], None]] = None,
        theta0=None, rng: Optional[np.random.Generator] = None) -> Trajectory:
    """Run one annealing chain and return its thinned trajectory.

    The chain starts uniformly on the domain unless ``theta0`` is given and is
    fully determined by ``cfg.seed`` (or by ``rng`` when supplied).
    """
    rng = make_rng(cfg.seed) if rng is None else rng
    traj = Trajectory()
    theta = (sample_uniform(cfg.domain, rng) if theta0 is None
             else np.asarray(theta0, dtype=float).copy())[None, :]
    if not np.all(cfg.domain.contains(theta)):
        raise ValueError("theta0 lies outside the domain")
    psi = None
    last = int(cfg.iterations)
    for n in range(last):
        try:
            out = _step(cfg, objective, theta, n, rng, psi_current=psi)
        except Exception as exc:
            traj.final_theta = theta[0].copy()
            raise AnnealingError(f"step {n} failed: {exc}", traj) from exc
        theta = out.theta
        if not objective.noisy:
            psi = out.psi_next
        k = n + 1
        if k % cfg.record_every == 0 or k == last:
            rec = Record(k, theta[0].copy(), float(out.psi_next[0]), out.beta, out.N, bool(out.accepted[0]))
            traj.records.append(rec)
            if hooks is not None:
                hooks(rec)
    traj.final_theta = theta[0].copy()
    return traj
