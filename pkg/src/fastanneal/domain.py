"""Box search spaces and proposal kernels.

All operations broadcast over a leading batch axis: a point is an array of
shape ``(d,)`` and a batch of points has shape ``(m, d)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class PreconditionError(ValueError):
    """Raised when a documented precondition is violated by the caller."""


@dataclass(frozen=True, eq=False)
class BoxDomain:
    lower: np.ndarray
    upper: np.ndarray
    log_scale: np.ndarray = None

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-d of equal length")
        ls = (np.zeros(lo.shape, dtype=bool) if self.log_scale is None
              else np.atleast_1d(np.asarray(self.log_scale, dtype=bool)))
        if ls.shape != lo.shape:
            raise ValueError("log_scale must have the same length as lower")
        if not np.all(lo < hi):
            raise ValueError("need lower[i] < upper[i] for every coordinate")
        if np.any(ls & (lo <= 0)):
            raise ValueError("log-scale coordinates need a positive lower bound")
        for name, v in (("lower", lo), ("upper", hi), ("log_scale", ls)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    def clamp(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def to_proposal_scale(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.log_scale.any():
            return x
        return np.where(self.log_scale, np.log(np.where(self.log_scale, x, 1.0)), x)

    def from_proposal_scale(self, u) -> np.ndarray:
        if not self.log_scale.any():
            return u
        return np.where(self.log_scale, np.exp(np.where(self.log_scale, u, 0.0)), u)

    def side_lengths(self, proposal_scale: bool = True) -> np.ndarray:
        if proposal_scale:
            return self.to_proposal_scale(self.upper) - self.to_proposal_scale(self.lower)
        return self.upper - self.lower


def sample_uniform(domain: BoxDomain, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform draw(s) on the box, in original units."""
    shape = (domain.dim,) if size is None else (size, domain.dim)
    return domain.lower + (domain.upper - domain.lower) * rng.random(shape)


def default_step_scale(domain: BoxDomain) -> Callable[[int], np.ndarray]:
    """Per-coordinate step std ``side_i / log(n + 1)`` on the proposal scale.

    Side lengths of log-scale coordinates are measured in log units.
    """
    sides = domain.side_lengths(proposal_scale=True)

    def step(n: int) -> np.ndarray:
        if n < 1:
            raise PreconditionError("step-size rule is defined for n >= 1 (log(1) = 0)")
        return sides / math.log(n + 1)

    return step


def fixed_step_scale(step) -> Callable[[int], np.ndarray]:
    s = np.atleast_1d(np.asarray(step, dtype=float))
    if np.any(s <= 0):
        raise ValueError("fixed step scale must be positive")
    return lambda n: s


class ProposalKernel:
    def propose(self, domain: BoxDomain, x, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class UniformIndependence(ProposalKernel):
    """Proposes uniformly on the box irrespective of the current point."""

    def propose(self, domain, x, n, rng):
        x = np.asarray(x, dtype=float)
        size = None if x.ndim == 1 else x.shape[0]
        return sample_uniform(domain, rng, size)


@dataclass(frozen=True)
class GaussianRandomWalk(ProposalKernel):
    """Gaussian increments on the proposal scale, clamped back into the box.

    ``step_scale(n)`` returns the per-coordinate standard deviations.
    """

    step_scale: Callable[[int], np.ndarray] = field(compare=False)

    def propose(self, domain, x, n, rng):
        x = np.asarray(x, dtype=float)
        sd = np.asarray(self.step_scale(n), dtype=float)
        if np.any(sd <= 0):
            raise PreconditionError(f"step scale must be positive, got {sd!r}")
        u = domain.to_proposal_scale(x) + sd * rng.standard_normal(x.shape)
        return domain.clamp(domain.from_proposal_scale(u))


def propose(kernel: ProposalKernel, domain: BoxDomain, x, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a proposal from ``K(x, .)``; the result always lies in the box."""
    if n < 1:
        raise PreconditionError("proposal index n must be >= 1")
    if not np.all(domain.contains(x)):
        raise PreconditionError(f"current point {np.asarray(x)!r} lies outside the domain")
    return kernel.propose(domain, x, n, rng)


def kernel_from_config(kind: str, domain: BoxDomain, step_rule: str = "paper_default",
                       step: Sequence[float] | float | None = None) -> ProposalKernel:
    kind = kind.lower()
    if kind == "uniform":
        return UniformIndependence()
    if kind == "gaussian_rw":
        if step_rule == "paper_default":
            return GaussianRandomWalk(default_step_scale(domain))
        if step_rule == "fixed":
            if step is None:
                raise ValueError("kernel.step is required when kernel.step_rule = fixed")
            return GaussianRandomWalk(fixed_step_scale(step))
        raise ValueError(f"unknown kernel.step_rule {step_rule!r}")
    raise ValueError(f"unknown kernel.kind {kind!r}")
