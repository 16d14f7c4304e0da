"""Acceptance functions for annealing moves.

An acceptance function ``f`` maps a scaled downhill gap ``t = beta * gap >= 0``
to a probability in ``(0, 1]``.  Its reciprocal ``g = 1/f`` is the gain.
Classical annealing uses ``f(t) = exp(-t)``; the heavy-tailed polynomial
family ``f(t) = 1 / (1 + t/tau)`` gives the fast scheme.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a function."""


class AcceptanceFunction:
    """Base class.  Subclasses implement vectorized ``f`` and ``fprime``.

    ``f`` and ``fprime`` do no argument checking; they are the hot-loop entry
    points.  Use :func:`eval_f` / :func:`eval_g` for checked evaluation.
    """

    name = "abstract"

    def f(self, t):
        raise NotImplementedError

    def fprime(self, t):
        raise NotImplementedError

    def g(self, t):
        return 1.0 / self.f(t)

    def sup_abs_fprime(self) -> float:
        """Upper bound on ``|f'|`` over ``[0, inf)``, used by coupling bounds."""
        raise NotImplementedError


@dataclass(frozen=True)
class Classical(AcceptanceFunction):
    name = "classical"

    def f(self, t):
        return np.exp(-np.asarray(t, dtype=float))

    def fprime(self, t):
        return -np.exp(-np.asarray(t, dtype=float))

    def g(self, t):
        return np.exp(np.asarray(t, dtype=float))

    def sup_abs_fprime(self) -> float:
        return 1.0


@dataclass(frozen=True)
class Polynomial(AcceptanceFunction):
    tau: float = 1.0
    name = "polynomial"

    def __post_init__(self):
        if not (self.tau > 0 and np.isfinite(self.tau)):
            raise DomainError(f"Polynomial acceptance needs tau > 0, got {self.tau!r}")

    def f(self, t):
        return 1.0 / (1.0 + np.asarray(t, dtype=float) / self.tau)

    def fprime(self, t):
        return -1.0 / (self.tau * (1.0 + np.asarray(t, dtype=float) / self.tau) ** 2)

    def g(self, t):
        return 1.0 + np.asarray(t, dtype=float) / self.tau

    def sup_abs_fprime(self) -> float:
        return 1.0 / self.tau


@dataclass(frozen=True)
class Custom(AcceptanceFunction):
    """User-supplied ``f`` with its derivative.

    Smoothness of ``f`` is the caller's responsibility; :func:`verify_admissible`
    only checks grid properties.
    """

    func: Callable = field(compare=False)
    deriv: Callable = field(compare=False)
    fprime_bound: float | None = None
    name = "custom"

    def f(self, t):
        return np.asarray(self.func(np.asarray(t, dtype=float)), dtype=float)

    def fprime(self, t):
        return np.asarray(self.deriv(np.asarray(t, dtype=float)), dtype=float)

    def sup_abs_fprime(self) -> float:
        if self.fprime_bound is None:
            raise ValueError("Custom acceptance function has no fprime_bound")
        return float(self.fprime_bound)


def _check_nonnegative(t):
    arr = np.asarray(t, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DomainError(f"acceptance functions are defined on t >= 0, got {t!r}")
    return arr


def _as_scalar_or_array(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def eval_f(fn: AcceptanceFunction, t):
    """Checked evaluation of ``f(t)`` for ``t >= 0``."""
    return _as_scalar_or_array(fn.f(_check_nonnegative(t)))


def eval_g(fn: AcceptanceFunction, t):
    """Checked evaluation of ``g(t) = 1/f(t)`` for ``t >= 0``."""
    return _as_scalar_or_array(fn.g(_check_nonnegative(t)))


def acceptance_prob(fn: AcceptanceFunction, beta, psi_current, psi_proposal):
    """Probability ``f(beta * (psi_current - psi_proposal)_+)`` of accepting a move.

    Works elementwise on arrays.  Exactly 1 whenever the proposal is not
    worse than the current point.
    """
    beta = np.asarray(beta, dtype=float)
    if np.any(beta <= 0):
        raise DomainError(f"beta must be positive, got {beta!r}")
    gap = np.maximum(np.asarray(psi_current, dtype=float) - np.asarray(psi_proposal, dtype=float), 0.0)
    prob = np.where(gap > 0, fn.f(beta * gap), 1.0)
    return _as_scalar_or_array(prob)


@dataclass
class AdmissibilityReport:
    f0_is_one: bool
    positive: bool
    nonincreasing: bool
    convex_midpoint: bool
    tfprime_bounded: bool
    max_abs_tfprime: float
    argmax_abs_tfprime: float

    @property
    def admissible(self) -> bool:
        return (self.f0_is_one and self.positive and self.nonincreasing
                and self.convex_midpoint and self.tfprime_bounded)


def verify_admissible(fn: AcceptanceFunction, grid: Sequence[float], tol: float = 1e-12) -> AdmissibilityReport:
    """Numerically check the standing assumptions on ``f`` over a finite grid.

    Checks ``f(0) = 1``, positivity, monotonicity between consecutive grid
    points, the midpoint convexity inequality for every pair of grid points,
    and finiteness of ``max |t f'(t)|``.
    """
    t = np.asarray(grid, dtype=float)
    if t.ndim != 1 or t.size < 3:
        raise ValueError("grid must be a 1-d sequence of at least 3 points")
    if np.any(t < 0) or np.any(np.diff(t) <= 0):
        raise ValueError("grid must be sorted, strictly increasing and nonnegative")

    fv = fn.f(t)
    f0 = float(fn.f(np.array(0.0)))
    lo, hi = np.triu_indices(t.size, k=1)
    mid = fn.f(0.5 * (t[lo] + t[hi]))
    convex = bool(np.all(mid <= 0.5 * (fv[lo] + fv[hi]) + tol))

    tfp = np.abs(t * fn.fprime(t))
    finite = bool(np.all(np.isfinite(tfp)))
    k = int(np.nanargmax(tfp)) if finite else int(np.argmax(~np.isfinite(tfp)))
    return AdmissibilityReport(
        f0_is_one=abs(f0 - 1.0) <= tol,
        positive=bool(np.all(fv > 0)),
        nonincreasing=bool(np.all(np.diff(fv) <= tol)),
        convex_midpoint=convex,
        tfprime_bounded=finite,
        max_abs_tfprime=float(tfp[k]),
        argmax_abs_tfprime=float(t[k]),
    )


def from_config(kind: str, tau: float | None = None) -> AcceptanceFunction:
    kind = kind.lower()
    if kind == "classical":
        return Classical()
    if kind == "polynomial":
        return Polynomial(1.0 if tau is None else float(tau))
    raise ValueError(f"unknown acceptance.kind {kind!r}")
