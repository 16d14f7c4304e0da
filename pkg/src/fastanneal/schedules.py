"""Cooling (inverse temperature) and precision (sample size) schedules.

Schedules are pure functions of the iteration index ``n >= 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


class CoolingSchedule:
    def beta(self, n: int) -> float:
        raise NotImplementedError

    def __call__(self, n: int) -> float:
        return self.beta(n)


@dataclass(frozen=True)
class PowerCooling(CoolingSchedule):
    """``beta_n = scale * max(n**alpha, 1)``."""

    alpha: float
    scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"cooling.alpha must lie in (0, 1), got {self.alpha}")
        if not self.scale > 0:
            raise ValueError(f"cooling.scale must be positive, got {self.scale}")

    def beta(self, n: int) -> float:
        return self.scale * max(float(n) ** self.alpha, 1.0)


@dataclass(frozen=True)
class LogarithmicCooling(CoolingSchedule):
    """``beta_n = beta0 * log(n + e)``.

    Convergence needs ``1/beta0 > osc(psi)``; that is a property of the
    objective and is not enforced here.
    """

    beta0: float

    def __post_init__(self):
        if not self.beta0 > 0:
            raise ValueError(f"cooling.beta0 must be positive, got {self.beta0}")

    def beta(self, n: int) -> float:
        return self.beta0 * math.log(n + math.e)


@dataclass(frozen=True)
class ConstantCooling(CoolingSchedule):
    """Fixed ``beta``: the homogeneous kernel, used for stationary checks."""

    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"cooling.beta must be positive, got {self.value}")

    def beta(self, n: int) -> float:
        return self.value


def beta_at(s: CoolingSchedule, n: int) -> float:
    if n < 0:
        raise ValueError("iteration index must be nonnegative")
    return s.beta(n)


class PrecisionSchedule:
    floor: int = 1

    def _raw(self, n: int) -> int:
        raise NotImplementedError

    def n_at(self, n: int) -> int:
        return max(int(self.floor), self._raw(n), 1)

    def __call__(self, n: int) -> int:
        return self.n_at(n)


def _ceil(x: float) -> int:
    # guard against 1e2 * 1.0000000000000002 style round-off pushing ceil up
    r = round(x)
    return int(r) if abs(x - r) < 1e-9 else math.ceil(x)


@dataclass(frozen=True)
class ConstantPrecision(PrecisionSchedule):
    N: int
    floor: int = 1

    def __post_init__(self):
        if int(self.N) < 1:
            raise ValueError(f"precision.n must be >= 1, got {self.N}")

    def _raw(self, n: int) -> int:
        return int(self.N)


@dataclass(frozen=True)
class AffinePrecision(PrecisionSchedule):
    """``N_n = ceil(N0 + N1 * n)``, then ``max(floor, .)``."""

    N0: float
    N1: float
    floor: int = 1

    def __post_init__(self):
        if self.N0 < 0 or not self.N1 > 0:
            raise ValueError("precision.n0 must be >= 0 and precision.n1 > 0")

    def _raw(self, n: int) -> int:
        return _ceil(self.N0 + self.N1 * n)


@dataclass(frozen=True)
class PowerPrecision(PrecisionSchedule):
    """``N_n = ceil(N0 + N1 * n**delta)``, then ``max(floor, .)``."""

    N0: float
    N1: float
    delta: float
    floor: int = 1

    def __post_init__(self):
        if self.N0 < 0 or not self.N1 > 0 or not self.delta > 0:
            raise ValueError("precision.n0 >= 0, precision.n1 > 0 and precision.delta > 0 required")

    def _raw(self, n: int) -> int:
        return _ceil(self.N0 + self.N1 * float(n) ** self.delta)


def n_particles_at(s: PrecisionSchedule, n: int) -> int:
    if n < 0:
        raise ValueError("iteration index must be nonnegative")
    return s.n_at(n)


def cooling_from_config(kind: str, alpha=None, scale=None, beta0=None, beta=None) -> CoolingSchedule:
    kind = kind.lower()
    if kind == "power":
        return PowerCooling(float(alpha), 1.0 if scale is None else float(scale))
    if kind == "logarithmic":
        return LogarithmicCooling(float(beta0))
    if kind == "constant":
        return ConstantCooling(float(beta))
    raise ValueError(f"unknown cooling.kind {kind!r}")


def precision_from_config(kind: str, n=None, n0=None, n1=None, delta=None, floor=None):
    kind = kind.lower()
    fl = 1 if floor is None else int(floor)
    if kind == "none":
        return None
    if kind == "constant":
        return ConstantPrecision(int(n), floor=fl)
    if kind == "affine":
        return AffinePrecision(float(n0 or 0.0), float(n1), floor=fl)
    if kind == "power":
        return PowerPrecision(float(n0 or 0.0), float(n1), float(delta), floor=fl)
    raise ValueError(f"unknown precision.kind {kind!r}")
