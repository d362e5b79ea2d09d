"""Vertex weights, entrance boundaries and exponent bookkeeping.

Everything downstream is parameterised by a descending weight vector
(``w`` for the rank-one graph, ``x`` for the multiplicative-coalescent
graph) or by a descending sequence ``c`` describing the limiting jumps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "ParameterError",
    "WeightSequence",
    "EntranceBoundary",
    "ThetaSequence",
    "ExponentSet",
    "EntranceReport",
    "power_law_weights",
    "critical_iota",
    "critical_window",
    "nr_to_mc_params",
    "entrance_boundary",
    "check_entrance_assumptions",
    "power_law_moments",
]


class ParameterError(ValueError):
    """Raised when a model parameter lies outside its admissible range."""


def _check_tau(tau: float) -> None:
    if not (3.0 < tau < 4.0):
        raise ParameterError(f"tau must lie in (3, 4), got {tau!r}")


@dataclass(frozen=True)
class ExponentSet:
    """Scaling exponents of the critical power-law regime."""

    tau: float

    def __post_init__(self) -> None:
        _check_tau(self.tau)

    @property
    def eta(self) -> float:
        """Distance exponent (tau-3)/(tau-1)."""
        return (self.tau - 3.0) / (self.tau - 1.0)

    @property
    def rho(self) -> float:
        """Component-size exponent (tau-2)/(tau-1)."""
        return (self.tau - 2.0) / (self.tau - 1.0)

    @property
    def alpha(self) -> float:
        """Weight-decay exponent 1/(tau-1)."""
        return 1.0 / (self.tau - 1.0)

    @property
    def pi_dim(self) -> float:
        """Box-counting dimension (tau-2)/(tau-3) of the limit spaces."""
        return (self.tau - 2.0) / (self.tau - 3.0)


@dataclass(frozen=True, eq=False)
class WeightSequence:
    """Descending positive weights with cached power sums."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ParameterError("weights must be a non-empty 1-d array")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ParameterError("weights must be finite and strictly positive")
        if np.any(np.diff(v) > 0):
            raise ParameterError("weights must be sorted in descending order")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.n

    def sigma(self, r: int | float) -> float:
        """Power sum ``sum_i values[i]**r``."""
        return float(np.sum(self.values**r))

    @cached_property
    def sigma1(self) -> float:
        return self.sigma(1)

    @cached_property
    def sigma2(self) -> float:
        return self.sigma(2)

    @cached_property
    def sigma3(self) -> float:
        return self.sigma(3)

    def scaled(self, factor: float) -> "WeightSequence":
        if factor <= 0:
            raise ParameterError("scale factor must be positive")
        return WeightSequence(self.values * factor)


@dataclass(frozen=True, eq=False)
class EntranceBoundary:
    """Truncated descending sequence ``c`` with finite cube sum."""

    c: np.ndarray
    tau: float | None = None
    alpha: float | None = None

    def __post_init__(self) -> None:
        c = np.asarray(self.c, dtype=np.float64)
        if c.ndim != 1 or c.size == 0:
            raise ParameterError("entrance boundary must be non-empty")
        if np.any(c <= 0) or np.any(np.diff(c) > 0):
            raise ParameterError("entrance boundary must be positive and descending")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @property
    def J(self) -> int:
        return int(self.c.size)

    @property
    def sum_sq(self) -> float:
        return float(np.sum(self.c**2))

    @property
    def sum_cube(self) -> float:
        return float(np.sum(self.c**3))


def power_law_weights(n: int, tau: float, iota: float = 1.0) -> WeightSequence:
    """Quantile weights ``w_i = iota * (n/i)**(1/(tau-1))`` for the exact power law.

    The law is ``F(x) = 1 - (iota/x)**(tau-1)`` on ``[iota, inf)``; ``w_i`` is the
    generalised inverse of ``1-F`` evaluated at ``i/n``.
    """
    _check_tau(tau)
    if n < 1:
        raise ParameterError("n must be >= 1")
    if iota <= 0:
        raise ParameterError("iota must be positive")
    i = np.arange(1, n + 1, dtype=np.float64)
    return WeightSequence(iota * (n / i) ** (1.0 / (tau - 1.0)))


def critical_iota(tau: float) -> float:
    """Scale ``iota`` making ``E[W^2]/E[W] = 1`` for the exact power law."""
    _check_tau(tau)
    return (tau - 3.0) / (tau - 2.0)


def power_law_moments(tau: float, iota: float) -> tuple[float, float]:
    """``(E W, E W^2)`` for the exact power law with scale ``iota``."""
    _check_tau(tau)
    return iota * (tau - 1.0) / (tau - 2.0), iota**2 * (tau - 1.0) / (tau - 3.0)


def critical_window(w: WeightSequence, lam: float, tau: float) -> WeightSequence:
    """Scale all weights by ``1 + lam * n**(-eta)``."""
    mult = 1.0 + lam * w.n ** (-ExponentSet(tau).eta)
    if mult <= 0:
        raise ParameterError(f"window multiplier {mult:.3g} is not positive")
    return w.scaled(mult)


def nr_to_mc_params(w: WeightSequence, lam: float, tau: float) -> tuple[WeightSequence, float]:
    """Map rank-one weights to ``(x, t)`` with ``t x_i x_j = (1+lam n^-eta) w_i w_j / l_n``."""
    ex = ExponentSet(tau)
    n = w.n
    mult = 1.0 + lam * n ** (-ex.eta)
    if mult <= 0:
        raise ParameterError(f"window multiplier {mult:.3g} is not positive")
    x = WeightSequence(w.values * n ** (-ex.rho))
    t = mult * n ** (2.0 * ex.rho) / w.sigma1
    return x, t


def entrance_boundary(alpha: float, tau: float, J: int) -> EntranceBoundary:
    """The special sequence ``c_j = alpha * j**(-1/(tau-1))`` for ``j = 1..J``."""
    _check_tau(tau)
    if alpha <= 0:
        raise ParameterError("alpha must be positive")
    if J < 1:
        raise ParameterError("J must be >= 1")
    j = np.arange(1, J + 1, dtype=np.float64)
    return EntranceBoundary(alpha * j ** (-1.0 / (tau - 1.0)), tau=tau, alpha=alpha)


@dataclass
class EntranceReport:
    """Diagnostics of the three entrance-boundary limits along a family of weights."""

    ns: list[int]
    cube_ratio: list[float]
    cube_target: float
    coord_gap: list[float]
    sigma2: list[float]
    flags: list[str] = field(default_factory=list)

    @property
    def cube_gap(self) -> list[float]:
        return [abs(r - self.cube_target) for r in self.cube_ratio]

    @property
    def ok(self) -> bool:
        return not self.flags


def check_entrance_assumptions(
    x_family: Sequence[WeightSequence],
    c: EntranceBoundary,
    mismatch_tol: float = 0.05,
) -> EntranceReport:
    """Track ``sigma3/sigma2^3 -> sum c^3``, ``x_j/sigma2 -> c_j`` and ``sigma2 -> 0``.

    Each gap should shrink monotonically as ``n`` grows; a flag is raised when it
    does not, when ``sigma2`` fails to decrease, or when the final coordinate gap
    (relative to ``c_1``) exceeds ``mismatch_tol``.
    """
    if len(x_family) < 2:
        raise ParameterError("need weight sequences for at least two values of n")
    fam = sorted(x_family, key=lambda x: x.n)
    J = c.J
    target = c.sum_cube
    ns, cube, coord, s2 = [], [], [], []
    for x in fam:
        ns.append(x.n)
        cube.append(x.sigma3 / x.sigma2**3)
        k = min(J, x.n)
        ratio = np.zeros(J)
        ratio[:k] = x.values[:k] / x.sigma2
        coord.append(float(np.max(np.abs(ratio - c.c))))
        s2.append(x.sigma2)
    rep = EntranceReport(ns, cube, target, coord, s2)
    if any(b >= a for a, b in zip(s2, s2[1:])):
        rep.flags.append("sigma2_not_decreasing")
    gaps = rep.cube_gap
    if any(b > a for a, b in zip(gaps, gaps[1:])):
        rep.flags.append("cube_gap_not_decreasing")
    if any(b > a for a, b in zip(coord, coord[1:])):
        rep.flags.append("coordinate_gap_not_decreasing")
    if coord[-1] > mismatch_tol * c.c[0]:
        rep.flags.append("coordinate_mismatch")
    return rep


@dataclass(frozen=True, eq=False)
class ThetaSequence:
    """Descending positive hub weights, normalised so that ``sum theta**2 == 1``."""

    theta: np.ndarray
    normalized: bool = True

    def __post_init__(self) -> None:
        th = np.asarray(self.theta, dtype=np.float64)
        if th.ndim != 1 or th.size == 0 or np.any(th <= 0):
            raise ParameterError("theta must be a non-empty positive vector")
        th = np.sort(th)[::-1].copy()
        if self.normalized:
            th = th / math.sqrt(math.fsum((th**2).tolist()))
        th.setflags(write=False)
        object.__setattr__(self, "theta", th)

    @property
    def K(self) -> int:
        return int(self.theta.size)

    @property
    def sum_sq(self) -> float:
        return math.fsum((self.theta**2).tolist())
