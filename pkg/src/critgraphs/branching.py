"""Size-biased laws, mixed-Poisson branching processes and the Otter-Dwass formula."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numba
import numpy as np
from scipy import stats

from .graphgen import _rng
from .seeding import kernel_seed
from .weights import ParameterError, critical_iota, power_law_weights

__all__ = [
    "DiscreteDistribution",
    "BranchingTree",
    "size_biased",
    "poisson_offspring",
    "critical_power_law_mix",
    "ParetoMix",
    "size_biased_power_law",
    "sample_mixed_poisson_bp",
    "generation_sizes",
    "total_progeny",
    "otter_dwass_pmf",
    "height_tail",
    "write_tail_csv",
]


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Finite distribution on non-negative values (atoms may repeat)."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        p = np.asarray(self.probs, dtype=np.float64)
        if v.ndim != 1 or v.shape != p.shape or v.size == 0:
            raise ParameterError("values and probs must be matching non-empty vectors")
        if np.any(v < 0) or np.any(p < 0):
            raise ParameterError("values and probabilities must be non-negative")
        if abs(p.sum() - 1.0) > 1e-12 * max(1, v.size):
            raise ParameterError("probabilities must sum to one")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, atoms: Sequence[float]) -> "DiscreteDistribution":
        a = np.asarray(atoms, dtype=np.float64)
        return cls(a, np.full(a.size, 1.0 / a.size))

    @classmethod
    def point(cls, value: float) -> "DiscreteDistribution":
        return cls(np.array([float(value)]), np.array([1.0]))

    @property
    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def moment(self, r: float) -> float:
        return float(np.dot(self.values**r, self.probs))

    def prob_of(self, x: float) -> float:
        return float(self.probs[self.values == x].sum())

    @property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.probs)
        return c / c[-1]

    def sample(self, size, seed=None) -> np.ndarray:
        u = _rng(seed).random(size)
        idx = np.minimum(np.searchsorted(self.cdf, u, side="right"), self.values.size - 1)
        return self.values[idx]


def size_biased(d: DiscreteDistribution) -> DiscreteDistribution:
    """``P(X° = x) = x P(X = x) / E X``."""
    m = d.mean
    if not m > 0:
        raise ParameterError("size-biasing needs a positive mean")
    return DiscreteDistribution(d.values, d.values * d.probs / m)


def poisson_offspring(mean: float, kmax: int | None = None) -> tuple[np.ndarray, float]:
    """Poisson pmf on ``0..kmax`` and the mass beyond ``kmax``."""
    if kmax is None:
        kmax = int(mean + 20 * math.sqrt(mean + 1) + 20)
    k = np.arange(kmax + 1)
    pmf = stats.poisson.pmf(k, mean)
    return pmf, float(stats.poisson.sf(kmax, mean))


def critical_power_law_mix(n: int, tau: float, iota: float | None = None,
                           exact_mean: bool = True) -> DiscreteDistribution:
    """Size-biased version of the uniform law on the ``n`` power-law weight atoms.

    With ``exact_mean`` the atoms are rescaled so that the mean is exactly one;
    otherwise the truncation of the atoms at ``n`` leaves a mean slightly below 1.
    """
    iota = critical_iota(tau) if iota is None else iota
    w = power_law_weights(n, tau, iota).values
    sb = size_biased(DiscreteDistribution.uniform(w))
    if exact_mean:
        sb = DiscreteDistribution(sb.values / sb.mean, sb.probs)
    return sb


@dataclass(frozen=True)
class ParetoMix:
    """Continuous law ``iota * U**(-1/shape)`` (tail ``(iota/x)**shape`` on ``[iota, inf)``)."""

    iota: float
    shape: float

    def __post_init__(self) -> None:
        if self.iota <= 0 or self.shape <= 1:
            raise ParameterError("need iota > 0 and shape > 1 (finite mean)")

    @property
    def mean(self) -> float:
        return self.iota * self.shape / (self.shape - 1.0)

    def sample(self, size, seed=None) -> np.ndarray:
        u = _rng(seed).random(size)
        return self.iota * (1.0 - u) ** (-1.0 / self.shape)


def size_biased_power_law(tau: float, iota: float | None = None) -> ParetoMix:
    """Size-biased exact power law: ``x f(x) / E W`` is Pareto with shape ``tau - 2``.

    At the critical scale ``iota = (tau-3)/(tau-2)`` its mean is exactly one.
    This is the ``n -> infinity`` limit of :func:`critical_power_law_mix`
    without the truncation of the largest atom.
    """
    iota = critical_iota(tau) if iota is None else iota
    return ParetoMix(iota, tau - 2.0)


def _mix_args(mix):
    if isinstance(mix, ParetoMix):
        return 1, np.zeros(1), np.zeros(1), mix.iota, mix.shape
    return 0, mix.cdf, mix.values, 0.0, 1.0


@dataclass
class BranchingTree:
    """Generation sizes and, per generation, the parent index of each individual."""

    generation_sizes: list[int]
    parents: list[np.ndarray]
    truncated: bool

    @property
    def height(self) -> int:
        return len(self.generation_sizes) - 1

    @property
    def total(self) -> int:
        return int(sum(self.generation_sizes))


def sample_mixed_poisson_bp(offspring_mix: DiscreteDistribution | ParetoMix,
                            root_mix: DiscreteDistribution | ParetoMix | None, max_gen: int, seed,
                            max_size: int = 10_000_000) -> BranchingTree:
    """Branching process where an individual draws ``W`` from its mix and has
    ``Poisson(W)`` children; the root uses ``root_mix`` (default: ``offspring_mix``).

    Generations beyond ``max_gen`` are not generated; ``truncated`` records
    that generation ``max_gen`` was non-empty (or the size cap was hit).
    """
    if max_gen < 0:
        raise ParameterError("max_gen must be >= 0")
    rng = _rng(seed)
    root_mix = offspring_mix if root_mix is None else root_mix
    sizes = [1]
    parents = [np.array([-1])]
    current = 1
    total = 1
    for g in range(max_gen):
        mix = root_mix if g == 0 else offspring_mix
        W = mix.sample(current, rng)
        kids = rng.poisson(W)
        nxt = int(kids.sum())
        if nxt == 0:
            return BranchingTree(sizes, parents, False)
        parents.append(np.repeat(np.arange(current), kids))
        sizes.append(nxt)
        current = nxt
        total += nxt
        if total > max_size:
            return BranchingTree(sizes, parents, True)
    return BranchingTree(sizes, parents, True)


@numba.njit(cache=True)
def _sum_mix(mode, cdf, values, iota, shape, count):
    s = 0.0
    if mode == 1:
        inv = -1.0 / shape
        for _ in range(count):
            s += iota * (1.0 - np.random.random()) ** inv
        return s
    K = values.size
    for _ in range(count):
        j = np.searchsorted(cdf, np.random.random(), side="right")
        if j >= K:
            j = K - 1
        s += values[j]
    return s


@numba.njit(cache=True)
def _gen_sizes_batch(mo, cdf_o, val_o, io_o, sh_o, mr, cdf_r, val_r, io_r, sh_r,
                     max_gen, replicas, seed, cap):
    np.random.seed(seed)
    height = np.zeros(replicas, dtype=np.int64)
    total = np.zeros(replicas, dtype=np.int64)
    for r in range(replicas):
        z = 1
        tot = 1
        h = 0
        for g in range(max_gen):
            if g == 0:
                lam = _sum_mix(mr, cdf_r, val_r, io_r, sh_r, z)
            else:
                lam = _sum_mix(mo, cdf_o, val_o, io_o, sh_o, z)
            z = np.random.poisson(lam) if lam > 0 else 0
            if z == 0:
                break
            h = g + 1
            tot += z
            if tot > cap:
                tot = cap + 1
                break
        height[r] = h
        total[r] = tot
    return height, total


def generation_sizes(offspring_mix: DiscreteDistribution,
                     root_mix: DiscreteDistribution | None, max_gen: int, replicas: int,
                     seed, cap: int = 10**9) -> tuple[np.ndarray, np.ndarray]:
    """``(height, total)`` of ``replicas`` independent trees, up to ``max_gen`` generations.

    The next generation size is ``Poisson(sum of current-size draws of the mix)``,
    which has the same law as summing independent mixed-Poisson offspring
    counts.  Totals above ``cap`` are reported as ``cap + 1``.
    """
    root_mix = offspring_mix if root_mix is None else root_mix
    return _gen_sizes_batch(*_mix_args(offspring_mix), *_mix_args(root_mix), int(max_gen),
                            int(replicas), kernel_seed(seed), int(cap))


def total_progeny(offspring_mix: DiscreteDistribution, replicas: int, seed,
                  cap: int = 100_000) -> np.ndarray:
    """Total progeny of ``replicas`` trees (``cap + 1`` marks a capped tree)."""
    _, tot = generation_sizes(offspring_mix, None, cap, replicas, seed, cap)
    return tot


def otter_dwass_pmf(offspring, k: int, return_deficit: bool = False):
    """``P(|T| = k) = P(X_1 + ... + X_k = k - 1) / k`` for an integer offspring law.

    ``offspring`` is either a pmf array on ``0, 1, 2, ...`` or a
    :class:`DiscreteDistribution` with integer values.  The ``k``-fold
    convolution is truncated at ``k - 1`` (higher coefficients are irrelevant);
    the reported deficit is the mass missing from the supplied pmf.
    """
    if k < 1:
        raise ParameterError("k must be >= 1")
    if isinstance(offspring, DiscreteDistribution):
        vals = offspring.values
        if np.any(vals != np.round(vals)):
            raise ParameterError("offspring law must be integer valued")
        pmf = np.bincount(vals.astype(np.int64), weights=offspring.probs)
    else:
        pmf = np.asarray(offspring, dtype=np.float64)
    deficit = max(0.0, 1.0 - float(pmf.sum()))
    L = k  # coefficients 0..k-1
    base = np.zeros(L)
    base[:min(L, pmf.size)] = pmf[:L]
    result = np.zeros(L)
    result[0] = 1.0
    e = k
    while e:
        if e & 1:
            result = np.convolve(result, base)[:L]
        e >>= 1
        if e:
            base = np.convolve(base, base)[:L]
    val = float(result[k - 1] / k)
    return (val, deficit) if return_deficit else val


def height_tail(offspring_mix: DiscreteDistribution, m_values: Sequence[int], replicas: int,
                seed, root_mix: DiscreteDistribution | None = None
                ) -> list[tuple[int, float, float]]:
    """``(m, P_hat(height >= m), stderr)`` from ``replicas`` simulated trees."""
    ms = [int(m) for m in m_values]
    height, _ = generation_sizes(offspring_mix, root_mix, max(ms) if ms else 0, replicas, seed)
    out = []
    for m in ms:
        p = float(np.mean(height >= m))
        out.append((m, p, math.sqrt(p * (1 - p) / replicas)))
    return out


def write_tail_csv(rows, path: str | Path) -> None:
    lines = ["m,p_hat,stderr"] + [f"{m},{p!r},{s!r}" for m, p, s in rows]
    Path(path).write_text("\n".join(lines) + "\n")
