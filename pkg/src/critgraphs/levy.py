"""Event-exact Lévy-type paths, reflection, excursions and limit parameters.

After truncating ``c`` to finitely many terms the process

    V(s) = lam * s + sum_j (c_j 1{xi_j <= s} - c_j**2 s),   xi_j ~ Exp(c_j),

is a straight line of slope ``lam - sum_j c_j**2`` between jumps.  The
reflected process therefore only needs its value at the segment starts: it
moves with the drift while positive and sticks at zero while the drift is
negative.  Excursion endpoints, hitting times and running minima are computed
in closed form per segment; there is no time grid anywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .graphgen import _rng
from .weights import EntranceBoundary, ParameterError, ThetaSequence, entrance_boundary

__all__ = [
    "PiecewiseLinearPath",
    "ReflectedPath",
    "Excursion",
    "ExcursionSet",
    "build_levy_path",
    "reflect",
    "excursions",
    "largest_excursion_lengths",
    "component_limit_params",
    "zeta_series",
    "nr_limit_constants",
    "thinned_levy",
    "thinned_levy_hitting_times",
    "write_path_csv",
    "write_excursions_csv",
]


@dataclass(frozen=True, eq=False)
class PiecewiseLinearPath:
    """``start + drift * s + sum_{t_k <= s} size_k`` on ``[0, horizon]``."""

    drift: float
    times: np.ndarray
    sizes: np.ndarray
    index: np.ndarray
    horizon: float
    start: float = 0.0

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=np.float64)
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ParameterError("jump times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "sizes", np.asarray(self.sizes, dtype=np.float64))
        object.__setattr__(self, "index", np.asarray(self.index, dtype=np.int64))

    @property
    def n_jumps(self) -> int:
        return int(self.times.size)

    def value(self, s):
        s = np.asarray(s, dtype=np.float64)
        cum = np.concatenate([[0.0], np.cumsum(self.sizes)])
        k = np.searchsorted(self.times, s, side="right")
        return self.start + self.drift * s + cum[k]

    def events(self) -> tuple[np.ndarray, np.ndarray]:
        """Times ``0, t_1, ..., horizon`` and the (right-continuous) values there."""
        ts = np.concatenate([[0.0], self.times])
        if math.isfinite(self.horizon) and (ts.size == 1 or self.horizon > ts[-1]):
            ts = np.append(ts, self.horizon)
        return ts, self.value(ts)


@dataclass(frozen=True, eq=False)
class ReflectedPath:
    """``V - inf_{s' <= s} V`` stored by its value at the start of each segment."""

    path: PiecewiseLinearPath
    seg_start: np.ndarray
    seg_value: np.ndarray

    @property
    def drift(self) -> float:
        return self.path.drift

    def value(self, s):
        s = np.asarray(s, dtype=np.float64)
        k = np.searchsorted(self.seg_start, s, side="right") - 1
        v = self.seg_value[k] + self.drift * (s - self.seg_start[k])
        return np.maximum(v, 0.0)

    def running_min(self, s):
        return self.path.value(s) - self.value(s)


@dataclass(frozen=True)
class Excursion:
    start: float
    end: float
    jump_indices: tuple[int, ...]
    complete: bool = True

    @property
    def length(self) -> float:
        return self.end - self.start


class ExcursionSet(list):
    """Complete excursions sorted by length (ties by start); clipped ones kept aside."""

    def __init__(self, complete, incomplete=()):
        super().__init__(sorted(complete, key=lambda e: (-e.length, e.start)))
        self.incomplete = list(incomplete)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([e.length for e in self])


def _sorted_jumps(xi: np.ndarray, c: np.ndarray, horizon: float):
    keep = np.flatnonzero(xi <= horizon)
    order = keep[np.argsort(xi[keep], kind="stable")]
    times = xi[order].copy()
    # exact ties have probability zero; separate them deterministically
    for k in range(1, times.size):
        if times[k] <= times[k - 1]:
            times[k] = np.nextafter(times[k - 1], np.inf)
    return times, c[order], order


def build_levy_path(c: EntranceBoundary, lam: float, horizon: float, seed) -> PiecewiseLinearPath:
    """Truncated ``V^c_lam`` with jumps ``c_j`` at independent ``Exp(c_j)`` times.

    The exponential for index ``j`` is ``-log(U_j) / c_j`` with ``U`` a single
    uniform stream, so paths for different truncations share their clocks.
    ``horizon`` may be ``inf``.
    """
    if not horizon > 0:
        raise ParameterError("horizon must be positive")
    cv = c.c if isinstance(c, EntranceBoundary) else np.asarray(c, dtype=np.float64)
    rng = _rng(seed)
    xi = -np.log1p(-rng.random(cv.size)) / cv
    drift = lam - math.fsum((cv**2).tolist())
    times, sizes, idx = _sorted_jumps(xi, cv, horizon)
    return PiecewiseLinearPath(drift, times, sizes, idx, horizon)


@numba.njit(cache=True)
def _reflect_core(times, sizes, d, start):
    K = times.size
    seg_start = np.empty(K + 1)
    seg_value = np.empty(K + 1)
    seg_start[0] = 0.0
    R = max(start, 0.0)
    seg_value[0] = R
    s0 = 0.0
    for k in range(K):
        if d != 0.0:
            R = max(R + d * (times[k] - s0), 0.0)
        R += sizes[k]
        s0 = times[k]
        seg_start[k + 1] = s0
        seg_value[k + 1] = R
    return seg_start, seg_value


def reflect(path) -> ReflectedPath:
    """Reflect at the running minimum (the running minimum of a path starting at 0 is <= 0).

    Reflecting an already reflected path returns an identical copy, since a
    non-negative path started at zero has running minimum zero.
    """
    if isinstance(path, ReflectedPath):
        return ReflectedPath(path.path, path.seg_start.copy(), path.seg_value.copy())
    if path.start != 0.0:
        raise ParameterError("reflection is defined for paths started at zero")
    ss, sv = _reflect_core(path.times, path.sizes, path.drift, 0.0)
    return ReflectedPath(path, ss, sv)


@numba.njit(cache=True)
def _excursion_core(times, sizes, d, horizon):
    K = times.size
    starts = np.empty(K + 1)
    ends = np.empty(K + 1)
    first = np.empty(K + 1, dtype=np.int64)
    last = np.empty(K + 1, dtype=np.int64)
    complete = np.empty(K + 1, dtype=np.bool_)
    n = 0
    R = 0.0
    s0 = 0.0
    in_exc = d > 0.0
    st = 0.0
    f = 0
    for k in range(K + 1):
        tend = times[k] if k < K else horizon
        if in_exc and d != 0.0:
            if d < 0.0 and (tend == np.inf or R + d * (tend - s0) <= 0.0):
                starts[n] = st
                ends[n] = s0 + R / (-d)
                first[n] = f
                last[n] = k
                complete[n] = True
                n += 1
                in_exc = False
                R = 0.0
            else:
                R = R + d * (tend - s0)
        if k == K:
            break
        if not in_exc:
            in_exc = True
            st = times[k]
            f = k
            R = sizes[k]
        else:
            R += sizes[k]
        s0 = times[k]
    if in_exc:
        starts[n] = st
        ends[n] = horizon
        first[n] = f
        last[n] = K
        complete[n] = False
        n += 1
    return starts[:n], ends[:n], first[:n], last[:n], complete[:n]


def excursions(refl: ReflectedPath | PiecewiseLinearPath) -> ExcursionSet:
    """Maximal intervals on which the reflected path is positive.

    An excursion starts at a jump from zero (or at time 0 under positive drift)
    and ends when the path returns to zero on a decreasing segment.  Intervals
    still open at the horizon are flagged incomplete and left out of the ranking.
    """
    path = refl.path if isinstance(refl, ReflectedPath) else path_check(refl)
    s, e, f, l, ok = _excursion_core(path.times, path.sizes, path.drift, path.horizon)
    done, open_ = [], []
    for k in range(s.size):
        ex = Excursion(float(s[k]), float(e[k]),
                       tuple(int(j) for j in path.index[f[k]:l[k]]), bool(ok[k]))
        (done if ok[k] else open_).append(ex)
    return ExcursionSet(done, open_)


def path_check(path: PiecewiseLinearPath) -> PiecewiseLinearPath:
    if path.start != 0.0:
        raise ParameterError("excursions are defined for paths started at zero")
    return path


def largest_excursion_lengths(c: EntranceBoundary | np.ndarray, lam: float, replicas: int,
                              seed, k: int = 1, horizon: float = math.inf) -> np.ndarray:
    """``(replicas, k)`` array of the ``k`` longest complete excursion lengths.

    Replica ``r`` uses the generator seeded by ``(seed, r)``; missing ranks are 0.
    """
    out = np.zeros((replicas, k))
    for r in range(replicas):
        path = build_levy_path(c, lam, horizon, np.random.default_rng([seed, r]))
        s, e, _, _, ok = _excursion_core(path.times, path.sizes, path.drift, path.horizon)
        lens = np.sort((e - s)[ok])[::-1][:k]
        out[r, :lens.size] = lens
    return out


def component_limit_params(exc: Excursion, c: EntranceBoundary | np.ndarray
                           ) -> tuple[float, ThetaSequence, float]:
    """``(gamma_bar, theta, Gamma)`` of one excursion.

    With ``s2`` the sum of the squared jumps inside the excursion and ``Z`` its
    length: ``gamma_bar = Z sqrt(s2)``, ``theta = sorted jumps / sqrt(s2)`` and
    ``Gamma = Z / sqrt(s2)``.
    """
    if not exc.complete:
        raise ParameterError("excursion is clipped by the horizon")
    if not exc.jump_indices:
        raise ParameterError("excursion contains no jumps")
    cv = c.c if isinstance(c, EntranceBoundary) else np.asarray(c, dtype=np.float64)
    jumps = cv[list(exc.jump_indices)]
    s = math.sqrt(math.fsum((jumps**2).tolist()))
    Z = exc.length
    return Z * s, ThetaSequence(jumps / s, normalized=False), Z / s


def zeta_series(beta: float, N: int = 100_000) -> float:
    """``sum_{i>=1} [int_{i-1}^i u^-beta du - i^-beta]`` for ``0 < beta < 1``.

    The first ``N`` terms are summed as ``N^(1-beta)/(1-beta) - sum_{i<=N} i^-beta``
    (compensated summation); the remainder is added from its Euler-Maclaurin
    expansion ``N^-b/2 - b N^(-b-1)/12 + b(b+1)(b+2) N^(-b-3)/720``, whose error
    is below ``N^(-beta-5)``.
    """
    if not 0 < beta < 1:
        raise ParameterError("beta must lie in (0, 1)")
    i = np.arange(1, N + 1, dtype=np.float64)
    head = N ** (1 - beta) / (1 - beta) - math.fsum((i ** (-beta)).tolist())
    b = beta
    tail = N ** (-b) / 2 - b * N ** (-b - 1) / 12 + b * (b + 1) * (b + 2) * N ** (-b - 3) / 720
    return head + tail


def nr_limit_constants(tau: float, c_F: float, mean_W: float, lam: float, J: int = 10_000
                       ) -> tuple[EntranceBoundary, float, float]:
    """``(c_nr, zeta, t_nr)`` for the rank-one model.

    ``c_nr_j = (c_F / j)^(1/(tau-1)) / E W``; ``zeta = -(c_F^(2/(tau-1)) / E W)``
    times :func:`zeta_series` at ``beta = 2/(tau-1)``; ``t_nr = (lam + zeta) / E W``.
    """
    if not 3 < tau < 4:
        raise ParameterError("tau must lie in (3, 4)")
    alpha = c_F ** (1.0 / (tau - 1.0)) / mean_W
    c = entrance_boundary(alpha, tau, J)
    zeta = -(c_F ** (2.0 / (tau - 1.0)) / mean_W) * zeta_series(2.0 / (tau - 1.0))
    return c, zeta, (lam + zeta) / mean_W


@numba.njit(cache=True)
def _first_hit(times, sizes, d, start, horizon):
    V = start
    s0 = 0.0
    K = times.size
    for k in range(K + 1):
        tend = times[k] if k < K else horizon
        if V <= 0.0 and d <= 0.0:
            return s0
        if d < 0.0 and (tend == np.inf or V + d * (tend - s0) <= 0.0):
            return s0 + V / (-d)
        if k == K:
            break
        V += d * (tend - s0) + sizes[k]
        s0 = tend
    return np.nan


def _thinned_setup(i, a, b, c_const, tau, J_thin):
    if not 3 < tau < 4:
        raise ParameterError("tau must lie in (3, 4)")
    j = np.arange(1, J_thin + 1, dtype=np.float64)
    j = j[j != i]
    scale = j ** (-1.0 / (tau - 1.0))
    sizes = b * scale
    rates = a * scale
    drift = -a * b + c_const - a * b * math.fsum((scale**2).tolist())
    return j.astype(np.int64), sizes, rates, drift


def thinned_levy(i: int, a: float, b: float, c_const: float, horizon: float, seed,
                 tau: float = 3.5, J_thin: int = 10_000
                 ) -> tuple[PiecewiseLinearPath, float | None]:
    """Truncated thinned Lévy path and its first time ``t > 0`` at or below zero.

    ``S(t) = b - a b t + c t + sum_{j != i, j <= J} b j^-al (I_j(t) - a t j^-al)``
    with ``al = 1/(tau-1)`` and ``I_j`` switching on at an ``Exp(a j^-al)`` time.
    """
    if not horizon > 0:
        raise ParameterError("horizon must be positive")
    idx, sizes, rates, drift = _thinned_setup(i, a, b, c_const, tau, J_thin)
    rng = _rng(seed)
    T = -np.log1p(-rng.random(rates.size)) / rates
    times, sz, order = _sorted_jumps(T, sizes, horizon)
    path = PiecewiseLinearPath(drift, times, sz, idx[order], horizon, start=b)
    H = _first_hit(times, sz, drift, b, horizon)
    return path, (None if math.isnan(H) else float(H))


@numba.njit(cache=True)
def _hits_batch(U, rates, sizes, d, start, horizon):
    B = U.shape[0]
    out = np.empty(B)
    for r in range(B):
        T = -np.log1p(-U[r]) / rates
        keep = np.flatnonzero(T <= horizon)
        o = keep[np.argsort(T[keep])]
        out[r] = _first_hit(T[o], sizes[o], d, start, horizon)
    return out


def thinned_levy_hitting_times(paths: int, i: int, a: float, b: float, c_const: float,
                               horizon: float, seed, tau: float = 3.5, J_thin: int = 1000,
                               chunk: int = 2000) -> np.ndarray:
    """Hitting times of zero for ``paths`` independent truncated paths (``nan`` = not hit)."""
    idx, sizes, rates, drift = _thinned_setup(i, a, b, c_const, tau, J_thin)
    rng = _rng(seed)
    out = []
    for s in range(0, paths, chunk):
        U = rng.random((min(chunk, paths - s), rates.size))
        out.append(_hits_batch(U, rates, sizes, drift, b, horizon))
    return np.concatenate(out)


def write_path_csv(path: PiecewiseLinearPath, file: str | Path) -> None:
    ts, vs = path.events()
    rows = ["time,value"] + [f"{t!r},{v!r}" for t, v in zip(ts.tolist(), vs.tolist())]
    Path(file).write_text("\n".join(rows) + "\n")


def write_excursions_csv(exc: ExcursionSet, file: str | Path) -> None:
    rows = ["rank,start,end,length,n_jumps"]
    for r, e in enumerate(exc, 1):
        rows.append(f"{r},{e.start!r},{e.end!r},{e.length!r},{len(e.jump_indices)}")
    Path(file).write_text("\n".join(rows) + "\n")
