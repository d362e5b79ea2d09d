"""Size-biased breadth-first exploration of ``G_n(x, t)``.

Exploring vertex ``v`` takes ``x_v`` units of time.  Every not yet discovered
vertex ``u`` carries a clock ``eta_{v,u} ~ Exp(t x_u)`` and becomes a child of
``v`` when the clock rings before ``x_v``, which happens with probability
``1 - exp(-t x_u x_v)``.  The clocks of all undiscovered vertices together
form a Poisson process on ``[0, x_v]`` with total rate ``t * (undiscovered
mass)`` whose marks are drawn proportionally to ``x``; a vertex's first mark
is its clock.  We therefore draw ``Poisson(t x_v * mass)`` marks with uniform
times from a Fenwick tree over the undiscovered weights and keep the earliest
mark per vertex.  The children enter the queue in order of their clocks.

The walk starts at 0, decreases at unit speed and jumps by ``x_u`` when ``u``
is discovered; a component explored over ``[T_{i-1}, T_j]`` ends with the walk
``x_root`` below where it started and never lower in between.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .graphgen import Component
from .seeding import kernel_seed
from .weights import ParameterError, WeightSequence

__all__ = ["WalkTrace", "explore", "sum_squares_process", "rescaled_walk",
           "largest_masses", "write_walk_csv"]


@numba.njit(cache=True)
def _fen_build(x):
    n = x.size
    tree = np.zeros(n + 1)
    for i in range(n):
        j = i + 1
        tree[j] += x[i]
        k = j + (j & -j)
        if k <= n:
            tree[k] += tree[j]
    return tree


@numba.njit(cache=True)
def _fen_add(tree, i, delta):
    j = i + 1
    n = tree.size - 1
    while j <= n:
        tree[j] += delta
        j += j & -j


@numba.njit(cache=True)
def _fen_find(tree, target, top):
    pos = 0
    step = top
    n = tree.size - 1
    while step > 0:
        nxt = pos + step
        if nxt <= n and tree[nxt] < target:
            pos = nxt
            target -= tree[nxt]
        step >>= 1
    return min(pos, n - 1)


@numba.njit(cache=True)
def _explore_core(x, t, seed, stop_dominated):
    np.random.seed(seed)
    n = x.size
    tree = _fen_build(x)
    top = 1
    while top * 2 <= n:
        top *= 2
    alive = np.ones(n, dtype=np.bool_)
    rem = 0.0
    for i in range(n):
        rem += x[i]
    order = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    hit_time = np.full(n, np.inf)
    hits = np.empty(n, dtype=np.int64)
    ev_time = np.empty(n)
    ev_vert = np.empty(n, dtype=np.int64)
    comp_first = np.empty(n + 1, dtype=np.int64)
    n_ev = 0
    n_exp = 0
    n_comp = 0
    T = 0.0
    best = 0.0
    qh = 0
    qt = 0
    while rem > 0.0 and n_exp < n:
        # size-biased root among undiscovered vertices
        r = -1
        while r < 0:
            cand = _fen_find(tree, np.random.random() * rem, top)
            if alive[cand]:
                r = cand
        alive[r] = False
        _fen_add(tree, r, -x[r])
        rem -= x[r]
        comp_first[n_comp] = n_exp
        n_comp += 1
        start = T
        queue[qt] = r
        qt += 1
        while qh < qt:
            v = queue[qh]
            qh += 1
            order[n_exp] = v
            n_exp += 1
            nh = 0
            if rem > 0.0:
                k = np.random.poisson(t * x[v] * rem)
                for _ in range(k):
                    u = _fen_find(tree, np.random.random() * rem, top)
                    if not alive[u]:
                        continue
                    s = np.random.random() * x[v]
                    if hit_time[u] == np.inf:
                        hits[nh] = u
                        nh += 1
                    if s < hit_time[u]:
                        hit_time[u] = s
            if nh > 0:
                ts = np.empty(nh)
                for h in range(nh):
                    ts[h] = hit_time[hits[h]]
                srt = np.argsort(ts)
                for h in range(nh):
                    u = hits[srt[h]]
                    alive[u] = False
                    _fen_add(tree, u, -x[u])
                    rem -= x[u]
                    queue[qt] = u
                    qt += 1
                    ev_time[n_ev] = T + hit_time[u]
                    ev_vert[n_ev] = u
                    n_ev += 1
                    hit_time[u] = np.inf
            T += x[v]
        if rem < 0.0:
            rem = 0.0
        mass = T - start
        if mass > best:
            best = mass
        if stop_dominated and rem < best:
            break
    comp_first[n_comp] = n_exp
    return order[:n_exp], comp_first[:n_comp + 1], ev_time[:n_ev], ev_vert[:n_ev]


@dataclass
class WalkTrace:
    """Result of one exploration.

    ``order`` lists explored vertices, ``T[i]`` is the weight explored after
    ``order[i]``; ``comp_first`` holds the index in ``order`` at which each
    component starts (with a final sentinel).  ``event_times`` / ``event_sizes``
    are the walk's jumps; ``complete`` is False when the exploration was cut
    short once the unexplored mass could no longer beat the largest component.
    """

    x: np.ndarray
    order: np.ndarray
    T: np.ndarray
    comp_first: np.ndarray
    event_times: np.ndarray
    event_sizes: np.ndarray
    complete: bool

    @property
    def n_components(self) -> int:
        return int(self.comp_first.size - 1)

    @property
    def comp_intervals(self) -> np.ndarray:
        """``(k, 2)`` array of ``[T_{i-1}, T_j]`` per component in discovery order."""
        T0 = np.concatenate([[0.0], self.T])
        return np.stack([T0[self.comp_first[:-1]], T0[self.comp_first[1:]]], axis=1)

    @property
    def excursion_lengths(self) -> np.ndarray:
        iv = self.comp_intervals
        return iv[:, 1] - iv[:, 0]

    def walk(self, s):
        """``Z(s) = -s + sum of jumps at times <= s``."""
        s = np.asarray(s, dtype=np.float64)
        cum = np.concatenate([[0.0], np.cumsum(self.event_sizes)])
        return -s + cum[np.searchsorted(self.event_times, s, side="right")]

    def events(self) -> tuple[np.ndarray, np.ndarray]:
        """Times ``T_i`` and jump times merged, with walk values there."""
        ts = np.unique(np.concatenate([[0.0], self.T, self.event_times]))
        return ts, self.walk(ts)


def explore(x: WeightSequence | np.ndarray, t: float, seed, stop_dominated: bool = False
            ) -> tuple[WalkTrace, list[Component]]:
    """Explore ``G_n(x, t)``; return the walk trace and components sorted by mass.

    Components are ranked by mass (descending) with ties broken by smallest
    vertex.  With ``stop_dominated`` the exploration stops once the unexplored
    mass is below the largest component found, which leaves the largest
    component (and its mass) exact.
    """
    if not t > 0:
        raise ParameterError("t must be positive")
    xv = x.values if isinstance(x, WeightSequence) else np.asarray(x, dtype=np.float64)
    order, cf, et, ev = _explore_core(xv, float(t), kernel_seed(seed), stop_dominated)
    T = np.cumsum(xv[order])
    trace = WalkTrace(xv, order, T, cf, et, xv[ev], order.size == xv.size)
    comps = []
    for part in np.split(order, cf[1:-1]):
        verts = np.sort(part)
        comps.append(Component(tuple(verts.tolist()), float(xv[verts].sum())))
    comps.sort(key=lambda c: (-c.mass, c.vertices[0]))
    return trace, comps



def largest_masses(x: WeightSequence | np.ndarray, t: float, replicas: int, seed) -> np.ndarray:
    """Largest component mass for ``replicas`` explorations seeded ``(seed, r)``."""
    xv = x.values if isinstance(x, WeightSequence) else np.asarray(x, dtype=np.float64)
    out = np.empty(replicas)
    for r in range(replicas):
        order, cf, _, _ = _explore_core(xv, float(t), kernel_seed([seed, r]), True)
        T0 = np.concatenate([[0.0], np.cumsum(xv[order])])
        out[r] = np.max(T0[cf[1:]] - T0[cf[:-1]])
    return out


def sum_squares_process(trace: WalkTrace, epsilon: float, sigma2: float | None = None
                        ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(T, S, R)``: after exploring ``order[i]`` the normalised sum of squared weights ``S``
    and its part ``R`` from vertices lighter than ``epsilon * sigma2``."""
    s2 = float(np.sum(trace.x**2)) if sigma2 is None else sigma2
    w = trace.x[trace.order]
    sq = (w / s2) ** 2
    S = np.cumsum(sq)
    R = np.cumsum(np.where(w < s2 * epsilon, sq, 0.0))
    return trace.T.copy(), S, R


def rescaled_walk(trace: WalkTrace, sigma2: float) -> tuple[np.ndarray, np.ndarray]:
    """Event times and walk values divided by ``sigma2``."""
    if not sigma2 > 0:
        raise ParameterError("sigma2 must be positive")
    ts, vs = trace.events()
    return ts, vs / sigma2


def write_walk_csv(trace: WalkTrace, path: str | Path) -> None:
    ts, vs = trace.events()
    T0 = np.concatenate([[0.0], trace.T])
    starts = T0[trace.comp_first[:-1]]
    cid = np.maximum(np.searchsorted(starts, ts, side="right") - 1, 0)
    rows = ["explored_weight,walk_value,component_id"]
    rows += [f"{t!r},{v!r},{c}" for t, v, c in zip(ts.tolist(), vs.tolist(), cid.tolist())]
    Path(path).write_text("\n".join(rows) + "\n")
