"""Finite measured metric spaces and the distances/functionals defined on them."""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import optimize
from scipy.sparse import csgraph

from .weights import ParameterError

__all__ = [
    "MeasuredMetricSpace",
    "SizeError",
    "graph_metric_space",
    "graph_distances_from",
    "scale",
    "distortion",
    "gh_exact",
    "gh_bounds",
    "ghp_upper",
    "polynomial_functional",
    "polynomial_functional_exact",
    "ball_cover_count",
    "dim_estimate",
    "typical_distance_sample",
    "write_space",
    "read_space",
]

GH_EXACT_MAX = 5
EXACT_COVER_MAX = 20


class SizeError(ParameterError):
    """Raised when an exact algorithm is asked to handle too many points."""


@dataclass(frozen=True, eq=False)
class MeasuredMetricSpace:
    """Finite metric space with a probability measure on its points.

    ``labels`` optionally records which original objects (e.g. graph vertices)
    the points stand for.
    """

    dist: np.ndarray
    mu: np.ndarray
    labels: np.ndarray | None = None
    check: bool = True

    def __post_init__(self) -> None:
        d = np.array(self.dist, dtype=np.float64)
        mu = np.array(self.mu, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or mu.shape != (d.shape[0],):
            raise ParameterError("distance matrix must be k x k with k masses")
        if self.check:
            _validate(d, mu)
        d.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "dist", d)
        object.__setattr__(self, "mu", mu)

    @property
    def k(self) -> int:
        return int(self.mu.size)

    @property
    def diameter(self) -> float:
        return float(self.dist.max()) if self.k else 0.0


def _validate(d: np.ndarray, mu: np.ndarray, rng_seed: int = 0) -> None:
    k = d.shape[0]
    scale_ = max(1.0, float(np.max(d))) if k else 1.0
    tol = 1e-9 * scale_
    if np.any(d < 0) or np.any(np.abs(np.diag(d)) > 0):
        raise ParameterError("distances must be non-negative with zero diagonal")
    if not np.allclose(d, d.T, atol=tol, rtol=0):
        raise ParameterError("distance matrix must be symmetric")
    if np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-9:
        raise ParameterError("mu must be a probability vector")
    if k <= 200:
        for j in range(k):
            # d[i,l] <= d[i,j] + d[j,l] for all i, l
            if np.any(d > d[:, j:j + 1] + d[j:j + 1, :] + tol):
                raise ParameterError("triangle inequality violated")
    else:
        rng = np.random.default_rng(rng_seed)
        i, j, l = rng.integers(0, k, size=(3, 10_000))
        if np.any(d[i, l] > d[i, j] + d[j, l] + tol):
            raise ParameterError("triangle inequality violated")


def graph_distances_from(adj, sources: np.ndarray) -> np.ndarray:
    """Unit-length shortest-path distances from ``sources`` to all vertices."""
    return csgraph.shortest_path(adj, method="D", unweighted=True, directed=False,
                                 indices=np.asarray(sources, dtype=np.int64))


def graph_metric_space(g, comp, mode: str = "exact", landmarks: int | None = None,
                       seed=None) -> MeasuredMetricSpace:
    """View a connected vertex set of ``g`` as a measured metric space.

    Edges have length one and ``mu(v)`` is proportional to the vertex weight.
    ``mode="landmarks"`` keeps only ``landmarks`` vertices drawn without
    replacement according to ``mu`` (renormalised over the kept points).
    """
    verts = np.asarray(getattr(comp, "vertices", comp), dtype=np.int64)
    verts = np.sort(verts)
    sub = g.adjacency[verts][:, verts]
    w = g.vertex_weights[verts]
    mu = w / w.sum()
    if mode == "exact":
        keep = np.arange(verts.size)
    elif mode == "landmarks":
        if landmarks is None or landmarks < 1:
            raise ParameterError("landmark mode needs a positive landmark count")
        rng = np.random.default_rng(seed)
        k = min(landmarks, verts.size)
        keep = np.sort(rng.choice(verts.size, size=k, replace=False, p=mu))
    else:
        raise ParameterError(f"unknown mode {mode!r}")
    d = graph_distances_from(sub, keep)
    if np.isinf(d).any():
        raise ParameterError("component is not connected in the graph")
    d = d[:, keep]
    m = mu[keep] / mu[keep].sum()
    return MeasuredMetricSpace(d, m, labels=verts[keep], check=keep.size <= 200)


def scale(space: MeasuredMetricSpace, factor: float) -> MeasuredMetricSpace:
    """Multiply every distance by ``factor``; the measure is unchanged."""
    if factor <= 0:
        raise ParameterError("scale factor must be positive")
    return MeasuredMetricSpace(space.dist * factor, space.mu, space.labels, check=False)


def distortion(X: MeasuredMetricSpace, Y: MeasuredMetricSpace,
               pairs: Sequence[tuple[int, int]]) -> float:
    """``sup |d_X(x,x') - d_Y(y,y')|`` over pairs of pairs of a relation."""
    if not pairs:
        return 0.0
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    return float(np.max(np.abs(X.dist[np.ix_(a, a)] - Y.dist[np.ix_(b, b)])))


def _is_correspondence(pairs, kx, ky) -> bool:
    return {p[0] for p in pairs} == set(range(kx)) and {p[1] for p in pairs} == set(range(ky))


def gh_exact(X: MeasuredMetricSpace, Y: MeasuredMetricSpace,
             root: tuple[int, int] | None = None) -> float:
    """Exact Gromov-Hausdorff distance for spaces with at most five points.

    Every correspondence contains the union of the graph of a map ``X -> Y`` and
    the transposed graph of a map ``Y -> X``, and that union is itself a
    correspondence with no larger distortion.  The search therefore branches on
    the images of the points one at a time, carrying the distortion of the pairs
    fixed so far (a lower bound for every completion) and pruning against the
    best complete correspondence found.  ``root`` forces a pair into the
    correspondence (pointed variant).
    """
    kx, ky = X.k, Y.k
    if kx > GH_EXACT_MAX or ky > GH_EXACT_MAX:
        raise SizeError(f"gh_exact handles at most {GH_EXACT_MAX} points; use gh_bounds")
    dx, dy = X.dist, Y.dist
    # decision variables: (side, point) -> partner
    slots = [(0, i) for i in range(kx)] + [(1, j) for j in range(ky)]
    best = [math.inf]
    fixed: list[tuple[int, int]] = []
    if root is not None:
        fixed.append((int(root[0]), int(root[1])))

    def extend_cost(pair, current):
        x, y = pair
        worst = current
        for (x2, y2) in fixed:
            diff = abs(dx[x, x2] - dy[y, y2])
            if diff > worst:
                worst = diff
                if worst >= best[0]:
                    return worst
        return worst

    def search(s, current):
        if current >= best[0]:
            return
        if s == len(slots):
            best[0] = current
            return
        side, pt = slots[s]
        options = range(ky) if side == 0 else range(kx)
        scored = []
        for o in options:
            pair = (pt, o) if side == 0 else (o, pt)
            scored.append((extend_cost(pair, current), pair))
        scored.sort()
        for cost, pair in scored:
            if cost >= best[0]:
                break
            fixed.append(pair)
            search(s + 1, cost)
            fixed.pop()

    search(0, 0.0)
    return 0.5 * best[0]


def _greedy_maps(X, Y, rng, identity=False):
    kx, ky = X.k, Y.k
    pairs: list[tuple[int, int]] = []
    if identity and kx == ky:
        return [(i, i) for i in range(kx)]
    cur = 0.0
    for side, order in ((0, rng.permutation(kx)), (1, rng.permutation(ky))):
        for pt in order:
            cands = range(ky) if side == 0 else range(kx)
            scores = []
            for o in cands:
                x, y = (pt, o) if side == 0 else (o, pt)
                worst = cur
                for (x2, y2) in pairs:
                    worst = max(worst, abs(X.dist[x, x2] - Y.dist[y, y2]))
                scores.append(worst)
            scores = np.array(scores)
            ties = np.flatnonzero(scores == scores.min())
            o = int(rng.choice(ties))
            pairs.append((int(pt), o) if side == 0 else (o, int(pt)))
            cur = float(scores.min())
    return sorted(set(pairs))


def _tv(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * float(np.abs(a - b).sum())


def _ghp_candidates(X, Y, pairs):
    """Best ``max(dis/2, D(pi), pi(C^c))`` over a few couplings for correspondence ``pairs``."""
    kx, ky = X.k, Y.k
    half_dis = 0.5 * distortion(X, Y, pairs)
    inC = np.zeros((kx, ky), dtype=bool)
    for x, y in pairs:
        inC[x, y] = True
    vals = []
    # push-forward couplings along a map contained in C
    fmap = {}
    gmap = {}
    for x, y in pairs:
        fmap.setdefault(x, y)
        gmap.setdefault(y, x)
    push = np.zeros(ky)
    for x in range(kx):
        push[fmap[x]] += X.mu[x]
    vals.append(max(half_dis, _tv(Y.mu, push), 0.0))
    pull = np.zeros(kx)
    for y in range(ky):
        pull[gmap[y]] += Y.mu[y]
    vals.append(max(half_dis, _tv(X.mu, pull), 0.0))
    # product coupling: exact marginals, mass outside C
    prod = np.outer(X.mu, Y.mu)
    vals.append(max(half_dis, 0.0, float(prod[~inC].sum())))
    # maximal sub-coupling supported on C, completed by the product of residuals
    idx = np.argwhere(inC)
    nvar = idx.shape[0]
    A = np.zeros((kx + ky, nvar))
    for v, (x, y) in enumerate(idx):
        A[x, v] = 1.0
        A[kx + y, v] = 1.0
    res = optimize.linprog(-np.ones(nvar), A_ub=A, b_ub=np.concatenate([X.mu, Y.mu]),
                           bounds=(0, None), method="highs")
    if res.success:
        pc = np.zeros((kx, ky))
        pc[idx[:, 0], idx[:, 1]] = res.x
        r1 = np.clip(X.mu - pc.sum(1), 0, None)
        r2 = np.clip(Y.mu - pc.sum(0), 0, None)
        rest = r1.sum()
        pi = pc + (np.outer(r1, r2) / rest if rest > 1e-15 else 0.0)
        disc = _tv(X.mu, pi.sum(1)) + _tv(Y.mu, pi.sum(0))
        vals.append(max(half_dis, disc, float(pi[~inC].sum())))
    return min(vals)


def ghp_upper(X: MeasuredMetricSpace, Y: MeasuredMetricSpace, trials: int = 20,
              seed=0) -> float:
    """Upper bound on the Gromov-Hausdorff-Prokhorov distance.

    Each trial builds a correspondence from randomised greedy maps in both
    directions and evaluates ``max(dis(C)/2, D(pi), pi(C^c))`` for several
    couplings ``pi``.  Trial ``k`` uses the generator seeded by ``(seed, k)``,
    so more trials can only lower the returned best-so-far value.  When both
    spaces have the same size the identity correspondence is tried first.
    """
    best = math.inf
    for k in range(max(1, trials)):
        rng = np.random.default_rng([int(seed), k])
        pairs = _greedy_maps(X, Y, rng, identity=(k == 0))
        best = min(best, _ghp_candidates(X, Y, pairs))
    return best


def gh_bounds(X: MeasuredMetricSpace, Y: MeasuredMetricSpace, trials: int = 20,
              seed=0) -> tuple[float, float]:
    """Cheap ``(lower, upper)`` bounds on d_GH for spaces of any size."""
    lower = 0.5 * abs(X.diameter - Y.diameter)
    upper = math.inf
    for k in range(max(1, trials)):
        rng = np.random.default_rng([int(seed), k])
        upper = min(upper, 0.5 * distortion(X, Y, _greedy_maps(X, Y, rng, identity=(k == 0))))
    return lower, upper


def polynomial_functional(space: MeasuredMetricSpace, ell: int,
                          phi: Callable[[np.ndarray], float], samples: int = 10_000,
                          seed=None, vectorized: bool = False) -> tuple[float, float]:
    """Monte-Carlo estimate and standard error of ``E phi(D(x_1..x_ell))``, ``x_i`` i.i.d. mu.

    With ``vectorized=True`` ``phi`` receives the whole ``(samples, ell, ell)``
    stack of distance matrices and must return one value per sample.
    """
    if ell < 2:
        raise ParameterError("ell must be at least 2")
    rng = np.random.default_rng(seed)
    cum = np.cumsum(space.mu)
    cum /= cum[-1]
    idx = np.searchsorted(cum, rng.random((samples, ell)), side="right")
    np.minimum(idx, space.k - 1, out=idx)
    D = space.dist[idx[:, :, None], idx[:, None, :]]
    if vectorized:
        vals = np.asarray(phi(D), dtype=np.float64)
    else:
        vals = np.array([phi(Dm) for Dm in D], dtype=np.float64)
    se = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.nan
    return float(vals.mean()), se


def polynomial_functional_exact(space: MeasuredMetricSpace, ell: int,
                                phi: Callable[[np.ndarray], float]) -> float:
    """Exact ``int phi(D) dmu^ell`` by enumerating all ``k**ell`` tuples."""
    total = 0.0
    for tup in itertools.product(range(space.k), repeat=ell):
        w = float(np.prod(space.mu[list(tup)]))
        if w:
            idx = np.array(tup)
            total += w * float(phi(space.dist[np.ix_(idx, idx)]))
    return total


def _ball_lists(space: MeasuredMetricSpace, delta: float) -> list[np.ndarray]:
    inside = space.dist < delta
    return [np.flatnonzero(row) for row in inside]


def _greedy_cover(balls: list[np.ndarray], k: int) -> int:
    uncovered = np.ones(k, dtype=bool)
    heap = [(-b.size, i) for i, b in enumerate(balls)]
    heapq.heapify(heap)
    left = k
    count = 0
    while left > 0:
        neg, i = heapq.heappop(heap)
        fresh = int(uncovered[balls[i]].sum())
        if fresh == -neg:
            uncovered[balls[i]] = False
            left -= fresh
            count += 1
        elif fresh > 0:
            heapq.heappush(heap, (-fresh, i))
    return count


def _exact_cover(balls: list[np.ndarray], k: int) -> int:
    masks = [sum(1 << int(j) for j in b) for b in balls]
    full = (1 << k) - 1
    covers_of = [[i for i in range(k) if masks[i] >> p & 1] for p in range(k)]

    def feasible(covered, depth):
        if covered == full:
            return True
        if depth == 0:
            return False
        # branch on the lowest uncovered point
        p = (~covered & (covered + 1)).bit_length() - 1
        return any(feasible(covered | masks[c], depth - 1) for c in covers_of[p])

    for r in range(1, k + 1):
        if feasible(0, r):
            return r
    return k


def ball_cover_count(space: MeasuredMetricSpace, delta: float, method: str = "greedy") -> int:
    """Number of open balls ``{y: d(x, y) < delta}`` (centred at points) used to cover.

    ``greedy`` repeatedly takes the ball covering most uncovered points (lowest
    index on ties) and is an upper bound on the minimum; ``exact`` solves the
    set-cover problem by iterative deepening for at most 20 points.
    """
    if delta <= 0:
        raise ParameterError("delta must be positive")
    balls = _ball_lists(space, delta)
    if method == "greedy":
        return _greedy_cover(balls, space.k)
    if method == "exact":
        if space.k > EXACT_COVER_MAX:
            raise SizeError(f"exact cover supports at most {EXACT_COVER_MAX} points")
        return _exact_cover(balls, space.k)
    raise ParameterError(f"unknown method {method!r}")


def dim_estimate(space: MeasuredMetricSpace, delta_grid: Sequence[float]
                 ) -> tuple[float, list[int]]:
    """Least-squares slope of ``log N(delta)`` against ``log(1/delta)``."""
    grid = np.asarray(sorted(set(float(d) for d in delta_grid)))
    if grid.size < 3 or np.any(grid <= 0):
        raise ParameterError("need at least three distinct positive radii")
    counts = [ball_cover_count(space, d) for d in grid]
    slope = float(np.polyfit(np.log(1.0 / grid), np.log(counts), 1)[0])
    return slope, counts


def typical_distance_sample(space: MeasuredMetricSpace, pairs: int, seed=None) -> np.ndarray:
    """Distances between ``pairs`` independent pairs of mu-distributed points."""
    if pairs < 1:
        raise ParameterError("pairs must be >= 1")
    rng = np.random.default_rng(seed)
    cum = np.cumsum(space.mu)
    cum /= cum[-1]
    idx = np.searchsorted(cum, rng.random((pairs, 2)), side="right")
    np.minimum(idx, space.k - 1, out=idx)
    return space.dist[idx[:, 0], idx[:, 1]]


def write_space(space: MeasuredMetricSpace, path: str | Path) -> None:
    """CSV: header ``# k=<k>``, then one row of distances per point plus its mass."""
    rows = [f"# k={space.k}"]
    for i in range(space.k):
        row = [repr(float(v)) for v in space.dist[i]] + [repr(float(space.mu[i]))]
        rows.append(",".join(row))
    Path(path).write_text("\n".join(rows) + "\n")


def read_space(path: str | Path) -> MeasuredMetricSpace:
    lines = [l for l in Path(path).read_text().splitlines() if l.strip()]
    k = int(lines[0].split("=")[1])
    data = np.array([[float(v) for v in l.split(",")] for l in lines[1:k + 1]])
    return MeasuredMetricSpace(data[:, :k], data[:, k])
