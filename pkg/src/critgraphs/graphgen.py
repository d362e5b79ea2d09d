"""Random graph generation, component decomposition and conditioned sampling.

Edge sampler
------------
Both the rank-one graph and the multiplicative-coalescent graph connect ``i != j``
independently with probability ``1 - exp(-kappa * a_i * a_j)``.  Instead of
visiting all pairs we throw ``M ~ Poisson(kappa * S**2 / 2)`` ordered endpoint
pairs, each endpoint drawn independently with probability ``a_i / S`` where
``S = sum(a)``.  By Poisson colouring, the number of throws landing on the
unordered pair ``{i, j}`` is ``Poisson(kappa * a_i * a_j)``, independently over
pairs, so the pair is hit at least once with exactly the target probability.
Self-pairs and repeated hits are discarded.  The cost is ``O(n + M log n)``
with ``M`` of the order of the number of edges.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numba
import numpy as np
from scipy import integrate, sparse
from scipy.stats import poisson

from .weights import ParameterError, WeightSequence, critical_window

__all__ = [
    "SimpleGraph",
    "Component",
    "UnionFind",
    "RejectionError",
    "sample_mc_graph",
    "sample_nr_graph",
    "sample_product_graph",
    "component_labels",
    "components",
    "largest_component",
    "sample_connected_conditioned",
    "sample_connected_conditioned_codes",
    "pair_index",
    "connected_mask",
    "degree_histogram",
    "mixed_poisson_degree_pmf",
    "write_graph",
    "read_graph",
]


@dataclass(frozen=True, eq=False)
class SimpleGraph:
    """Vertex-weighted simple graph on ``0..n-1``.

    ``edges`` is an ``(E, 2)`` int64 array with ``u < v`` in each row and no
    repeated rows.
    """

    n: int
    edges: np.ndarray
    vertex_weights: np.ndarray

    def __post_init__(self) -> None:
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        w = np.asarray(self.vertex_weights, dtype=np.float64)
        if w.shape != (self.n,):
            raise ParameterError("need one weight per vertex")
        if e.size:
            if np.any(e[:, 0] >= e[:, 1]):
                raise ParameterError("edges must satisfy u < v (no self-loops)")
            if e.min() < 0 or e.max() >= self.n:
                raise ParameterError("edge endpoint out of range")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "vertex_weights", w)

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[Sequence[int]], weights=None) -> "SimpleGraph":
        """Build from arbitrary pairs; orients, drops self-loops and duplicates."""
        arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
        return cls(n, _canonical_edges(arr, n), w)

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        e = self.edges
        data = np.ones(2 * len(e), dtype=np.int8)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(map(tuple, self.edges.tolist()))


@dataclass(frozen=True)
class Component:
    vertices: tuple[int, ...]
    mass: float

    @property
    def size(self) -> int:
        return len(self.vertices)


class RejectionError(RuntimeError):
    """Raised when a rejection sampler exhausts its attempt budget."""

    def __init__(self, attempts: int, acceptance_estimate: float):
        super().__init__(
            f"no acceptance after {attempts} attempts "
            f"(estimated acceptance probability {acceptance_estimate:.3g})"
        )
        self.attempts = attempts
        self.acceptance_estimate = acceptance_estimate


def _canonical_edges(pairs: np.ndarray, n: int) -> np.ndarray:
    if pairs.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    u = np.minimum(pairs[:, 0], pairs[:, 1])
    v = np.maximum(pairs[:, 0], pairs[:, 1])
    keep = u != v
    key = np.unique(u[keep] * np.int64(n) + v[keep])
    return np.stack([key // n, key % n], axis=1)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_product_graph(
    a: np.ndarray,
    kappa: float,
    seed,
    uniform: float | None = None,
) -> np.ndarray:
    """Edge array of the graph with ``P(i~j) = 1 - exp(-kappa a_i a_j)``.

    ``uniform`` (optional) fixes the quantile used for the Poisson number of
    throws; with a shared generator state the throw stream is a prefix-stable
    sequence, so increasing ``kappa`` only ever adds edges.
    """
    rng = _rng(seed)
    a = np.asarray(a, dtype=np.float64)
    n = a.size
    if kappa < 0:
        raise ParameterError("connection intensity must be non-negative")
    S = float(a.sum())
    mean = kappa * S * S / 2.0
    u = rng.random() if uniform is None else uniform
    M = int(poisson.ppf(u, mean)) if mean > 0 else 0
    if M == 0 or n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    cum = np.cumsum(a)
    cum /= cum[-1]
    throws = rng.random(2 * M)
    ends = np.searchsorted(cum, throws, side="right")
    np.minimum(ends, n - 1, out=ends)
    return _canonical_edges(ends.reshape(M, 2).astype(np.int64), n)


def sample_mc_graph(x: WeightSequence | np.ndarray, t: float, seed) -> SimpleGraph:
    """``G_n(x, t)``: connect ``i != j`` independently w.p. ``1 - exp(-t x_i x_j)``."""
    if t < 0:
        raise ParameterError("t must be non-negative")
    xv = x.values if isinstance(x, WeightSequence) else np.asarray(x, dtype=np.float64)
    edges = sample_product_graph(xv, t, seed)
    return SimpleGraph(xv.size, edges, xv)


def sample_nr_graph(w: WeightSequence, lam: float, seed, tau: float = 3.5,
                    uniform: float | None = None) -> SimpleGraph:
    """Rank-one graph with weights ``w(lam)`` and ``q_ij = 1 - exp(-w_i w_j / l_n)``.

    Here ``l_n`` is the total weight of ``w(lam)``.  Calls sharing a seed are
    monotonically coupled in ``lam``: the throw stream is common and only the
    Poisson number of throws grows with ``lam``.
    """
    wl = critical_window(w, lam, tau) if lam != 0 else w
    edges = sample_product_graph(wl.values, 1.0 / wl.sigma1, seed, uniform=uniform)
    return SimpleGraph(w.n, edges, wl.values)


class UnionFind:
    """Disjoint-set forest with union by size and path halving."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, i: int) -> int:
        parent = self.parent
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(self, i: int, j: int) -> bool:
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return False
        if self.size[ri] < self.size[rj]:
            ri, rj = rj, ri
        self.parent[rj] = ri
        self.size[ri] += self.size[rj]
        return True

    def labels(self) -> list[int]:
        return [self.find(i) for i in range(len(self.parent))]


@numba.njit(cache=True)
def _uf_labels(n, edges):
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    for k in range(edges.shape[0]):
        a = edges[k, 0]
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        b = edges[k, 1]
        while parent[b] != b:
            parent[b] = parent[parent[b]]
            b = parent[b]
        if a == b:
            continue
        if size[a] < size[b]:
            a, b = b, a
        parent[b] = a
        size[a] += size[b]
    # relabel roots as 0..k-1 in order of smallest member id
    label = -np.ones(n, dtype=np.int64)
    out = np.empty(n, dtype=np.int64)
    nxt = 0
    for i in range(n):
        r = i
        while parent[r] != r:
            r = parent[r]
        if label[r] < 0:
            label[r] = nxt
            nxt += 1
        out[i] = label[r]
    return out, nxt


def component_labels(g: SimpleGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Array form of :func:`components`.

    Returns ``(labels, masses, order)``: ``labels[v]`` is a component id,
    ``masses[c]`` the weight of component ``c`` and ``order`` the component ids
    sorted by mass descending with ties broken by smallest member id.
    Component ids are numbered by smallest member, so a stable sort suffices.
    """
    labels, k = _uf_labels(g.n, g.edges)
    masses = np.bincount(labels, weights=g.vertex_weights, minlength=k)
    order = np.argsort(-masses, kind="stable")
    return labels, masses, order


def components(g: SimpleGraph) -> list[Component]:
    """Connected components sorted by mass (descending), ties by smallest id."""
    labels, masses, order = component_labels(g)
    by_label = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[by_label], np.arange(masses.size + 1))
    out = []
    for c in order:
        members = by_label[bounds[c]:bounds[c + 1]]
        out.append(Component(tuple(int(v) for v in members), float(masses[c])))
    return out


def largest_component(g: SimpleGraph) -> np.ndarray:
    """Sorted vertex ids of the heaviest component."""
    labels, _, order = component_labels(g)
    return np.flatnonzero(labels == order[0])


def pair_index(m: int) -> list[tuple[int, int]]:
    """Pairs ``(i, j)``, ``i < j``, in the bit order used by edge codes."""
    return list(combinations(range(m), 2))


def connected_mask(codes: np.ndarray, m: int) -> np.ndarray:
    """Vectorised connectivity test for edge-set bit codes on ``m`` vertices."""
    codes = np.asarray(codes, dtype=np.int64)
    pairs = pair_index(m)
    reach = np.ones_like(codes)  # bit v set when v is reachable from vertex 0
    for _ in range(m - 1):
        new = reach.copy()
        for k, (i, j) in enumerate(pairs):
            present = (codes >> k) & 1
            hit_i = (reach >> i) & 1
            hit_j = (reach >> j) & 1
            new |= (present & hit_i) << j
            new |= (present & hit_j) << i
        reach = new
    return reach == (1 << m) - 1


def sample_connected_conditioned_codes(p: Sequence[float], a: float, size: int, seed,
                                       batch: int = 1 << 20) -> tuple[np.ndarray, int]:
    """Batched rejection sampler for ``P_con(.; p, a)`` on small vertex sets.

    Returns ``(codes, attempts)`` where each code is the edge-set bitmask in the
    order of :func:`pair_index`.
    """
    p = np.asarray(p, dtype=np.float64)
    m = p.size
    if a <= 0:
        raise ParameterError("a must be positive")
    if m > 10:
        raise ParameterError("bit-code sampler supports m <= 10")
    rng = _rng(seed)
    pairs = pair_index(m)
    if not pairs:
        return np.zeros(size, dtype=np.int64), size
    q = np.array([1.0 - math.exp(-a * p[i] * p[j]) for i, j in pairs])
    weights = np.int64(1) << np.arange(len(pairs), dtype=np.int64)
    out: list[np.ndarray] = []
    have = 0
    attempts = 0
    while have < size:
        bits = rng.random((batch, len(pairs))) < q
        codes = bits.astype(np.int64) @ weights
        attempts += batch
        good = codes[connected_mask(codes, m)]
        out.append(good)
        have += good.size
    return np.concatenate(out)[:size], attempts


def sample_connected_conditioned(p: Sequence[float], a: float, seed,
                                 max_attempts: int = 1_000_000) -> tuple[SimpleGraph, int]:
    """Exact draw from ``P_con``: resample ``G(p, a)`` until it is connected.

    ``q_ij = 1 - exp(-a p_i p_j)``.  Returns the graph and the number of
    attempts used; raises :class:`RejectionError` when the budget runs out.
    """
    p = np.asarray(p, dtype=np.float64)
    m = p.size
    if m < 1:
        raise ParameterError("need at least one vertex")
    if a <= 0:
        raise ParameterError("a must be positive")
    rng = _rng(seed)
    iu, ju = np.triu_indices(m, 1)
    q = -np.expm1(-a * p[iu] * p[ju])
    for attempt in range(1, max_attempts + 1):
        keep = rng.random(q.size) < q
        edges = np.stack([iu[keep], ju[keep]], axis=1)
        g = SimpleGraph(m, edges, p)
        labels, k = _uf_labels(m, g.edges)
        if k == 1:
            return g, attempt
    est = _connect_probability_estimate(q, m, rng)
    raise RejectionError(max_attempts, est)


def _connect_probability_estimate(q, m, rng, trials=20000):
    iu, ju = np.triu_indices(m, 1)
    hits = 0
    for _ in range(trials):
        keep = rng.random(q.size) < q
        _, k = _uf_labels(m, np.stack([iu[keep], ju[keep]], axis=1).astype(np.int64))
        hits += k == 1
    return hits / trials


def degree_histogram(g: SimpleGraph) -> dict[int, int]:
    """Map ``degree -> number of vertices`` (only degrees that occur)."""
    counts = np.bincount(g.degrees, minlength=1)
    return {int(k): int(c) for k, c in enumerate(counts) if c}


def mixed_poisson_degree_pmf(k: int, tau: float, iota: float) -> float:
    """``E[exp(-W) W^k / k!]`` for ``W`` with tail ``(iota/x)^(tau-1)`` on ``[iota, inf)``."""
    log_kfact = math.lgamma(k + 1)

    def integrand(w):
        return math.exp(-w + k * math.log(w) - log_kfact - tau * math.log(w)) \
            * (tau - 1.0) * iota ** (tau - 1.0)

    val, _ = integrate.quad(integrand, iota, np.inf, epsabs=1e-13, epsrel=1e-11, limit=200)
    return val


def write_graph(g: SimpleGraph, path: str | Path) -> None:
    """Text edge list: ``# n=<n>``, one ``w <i> <value>`` line per vertex, then ``u v`` lines."""
    lines = [f"# n={g.n}"]
    lines += [f"w {i} {v!r}" for i, v in enumerate(g.vertex_weights.tolist())]
    lines += [f"{u} {v}" for u, v in g.edges.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path: str | Path) -> SimpleGraph:
    n = None
    weights: dict[int, float] = {}
    pairs = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key.strip() == "n":
                n = int(val)
            continue
        parts = line.split()
        if parts[0] == "w":
            weights[int(parts[1])] = float(parts[2])
        else:
            pairs.append((int(parts[0]), int(parts[1])))
    if n is None:
        raise ValueError(f"{path}: missing '# n=' header")
    w = np.array([weights.get(i, 1.0) for i in range(n)])
    return SimpleGraph.from_pairs(n, pairs, w)
