"""p-trees: two samplers, depth-first annotations, tilting and surplus edges.

Conventions
-----------
Vertices are ``0..m-1``.  An ordered tree is stored as a parent array
(``-1`` at the root) together with its depth-first preorder; the preorder
fixes every child list (children appear left to right in the order they are
explored), so the pair ``(parent, order)`` is a complete, hashable key.

During the depth-first search the vertices waiting on the stack when ``v`` is
popped are exactly the children, to the right of the path, of the vertices on
the root-to-``v`` path.  Their total ``p``-mass is ``dA(v)``, and the pairs
``(v, u)`` with ``u`` waiting form the permitted edges.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numba
import numpy as np
from scipy.sparse import csgraph, csr_matrix

from .graphgen import SimpleGraph, _rng
from .metric import MeasuredMetricSpace
from .weights import ParameterError

log = logging.getLogger(__name__)

__all__ = [
    "OrderedTree",
    "DfsAnnotation",
    "TiltedSampler",
    "as_pmf",
    "ptree_exploration",
    "ptree_birthday",
    "birthday_tree_from_sequence",
    "ordered_ptree_prob",
    "rooted_ptree_prob",
    "enumerate_ordered_trees",
    "enumerate_rooted_trees",
    "dfs_annotate",
    "log_tilt",
    "tilted_table",
    "sample_tilted_ptree",
    "sample_surplus",
    "add_surplus_edges",
    "surplus_point_counts",
    "build_modified_space",
    "tree_metric_space",
    "write_tree",
    "read_tree",
]

EXACT_ENUM_MAX = 5
PERTURB = 1e-15


def as_pmf(p: Sequence[float]) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ParameterError("p must be a non-empty vector")
    if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ParameterError("p must be a strictly positive probability vector")
    return p


@dataclass(frozen=True, eq=False)
class OrderedTree:
    """Rooted labelled tree with an order on each child list."""

    parent: np.ndarray
    order: np.ndarray

    def __post_init__(self) -> None:
        par = np.asarray(self.parent, dtype=np.int64)
        order = np.asarray(self.order, dtype=np.int64)
        m = par.size
        if order.shape != (m,) or m == 0:
            raise ParameterError("parent and order must have the same positive length")
        roots = np.flatnonzero(par < 0)
        if roots.size != 1 or order[0] != roots[0]:
            raise ParameterError("need exactly one root, first in the order")
        if sorted(order.tolist()) != list(range(m)):
            raise ParameterError("order must be a permutation")
        pos = np.empty(m, dtype=np.int64)
        pos[order] = np.arange(m)
        nonroot = par >= 0
        if np.any(par >= m) or np.any(pos[par[nonroot]] >= pos[nonroot]):
            raise ParameterError("parents must precede children in the order")
        if not _is_preorder(par, order):
            raise ParameterError("order is not a depth-first preorder of the tree")
        par.setflags(write=False)
        order.setflags(write=False)
        object.__setattr__(self, "parent", par)
        object.__setattr__(self, "order", order)

    @property
    def m(self) -> int:
        return int(self.parent.size)

    @property
    def root(self) -> int:
        return int(self.order[0])

    @property
    def children(self) -> list[list[int]]:
        """Child lists, left to right."""
        ch: list[list[int]] = [[] for _ in range(self.m)]
        for v in self.order[1:]:
            ch[self.parent[v]].append(int(v))
        return ch

    @property
    def out_degrees(self) -> np.ndarray:
        return np.bincount(self.parent[self.parent >= 0], minlength=self.m)

    @property
    def edges(self) -> np.ndarray:
        """``(parent, child)`` rows."""
        kids = np.flatnonzero(self.parent >= 0)
        return np.stack([self.parent[kids], kids], axis=1)

    @property
    def key(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return tuple(self.parent.tolist()), tuple(self.order.tolist())

    @property
    def shape_key(self) -> tuple[int, ...]:
        """Key that forgets the child order (rooted labelled tree)."""
        return tuple(self.parent.tolist())

    @classmethod
    def from_children(cls, root: int, children: dict[int, Sequence[int]] | Sequence[Sequence[int]],
                      m: int | None = None) -> "OrderedTree":
        if not isinstance(children, dict):
            children = dict(enumerate(children))
        if m is None:
            m = 1 + sum(len(c) for c in children.values())
        parent = np.full(m, -1, dtype=np.int64)
        order = []
        stack = [root]
        while stack:
            v = stack.pop()
            order.append(v)
            kids = list(children.get(v, ()))
            for c in kids:
                parent[c] = v
            stack.extend(reversed(kids))
        return cls(parent, np.array(order))

    def __eq__(self, other) -> bool:
        return isinstance(other, OrderedTree) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)


def _is_preorder(par: np.ndarray, order: np.ndarray) -> bool:
    # In a preorder the parent of order[i] must be on the current root path.
    path: list[int] = []
    for v in order.tolist():
        while path and path[-1] != par[v]:
            path.pop()
        if par[v] >= 0 and not path:
            return False
        path.append(v)
    return True


# ---------------------------------------------------------------------------
# exploration construction


@numba.njit(cache=True)
def _psi_core(p, u, parent, order, stack):
    """Fill ``parent`` and ``order`` with the tree of ``(p, u)``.

    Returns 0 on success, 1 when the minimiser is not unique and 2 when the
    stack empties early (only possible through rounding).
    """
    m = p.size
    idx = np.argsort(u)
    best = np.inf
    kstar = -1
    tie = False
    cum = 0.0
    for k in range(m):
        v = idx[k]
        val = cum - u[v]
        if val < best:
            best = val
            kstar = k
            tie = False
        elif val == best:
            tie = True
        cum += p[v]
    if tie:
        return 1
    vstar = idx[kstar]
    ustar = u[vstar]
    top = 1
    stack[0] = vstar
    ptr = 1
    ystar = 0.0
    for i in range(m):
        if top == 0:
            return 2
        top -= 1
        v = stack[top]
        order[i] = v
        ynew = ystar + p[v]
        start = ptr
        while ptr < m:
            w = idx[(kstar + ptr) % m]
            y = u[w] - ustar
            if y < 0.0:
                y += 1.0
            if y < ynew:
                parent[w] = v
                ptr += 1
            else:
                break
        for k in range(start, ptr):
            stack[top] = idx[(kstar + k) % m]
            top += 1
        ystar = ynew
    if ptr < m:
        return 2
    parent[vstar] = -1
    return 0


@numba.njit(cache=True)
def _psi_batch(p, U, parents, orders):
    B, m = U.shape
    stack = np.empty(m, dtype=np.int64)
    status = np.empty(B, dtype=np.int64)
    for b in range(B):
        status[b] = _psi_core(p, U[b], parents[b], orders[b], stack)
    return status


def _perturb(u: np.ndarray) -> np.ndarray:
    return u + np.arange(u.size) * PERTURB


def ptree_exploration(p: Sequence[float], u: Sequence[float]) -> OrderedTree:
    """Ordered tree ``psi_p(u)`` from the cyclic-shift depth-first construction.

    ``F(s) = -s + sum_v p_v 1{u_v <= s}`` is minimised over the left limits
    ``F(u_v-)``; the minimiser ``v*`` becomes the root and ``y_v = (u_v - u_v*)
    mod 1`` the cyclically shifted positions.  Popping ``v`` from the stack at
    step ``i`` sets ``y*(i) = y*(i-1) + p_v``; the vertices with ``y`` in
    ``(y*(i-1), y*(i))`` become children of ``v`` and are pushed in increasing
    ``y`` so that the last one is explored first.  With i.i.d. uniform ``u`` the
    output has the ordered p-tree law.
    """
    p = as_pmf(p)
    u = np.asarray(u, dtype=np.float64)
    if u.shape != p.shape:
        raise ParameterError("u and p must have the same length")
    if np.unique(u).size != u.size:
        raise ParameterError("u must have distinct entries")
    m = p.size
    parent = np.empty(m, dtype=np.int64)
    order = np.empty(m, dtype=np.int64)
    stack = np.empty(m, dtype=np.int64)
    status = _psi_core(p, u, parent, order, stack)
    if status == 1:
        status = _psi_core(p, _perturb(u), parent, order, stack)
    if status != 0:
        raise RuntimeError("depth-first construction failed (rounding at a cut point)")
    return OrderedTree(parent, order)


def sample_ptree_batch(p: Sequence[float], size: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """``size`` i.i.d. ordered p-trees as ``(parents, orders)`` arrays of shape ``(size, m)``."""
    p = as_pmf(p)
    rng = _rng(seed)
    m = p.size
    parents = np.empty((size, m), dtype=np.int64)
    orders = np.empty((size, m), dtype=np.int64)
    U = rng.random((size, m))
    status = _psi_batch(p, U, parents, orders)
    for b in np.flatnonzero(status != 0):
        s = _psi_core(p, _perturb(U[b]), parents[b], orders[b], np.empty(m, dtype=np.int64))
        if s != 0:  # pragma: no cover - rounding corner case
            raise RuntimeError("depth-first construction failed (rounding at a cut point)")
    return parents, orders


# ---------------------------------------------------------------------------
# birthday construction


def birthday_tree_from_sequence(Y: Sequence[int], m: int | None = None
                                ) -> tuple[OrderedTree, list[int]]:
    """Tree and repeat values of a finished i.i.d. sequence ``Y_0, Y_1, ...``.

    Each first visit ``Y_j`` is attached below ``Y_{j-1}``; ``Y_0`` is the root.
    The ``l``-th repeat value is ``Y_{R_l - 1}`` where ``R_l`` is the index of the
    ``l``-th already-seen entry.  Children are listed in discovery order.
    """
    Y = [int(y) for y in Y]
    if m is None:
        m = max(Y) + 1
    parent = np.full(m, -1, dtype=np.int64)
    seen = np.zeros(m, dtype=bool)
    seen[Y[0]] = True
    kids: dict[int, list[int]] = {}
    repeats = []
    for j in range(1, len(Y)):
        if seen[Y[j]]:
            repeats.append(Y[j - 1])
        else:
            seen[Y[j]] = True
            parent[Y[j]] = Y[j - 1]
            kids.setdefault(Y[j - 1], []).append(Y[j])
    if not seen.all():
        raise ParameterError("sequence does not visit every vertex")
    return OrderedTree.from_children(Y[0], kids, m), repeats


def ptree_birthday(p: Sequence[float], seed, n_repeats: int = 1
                   ) -> tuple[OrderedTree, list[int]]:
    """p-tree from an i.i.d. ``p`` sequence run until all vertices are seen.

    Sampling continues until at least ``n_repeats`` repeats have also been
    recorded; the repeat values are i.i.d. ``p`` and independent of the tree.
    """
    p = as_pmf(p)
    rng = _rng(seed)
    m = p.size
    cum = np.cumsum(p)
    cum /= cum[-1]
    seen = np.zeros(m, dtype=bool)
    seq: list[int] = []
    n_seen = 0
    n_rep = 0
    chunk = max(16, 2 * m)
    while n_seen < m or n_rep < n_repeats:
        draws = np.minimum(np.searchsorted(cum, rng.random(chunk), side="right"), m - 1)
        for y in draws.tolist():
            if seen[y]:
                if seq:
                    n_rep += 1
            else:
                seen[y] = True
                n_seen += 1
            seq.append(y)
            if n_seen == m and n_rep >= n_repeats:
                break
    tree, reps = birthday_tree_from_sequence(seq, m)
    return tree, reps


# ---------------------------------------------------------------------------
# enumeration and exact laws


def ordered_ptree_prob(t: OrderedTree, p: Sequence[float]) -> float:
    """``prod_v p_v^{d_v} / d_v!`` (children ordered uniformly at random)."""
    p = np.asarray(p, dtype=np.float64)
    d = t.out_degrees
    return float(np.prod(p**d) / np.prod([math.factorial(int(k)) for k in d]))


def rooted_ptree_prob(parent: Sequence[int], p: Sequence[float]) -> float:
    """``prod_v p_v^{d_v}`` for the rooted labelled tree with this parent array."""
    par = np.asarray(parent)
    d = np.bincount(par[par >= 0], minlength=len(p))
    return float(np.prod(np.asarray(p, dtype=np.float64) ** d))


@lru_cache(maxsize=None)
def enumerate_rooted_trees(m: int) -> tuple[tuple[int, ...], ...]:
    """All ``m**(m-1)`` parent arrays of rooted labelled trees on ``0..m-1``."""
    out = []
    for root in range(m):
        others = [v for v in range(m) if v != root]
        for choice in itertools.product(range(m), repeat=m - 1):
            par = [-1] * m
            ok = True
            for v, q in zip(others, choice):
                if q == v:
                    ok = False
                    break
                par[v] = q
            if not ok:
                continue
            # acyclic iff every vertex reaches the root
            good = True
            for v in others:
                seen = 0
                w = v
                while w != root and seen <= m:
                    w = par[w]
                    seen += 1
                if w != root:
                    good = False
                    break
            if good:
                out.append(tuple(par))
    return tuple(out)


@lru_cache(maxsize=None)
def enumerate_ordered_trees(m: int) -> tuple[OrderedTree, ...]:
    """Every rooted labelled tree on ``0..m-1`` with every ordering of its child lists."""
    if m > 7:
        raise ParameterError("enumeration is limited to m <= 7")
    out = []
    for par in enumerate_rooted_trees(m):
        root = par.index(-1)
        kids = [[v for v in range(m) if par[v] == u] for u in range(m)]
        for perms in itertools.product(*[itertools.permutations(k) for k in kids]):
            out.append(OrderedTree.from_children(root, [list(c) for c in perms], m))
    return tuple(out)


# ---------------------------------------------------------------------------
# depth-first annotation and the tilt


@dataclass
class DfsAnnotation:
    """Depth-first quantities of an ordered tree under weights ``p`` and intensity ``a``."""

    dfs_order: np.ndarray
    active_weight: np.ndarray
    dA: np.ndarray
    Lambda: float
    tilt_I: float
    tilt_Lbar: float
    permitted_edges: frozenset[tuple[int, int]] | None = None
    active_sets: list[tuple[int, ...]] | None = field(default=None, repr=False)

    @property
    def tilt_L(self) -> float:
        return self.tilt_I * self.tilt_Lbar


@numba.njit(cache=True)
def _dfs_core(parent, order, p):
    """Return ``(dA, active_weight, log_I, Lambda / a)`` from the preorder sweep."""
    m = p.size
    childsum = np.zeros(m)
    for v in range(m):
        if parent[v] >= 0:
            childsum[parent[v]] += p[v]
    dA = np.empty(m)
    active = np.empty(m)
    S = p[order[0]]
    lam = 0.0
    for i in range(m):
        v = order[i]
        active[i] = S
        S -= p[v]
        if S < 0.0:
            S = 0.0
        dA[v] = S
        lam += p[v] * S
        S += childsum[v]
    return dA, active, lam


@numba.njit(cache=True)
def _log_I(parent, p, a):
    out = 0.0
    for v in range(p.size):
        q = parent[v]
        if q >= 0:
            x = a * p[v] * p[q]
            if x > 0:
                out += math.log(math.expm1(x) / x)
    return out


@numba.njit(cache=True)
def _log_tilt_batch(parents, orders, p, a):
    B = parents.shape[0]
    out = np.empty(B)
    for b in range(B):
        dA, active, lam = _dfs_core(parents[b], orders[b], p)
        out[b] = _log_I(parents[b], p, a) + a * lam
    return out


def log_tilt(t: OrderedTree, p: Sequence[float], a: float) -> float:
    """``log L(t) = sum_edges log((e^{a p_u p_v} - 1) / (a p_u p_v)) + Lambda``."""
    p = np.asarray(p, dtype=np.float64)
    _, _, lam = _dfs_core(t.parent, t.order, p)
    return float(_log_I(t.parent, p, a) + a * lam)


def _permitted(t: OrderedTree) -> tuple[frozenset[tuple[int, int]], list[tuple[int, ...]]]:
    kids = t.children
    stack = [t.root]
    edges = set()
    history = []
    while stack:
        history.append(tuple(stack))
        v = stack.pop()
        for u in stack:
            edges.add((v, u))
        stack.extend(reversed(kids[v]))
    return frozenset(edges), history


def dfs_annotate(t: OrderedTree, p: Sequence[float], a: float,
                 with_edges: bool | None = None) -> DfsAnnotation:
    """Depth-first annotation: permitted edges, ``dA``, ``Lambda`` and the tilt factors.

    ``with_edges`` (default: ``m <= 2000``) also materialises the permitted edge
    set and checks ``a sum_v p_v dA(v) == a sum_{(k,l) permitted} p_k p_l``.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.size != t.m:
        raise ParameterError("p and tree sizes differ")
    if a < 0:
        raise ParameterError("a must be non-negative")
    dA, active, lam = _dfs_core(t.parent, t.order, p)
    Lambda = a * float(lam)
    if with_edges is None:
        with_edges = t.m <= 2000
    edges = history = None
    if with_edges:
        edges, history = _permitted(t)
        pair_sum = sum(p[k] * p[l] for k, l in edges)
        if abs(a * pair_sum - Lambda) > 1e-10 * max(1.0, Lambda):
            raise AssertionError("Lambda identity violated")
    logI = float(_log_I(t.parent, p, a))
    return DfsAnnotation(t.order.copy(), active, dA, Lambda, math.exp(logI),
                         math.exp(Lambda), edges, history)


# ---------------------------------------------------------------------------
# tilted p-trees


@lru_cache(maxsize=64)
def _tilted_table_cached(p_key: tuple[float, ...], a: float):
    p = np.array(p_key)
    trees = enumerate_ordered_trees(p.size)
    base = np.array([ordered_ptree_prob(t, p) for t in trees])
    L = np.exp([log_tilt(t, p, a) for t in trees])
    w = base * L
    return trees, base, w / w.sum()


def tilted_table(p: Sequence[float], a: float) -> tuple[tuple[OrderedTree, ...], np.ndarray]:
    """All ordered trees with their tilted probabilities ``P_ord(t) L(t) / E_ord[L]``."""
    p = as_pmf(p)
    if p.size > EXACT_ENUM_MAX:
        raise ParameterError(f"exact enumeration supports m <= {EXACT_ENUM_MAX}")
    trees, _, probs = _tilted_table_cached(tuple(p.tolist()), float(a))
    return trees, probs


class TiltedSampler:
    """Rejection sampler for the tilted law with a pilot-based envelope.

    The envelope is ``safety`` times the largest tilt seen in a pilot of
    untilted trees.  Should a proposal exceed it, the overflow is logged, the
    envelope is raised to ``safety`` times that tilt and the current batch of
    output is discarded and restarted, so the returned samples are exact given
    that no overflow happens under the final envelope.
    """

    def __init__(self, p: Sequence[float], a: float, seed=None, pilot: int = 10_000,
                 safety: float = 10.0, batch: int | None = None):
        self.p = as_pmf(p)
        self.a = float(a)
        self.rng = _rng(seed)
        self.safety = safety
        # keep a batch of proposals to roughly 2e6 vertices
        self.batch = batch if batch is not None else int(np.clip(2_000_000 // self.p.size, 1, 20_000))
        par, ords = sample_ptree_batch(self.p, pilot, self.rng)
        self.log_M = float(np.max(_log_tilt_batch(par, ords, self.p, self.a))) + math.log(safety)
        self.overflows = 0
        self.proposals = 0
        self.restarts = 0

    @property
    def overflow_rate(self) -> float:
        return self.overflows / self.proposals if self.proposals else 0.0

    def sample_arrays(self, size: int) -> tuple[np.ndarray, np.ndarray]:
        m = self.p.size
        out_par: list[np.ndarray] = []
        out_ord: list[np.ndarray] = []
        have = 0
        while have < size:
            par, ords = sample_ptree_batch(self.p, self.batch, self.rng)
            logL = _log_tilt_batch(par, ords, self.p, self.a)
            self.proposals += self.batch
            over = logL > self.log_M
            if over.any():
                self.overflows += int(over.sum())
                self.restarts += 1
                new = float(logL.max()) + math.log(self.safety)
                log.warning("tilt %.4g exceeded envelope %.4g; restarting with %.4g",
                            math.exp(logL.max()), math.exp(self.log_M), math.exp(new))
                self.log_M = new
                out_par.clear()
                out_ord.clear()
                have = 0
                continue
            keep = np.log(self.rng.random(self.batch)) < logL - self.log_M
            out_par.append(par[keep])
            out_ord.append(ords[keep])
            have += int(keep.sum())
        return (np.concatenate(out_par)[:size].reshape(-1, m),
                np.concatenate(out_ord)[:size].reshape(-1, m))

    def sample(self, size: int = 1) -> list[OrderedTree]:
        par, ords = self.sample_arrays(size)
        return [OrderedTree(a, b) for a, b in zip(par, ords)]


def sample_tilted_ptree(p: Sequence[float], a: float, seed, mode: str = "exact-enum",
                        size: int | None = None):
    """Tilted ordered p-tree(s).  Returns one tree, or a list when ``size`` is given."""
    p = as_pmf(p)
    n = 1 if size is None else size
    if mode == "exact-enum":
        trees, probs = tilted_table(p, a)
        idx = _rng(seed).choice(len(trees), size=n, p=probs)
        out = [trees[i] for i in idx]
    elif mode == "rejection":
        out = TiltedSampler(p, a, seed).sample(n)
    else:
        raise ParameterError(f"unknown mode {mode!r}")
    return out[0] if size is None else out


# ---------------------------------------------------------------------------
# surplus edges and the modified space


def _right_children_of_path(t: OrderedTree, v: int, kids) -> tuple[list[int], list[int]]:
    """Waiting vertices when ``v`` is explored, with the path vertex each hangs from."""
    path = [v]
    while t.parent[path[-1]] >= 0:
        path.append(int(t.parent[path[-1]]))
    path.reverse()
    cand, host = [], []
    for y, nxt in zip(path[:-1], path[1:]):
        ch = kids[y]
        for u in ch[ch.index(nxt) + 1:]:
            cand.append(u)
            host.append(y)
    return cand, host


def sample_surplus(t: OrderedTree, p: Sequence[float], a: float, seed,
                   annotation: DfsAnnotation | None = None) -> list[tuple[int, int, int]]:
    """Raw surplus draws ``(L, R, y)`` before duplicate removal.

    The number of draws is Poisson(``Lambda``); each first endpoint ``L`` is
    chosen with probability proportional to ``p_L dA(L)``, the second endpoint
    ``R`` among the right children of the root path to ``L`` with probability
    proportional to ``p_R``, and ``y`` is the path vertex that ``R`` hangs from.
    Candidates are laid out in ascending vertex id when inverting the uniform
    draw for ``R``.
    """
    p = np.asarray(p, dtype=np.float64)
    rng = _rng(seed)
    ann = annotation if annotation is not None else dfs_annotate(t, p, a, with_edges=False)
    N = int(rng.poisson(ann.Lambda)) if ann.Lambda > 0 else 0
    if N == 0:
        return []
    w = p * ann.dA
    firsts = rng.choice(t.m, size=N, p=w / w.sum())
    kids = t.children
    out = []
    for L in firsts.tolist():
        cand, host = _right_children_of_path(t, L, kids)
        srt = np.argsort(cand)
        cand = np.asarray(cand)[srt]
        host = np.asarray(host)[srt]
        q = p[cand]
        j = int(np.searchsorted(np.cumsum(q) / q.sum(), rng.random(), side="right"))
        j = min(j, cand.size - 1)
        out.append((int(L), int(cand[j]), int(host[j])))
    return out


def surplus_point_counts(t: OrderedTree, p: Sequence[float], a: float, size: int, seed,
                         annotation: DfsAnnotation | None = None) -> np.ndarray:
    """Number of points of a rate-one planar Poisson process under the surplus curve.

    The curve is the step function on ``[0, 1]`` that equals ``a dA(v)`` on an
    interval of width ``p_v``, the intervals laid out in depth-first order.
    Points are thrown on ``[0, 1] x [0, max height]`` and kept below the curve;
    ``size`` independent repetitions are returned.
    """
    p = np.asarray(p, dtype=np.float64)
    rng = _rng(seed)
    ann = annotation if annotation is not None else dfs_annotate(t, p, a, with_edges=False)
    order = ann.dfs_order
    heights = a * ann.dA[order]
    edges = np.cumsum(p[order])
    edges /= edges[-1]
    H = float(heights.max())
    if H <= 0:
        return np.zeros(size, dtype=np.int64)
    K = rng.poisson(H, size)
    s = rng.random(int(K.sum()))
    y = rng.random(s.size) * H
    cell = np.minimum(np.searchsorted(edges, s, side="left"), order.size - 1)
    below = y <= heights[cell]
    rep = np.repeat(np.arange(size), K)
    return np.bincount(rep[below], minlength=size)


def add_surplus_edges(t: OrderedTree, p: Sequence[float], a: float, seed,
                      annotation: DfsAnnotation | None = None) -> SimpleGraph:
    """Tree edges plus surplus edges ``{L, R}`` (repeated surplus edges kept once)."""
    draws = sample_surplus(t, p, a, seed, annotation)
    pairs = t.edges.tolist() + [(L, R) for L, R, _ in draws]
    return SimpleGraph.from_pairs(t.m, pairs, np.asarray(p, dtype=np.float64))


def tree_metric_space(t: OrderedTree, p: Sequence[float]) -> MeasuredMetricSpace:
    """Graph distance on the tree with measure ``p``."""
    g = SimpleGraph.from_pairs(t.m, t.edges.tolist(), p)
    d = csgraph.shortest_path(g.adjacency, unweighted=True, directed=False)
    return MeasuredMetricSpace(d, np.asarray(p, dtype=np.float64) / np.sum(p),
                               labels=np.arange(t.m), check=t.m <= 200)


def build_modified_space(t: OrderedTree, p: Sequence[float], a: float, seed,
                         draws: list[tuple[int, int, int]] | None = None,
                         landmarks: int | None = None) -> MeasuredMetricSpace:
    """Tree metric with each surplus first endpoint glued onto its path vertex.

    Every draw ``(L, R, y)`` identifies ``L`` with ``y`` (no duplicate removal).
    Glued classes carry the summed ``p`` mass; distances are the graph distances
    of the quotient, i.e. tree edges between classes with unit length.  With
    ``landmarks`` only that many classes, drawn without replacement according
    to their mass, are kept (masses renormalised over them).
    """
    p = np.asarray(p, dtype=np.float64)
    rng = _rng(seed)
    if draws is None:
        draws = sample_surplus(t, p, a, rng)
    m = t.m
    if draws:
        glue = csr_matrix((np.ones(len(draws)), ([d[0] for d in draws], [d[2] for d in draws])),
                          shape=(m, m))
        k, cls = csgraph.connected_components(glue, directed=False)
    else:
        k, cls = m, np.arange(m)
    mass = np.bincount(cls, weights=p, minlength=k)
    e = t.edges
    cu, cv = cls[e[:, 0]], cls[e[:, 1]]
    keep = cu != cv
    adj = csr_matrix((np.ones(int(keep.sum())), (cu[keep], cv[keep])), shape=(k, k))
    mu = mass / mass.sum()
    if landmarks is None or landmarks >= k:
        sel = np.arange(k)
    else:
        sel = np.sort(rng.choice(k, size=landmarks, replace=False, p=mu))
    d = csgraph.shortest_path(adj, method="D", unweighted=True, directed=False, indices=sel)
    d = d[:, sel]
    mu = mu[sel] / mu[sel].sum()
    return MeasuredMetricSpace(d, mu, labels=sel, check=sel.size <= 200)


# ---------------------------------------------------------------------------
# serialisation


def write_tree(t: OrderedTree, path: str | Path) -> None:
    """``t <root> <parent_0> ... <parent_{m-1}>`` then ``c <v> <children...>`` lines."""
    lines = ["t " + " ".join(map(str, [t.root] + t.parent.tolist()))]
    for v, ch in enumerate(t.children):
        if ch:
            lines.append("c " + " ".join(map(str, [v] + ch)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_tree(path: str | Path) -> OrderedTree:
    root = None
    m = 0
    kids: dict[int, list[int]] = {}
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "t":
            root = int(parts[1])
            m = len(parts) - 2
        elif parts[0] == "c":
            kids[int(parts[1])] = [int(x) for x in parts[2:]]
    if root is None:
        raise ParameterError("missing tree header line")
    return OrderedTree.from_children(root, kids, m)
