"""Inhomogeneous continuum random trees: stick-breaking and p-tree surrogates.

Stick-breaking
--------------
Hub ``i`` carries a Poisson process of rate ``theta_i`` on the half-line.  Its
first point is the joinpoint ``xi_i``; all later points are cutpoints.  With
the cutpoints sorted, ``0 = eta_0 < eta_1 < eta_2 < ...``, segment ``k`` is the
piece ``(eta_k, eta_{k+1}]`` of the line.  Segment 0 hangs from the root; a
later segment ``k`` is attached at the joinpoint of the process that produced
``eta_k``.  That joinpoint precedes ``eta_k`` on the line, so it lies on an
earlier segment and the attachment graph is acyclic by construction.  The end
of segment ``k - 1`` is the leaf ``eta_k``.

A point is addressed by ``(segment, line position)``.  Its depth is the depth
of the segment's attachment point plus the distance travelled along the
segment.

Only finitely many hubs ``K`` are simulated, so ``sum theta = inf`` cannot
hold; missing small hubs only remove potential joinpoints (the tree never gets
longer because of the truncation).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graphgen import _rng
from .levy import component_limit_params, build_levy_path, excursions
from .metric import MeasuredMetricSpace, scale
from .ptree import OrderedTree, TiltedSampler, build_modified_space, ptree_exploration
from .weights import EntranceBoundary, ParameterError, ThetaSequence

__all__ = [
    "ThetaSequence",
    "StickBreakTree",
    "ReducedTree",
    "sample_icrt",
    "surrogate_pmf",
    "icrt_via_ptree",
    "reduced_tree",
    "build_limit_space",
    "limit_component_space",
    "write_segments_csv",
]


@dataclass(eq=False)
class StickBreakTree:
    """Truncated stick-breaking tree.

    ``eta`` holds ``0`` followed by the sorted cutpoints; segment ``k`` runs
    over ``(eta[k], seg_end[k]]`` and hangs from line position
    ``attach_pos[k]`` of segment ``attach_seg[k]`` (``-1`` for the root).
    ``seg_hub[k]`` is the hub whose cutpoint starts segment ``k`` (``0`` for
    segment 0).  Hubs are labelled ``1..K``; ``hub_pos`` maps a hub to its
    joinpoint if its process has a point before the horizon.
    """

    theta: ThetaSequence
    horizon: float
    seed: object
    eta: np.ndarray
    seg_end: np.ndarray
    attach_seg: np.ndarray
    attach_pos: np.ndarray
    seg_hub: np.ndarray
    hub_pos: dict[int, float]
    hub_seg: dict[int, int]
    seg_depth: np.ndarray = field(init=False)
    _marks: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        S = self.eta.size
        depth = np.zeros(S)
        for k in range(1, S):
            j = int(self.attach_seg[k])
            assert 0 <= j < k, "segments must hang from earlier segments"
            assert self.eta[j] < self.attach_pos[k] <= self.seg_end[j]
            depth[k] = depth[j] + self.attach_pos[k] - self.eta[j]
        self.seg_depth = depth
        # branches hanging from each hub, in order of their cutpoints
        self.branches: dict[int, list[int]] = {}
        for k in range(1, S):
            self.branches.setdefault(int(self.seg_hub[k]), []).append(k)

    @property
    def n_segments(self) -> int:
        return int(self.eta.size)

    @property
    def segment_lengths(self) -> np.ndarray:
        return self.seg_end - self.eta

    @property
    def total_length(self) -> float:
        return float(self.segment_lengths.sum())

    @property
    def leaf_positions(self) -> np.ndarray:
        """``eta_0 = 0`` (the root) followed by the leaves ``eta_1, eta_2, ...``."""
        return self.eta.copy()

    @property
    def n_leaves(self) -> int:
        return self.n_segments - 1

    @property
    def segments(self) -> list[tuple[float, tuple[int, float]]]:
        """``(length, (attach segment, offset along it))`` per segment."""
        out = []
        for k in range(self.n_segments):
            j = int(self.attach_seg[k])
            off = 0.0 if j < 0 else float(self.attach_pos[k] - self.eta[j])
            out.append((float(self.seg_end[k] - self.eta[k]), (j, off)))
        return out

    def mark(self, hub: int, j: int) -> float:
        """Uniform order mark of subtree ``j`` of ``hub`` (``j = 0``: continuation
        of the host segment, ``j >= 1``: the ``j``-th branch attached there)."""
        key = (int(hub), int(j))
        if key not in self._marks:
            self._marks[key] = float(np.random.default_rng([_seed_int(self.seed), *key]).random())
        return self._marks[key]

    def segment_of(self, pos: float) -> int:
        """Segment containing line position ``pos`` (``0 < pos <= horizon``)."""
        return max(int(np.searchsorted(self.eta, pos, side="left")) - 1, 0)

    def leaf(self, j: int) -> tuple[int, float]:
        """Address of leaf ``eta_j`` (end of segment ``j - 1``)."""
        if not 1 <= j <= self.n_leaves:
            raise ParameterError(f"leaf {j} not sampled (have {self.n_leaves})")
        return j - 1, float(self.eta[j])

    def depth(self, seg: int, pos: float) -> float:
        return float(self.seg_depth[seg] + pos - self.eta[seg])

    def chain(self, seg: int, pos: float) -> list[tuple[int, float]]:
        """``(segment, position reached on it)`` from the point down to segment 0."""
        out = [(seg, pos)]
        while seg > 0:
            seg, pos = int(self.attach_seg[seg]), float(self.attach_pos[seg])
            out.append((seg, pos))
        return out

    def distance(self, a: tuple[int, float], b: tuple[int, float]) -> float:
        ca = dict(self.chain(*a))
        for s, pb in self.chain(*b):
            if s in ca:
                meet = min(ca[s], pb)
                return self.depth(*a) + self.depth(*b) - 2 * self.depth(s, meet)
        raise AssertionError("chains always meet on segment 0")

    def path_hubs(self, seg: int, pos: float) -> list[tuple[int, int]]:
        """``(hub, subtree index)`` for every hub strictly between the root and the point."""
        chain = self.chain(seg, pos)
        out = []
        for level, (s, reach) in enumerate(chain):
            came_from = chain[level - 1][0] if level > 0 else None
            for hub in self._hubs_on_segment(s):
                h = self.hub_pos[hub]
                if h < reach:
                    out.append((hub, 0))
                elif h == reach and came_from is not None:
                    out.append((hub, self.branches[hub].index(came_from) + 1))
        return out

    def _hubs_on_segment(self, s: int) -> list[int]:
        if not hasattr(self, "_by_seg"):
            by: dict[int, list[int]] = {}
            for hub, sg in self.hub_seg.items():
                by.setdefault(sg, []).append(hub)
            self._by_seg = by
        return self._by_seg.get(s, [])

    def path_measure(self, seg: int, pos: float) -> tuple[float, dict[int, float]]:
        """``(dA, Q)``: ``dA = sum theta_i U_i`` over hubs on the path, ``Q`` its
        normalised split over those hubs (empty when no hub is on the path)."""
        th = self.theta.theta
        terms = {hub: th[hub - 1] * self.mark(hub, j) for hub, j in self.path_hubs(seg, pos)}
        A = math.fsum(terms.values())
        if A <= 0:
            return 0.0, {}
        return A, {h: v / A for h, v in terms.items()}


def _seed_int(seed) -> int:
    if seed is None:
        return 0
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    if isinstance(seed, np.random.Generator):
        return int(seed.integers(2**63))
    return int(np.random.SeedSequence(seed).generate_state(1, np.uint64)[0])


def sample_icrt(theta: ThetaSequence, horizon: float, seed) -> StickBreakTree:
    """Stick-breaking tree from the rate-``theta_i`` processes on ``[0, horizon]``."""
    if not theta.normalized:
        raise ParameterError("theta must be normalised")
    if not horizon > 0:
        raise ParameterError("horizon must be positive")
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1, np.uint64)[0])
    seed = _seed_int(seed)
    rng = np.random.default_rng([seed, 0x1C27])
    th = theta.theta
    counts = rng.poisson(th * horizon)
    hub_pos: dict[int, float] = {}
    cut_t, cut_h = [], []
    for i in np.flatnonzero(counts):
        pts = np.sort(rng.uniform(0.0, horizon, counts[i]))
        hub_pos[int(i) + 1] = float(pts[0])
        cut_t.append(pts[1:])
        cut_h.append(np.full(pts.size - 1, i + 1))
    cuts = np.concatenate(cut_t) if cut_t else np.empty(0)
    hubs = np.concatenate(cut_h).astype(np.int64) if cut_h else np.empty(0, np.int64)
    srt = np.argsort(cuts, kind="stable")
    cuts, hubs = cuts[srt], hubs[srt]
    eta = np.concatenate([[0.0], cuts])
    seg_end = np.concatenate([cuts, [horizon]])
    S = eta.size
    attach_seg = np.full(S, -1, dtype=np.int64)
    attach_pos = np.zeros(S)
    seg_hub = np.zeros(S, dtype=np.int64)
    seg_hub[1:] = hubs
    hub_seg = {h: max(int(np.searchsorted(eta, x, side="left")) - 1, 0) for h, x in hub_pos.items()}
    for k in range(1, S):
        h = int(hubs[k - 1])
        attach_pos[k] = hub_pos[h]
        attach_seg[k] = hub_seg[h]
    return StickBreakTree(theta, float(horizon), seed, eta, seg_end, attach_seg, attach_pos,
                          seg_hub, hub_pos, hub_seg)


# ---------------------------------------------------------------------------
# reduced trees


@dataclass
class ReducedTree:
    """Finite tree spanned by the root and the leaves ``1..J``.

    Vertex 0 is the root.  ``kind[v]`` is ``"root"``, ``"leaf"``, ``"hub"`` or
    ``"branch"``; ``label[v]`` is the leaf index ``j`` or hub index ``i``
    (``0`` otherwise).  ``edges`` are ``(parent, child)`` rows with positive
    ``lengths``.  ``leaf_values[j-1]`` is the truncated ``dA`` at leaf ``j``
    and ``leaf_measures[j-1]`` maps hubs on its root path to their mass.
    """

    kind: list[str]
    label: list[int]
    edges: np.ndarray
    lengths: np.ndarray
    leaf_values: np.ndarray
    leaf_measures: list[dict[int, float]]

    @property
    def leaves(self) -> list[int]:
        return [v for v, k in enumerate(self.kind) if k == "leaf"]

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())

    def leaf_vertex(self, j: int) -> int:
        for v, (k, lab) in enumerate(zip(self.kind, self.label)):
            if k == "leaf" and lab == j:
                return v
        raise KeyError(j)


def reduced_tree(t: StickBreakTree, I: int, J: int) -> ReducedTree:
    """Shape, edge lengths, leaf values and root-to-leaf measures for leaves ``1..J``;
    joinpoints of hubs ``<= I`` lying on the spanned part are kept as labelled vertices."""
    if J < 1 or J > t.n_leaves:
        raise ParameterError(f"need 1 <= J <= {t.n_leaves} sampled leaves, got {J}")
    # special points per spanned segment 0..J-1, keyed by (segment, position)
    points: dict[int, dict[float, tuple[str, int]]] = {k: {} for k in range(J)}
    for k in range(J):
        points[k][float(t.eta[k + 1])] = ("leaf", k + 1)
    for k in range(1, J):
        s, x = int(t.attach_seg[k]), float(t.attach_pos[k])
        points[s].setdefault(x, ("branch", 0))
    for hub, x in t.hub_pos.items():
        s = t.hub_seg[hub]
        if hub <= I and s < J:
            points[s][x] = ("hub", hub)
    kind, label = ["root"], [0]
    vid: dict[tuple[int, float], int] = {}
    edges, lengths = [], []
    for k in range(J):
        if k == 0:
            prev_v, prev_x = 0, 0.0
        else:
            prev_v = vid[(int(t.attach_seg[k]), float(t.attach_pos[k]))]
            prev_x = float(t.eta[k])
        for x in sorted(points[k]):
            knd, lab = points[k][x]
            v = len(kind)
            kind.append(knd)
            label.append(lab)
            vid[(k, x)] = v
            length = x - prev_x
            if not length > 0:
                raise AssertionError("reduced tree edge of non-positive length")
            edges.append((prev_v, v))
            lengths.append(length)
            prev_v, prev_x = v, x
    values, measures = [], []
    for j in range(1, J + 1):
        A, Q = t.path_measure(*t.leaf(j))
        values.append(A)
        measures.append(Q)
    return ReducedTree(kind, label, np.array(edges, dtype=np.int64).reshape(-1, 2),
                       np.array(lengths), np.array(values), measures)


# ---------------------------------------------------------------------------
# p-tree surrogates


def surrogate_pmf(theta: ThetaSequence, m: int, leaf_share: float = 0.01) -> np.ndarray:
    """``p`` on ``m`` vertices with ``p_i = s theta_i`` for ``i <= K`` and equal mass
    ``r`` on the other ``m - K`` vertices.

    ``s`` is chosen so that the light vertices contribute the fraction
    ``leaf_share`` of ``s**2`` to ``sigma(p)**2``; then
    ``p_i / sigma(p) = theta_i / sqrt(1 + leaf_share)`` for every hub, while
    ``sigma(p) ~ 1 / sqrt(leaf_share * m) -> 0``.
    """
    K = theta.K
    if m <= K:
        raise ParameterError("need m > K")
    if not leaf_share > 0:
        raise ParameterError("leaf_share must be positive")
    S = math.fsum(theta.theta.tolist())
    s = 1.0 / (S + math.sqrt(leaf_share * (m - K)))
    r = (1.0 - s * S) / (m - K)
    if r >= s * theta.theta[-1]:
        raise ParameterError("theta mass too concentrated for this m: light vertices would "
                             "outweigh the smallest hub")
    p = np.concatenate([s * theta.theta, np.full(m - K, r)])
    return p / p.sum()


def icrt_via_ptree(theta: ThetaSequence, m: int, seed, leaf_share: float = 0.01) -> OrderedTree:
    """p-tree on ``m`` vertices whose first ``K`` vertices play the hubs."""
    p = surrogate_pmf(theta, m, leaf_share)
    rng = _rng(seed)
    while True:
        try:
            return ptree_exploration(p, rng.random(m))
        except RuntimeError:  # pragma: no cover - rounding failure, redraw
            continue


def build_limit_space(theta: ThetaSequence, gamma: float, m: int, seed,
                      landmarks: int | None = None, leaf_share: float = 0.01,
                      pilot: int | None = None) -> MeasuredMetricSpace:
    """Tilted p-tree surrogate with surplus identifications, distances times ``sigma(p)``.

    ``a = gamma / sigma(p)``.  For ``m > 2000`` the returned space is restricted
    to ``landmarks`` (default 300) mass-sampled points.
    """
    if gamma < 0:
        raise ParameterError("gamma must be non-negative")
    p = surrogate_pmf(theta, m, leaf_share)
    sig = math.sqrt(math.fsum((p**2).tolist()))
    a = gamma / sig
    rng = _rng(seed)
    if pilot is None:
        pilot = int(np.clip(10**7 // m, 200, 10_000))
    if a == 0:
        t = icrt_via_ptree(theta, m, rng, leaf_share)
    else:
        t = TiltedSampler(p, a, rng, pilot=pilot).sample(1)[0]
    if landmarks is None and m > 2000:
        landmarks = 300
    space = build_modified_space(t, p, a, rng, landmarks=landmarks)
    return scale(space, sig)


def limit_component_space(c: EntranceBoundary, lam: float, i: int, m: int, seed,
                          horizon: float = math.inf, **kw) -> MeasuredMetricSpace:
    """Surrogate of the ``i``-th largest limit component (``i`` counted from 1)."""
    rng = _rng(seed)
    path = build_levy_path(c, lam, horizon, rng)
    exc = excursions(path)
    done = [e for e in exc if e.complete]
    if not 1 <= i <= len(done):
        raise ParameterError(f"excursion {i} not available ({len(done)} complete excursions)")
    gbar, theta, Gamma = component_limit_params(done[i - 1], c)
    theta = ThetaSequence(theta.theta)
    return scale(build_limit_space(theta, gbar, m, rng, **kw), Gamma)


def write_segments_csv(t: StickBreakTree, path: str | Path) -> None:
    rows = ["index,length,attach_segment,attach_offset,hub_label"]
    for k, (length, (j, off)) in enumerate(t.segments):
        rows.append(f"{k},{length!r},{j},{off!r},{int(t.seg_hub[k])}")
    Path(path).write_text("\n".join(rows) + "\n")
