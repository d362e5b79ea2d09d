"""p-tree constructions, depth-first quantities, tilt, surplus edges and the glued space."""
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.sparse import csgraph

from critgraphs import graphgen, ptree
from critgraphs.ptree import (OrderedTree, birthday_tree_from_sequence, build_modified_space,
                              dfs_annotate, enumerate_ordered_trees, enumerate_rooted_trees,
                              log_tilt, ordered_ptree_prob, ptree_birthday, ptree_exploration,
                              read_tree, rooted_ptree_prob, sample_ptree_batch, sample_surplus,
                              sample_tilted_ptree, tilted_table, tree_metric_space, write_tree)
from critgraphs.weights import ParameterError


def _tv(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def _random_tree(m, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(m))
    return ptree_exploration(p, rng.random(m)), p


@st.composite
def trees(draw, max_m=40):
    m = draw(st.integers(1, max_m))
    seed = draw(st.integers(0, 2**32 - 1))
    return _random_tree(m, seed)


class TestExploration:
    def test_single_vertex(self):
        t = ptree_exploration([1.0], [0.3])
        assert t.m == 1 and t.root == 0

    def test_hand_traced_golden(self):
        # u = (0.9, 0.1, 0.5), p = (0.5, 0.3, 0.2): F(u_v-) = -0.4, -0.1, -0.2 -> root 0;
        # shifted positions y = (0, 0.2, 0.6); vertex 0 takes y < 0.5 (vertex 1),
        # vertex 1 takes y < 0.8 (vertex 2)
        t = ptree_exploration([0.5, 0.3, 0.2], [0.9, 0.1, 0.5])
        np.testing.assert_array_equal(t.parent, [-1, 0, 1])
        np.testing.assert_array_equal(t.order, [0, 1, 2])

    def test_nondistinct_u_rejected(self):
        with pytest.raises(ParameterError):
            ptree_exploration([0.5, 0.5], [0.2, 0.2])

    def test_uniform_m3_chi_square(self):
        par, _ = sample_ptree_batch(np.full(3, 1 / 3), 100_000, 0)
        counts = Counter(map(tuple, par.tolist()))
        keys = enumerate_rooted_trees(3)
        assert len(keys) == 9 and set(counts) == set(keys)
        obs = np.array([counts[k] for k in keys])
        assert stats.chisquare(obs).pvalue > 1e-3

    @pytest.mark.parametrize("m", [3, 4])
    def test_exploration_vs_enumeration(self, m):
        p = np.arange(1, m + 1) / (m * (m + 1) / 2)
        par, _ = sample_ptree_batch(p, 100_000, m)
        counts = Counter(map(tuple, par.tolist()))
        keys = enumerate_rooted_trees(m)
        law = np.array([rooted_ptree_prob(k, p) for k in keys])
        np.testing.assert_allclose(law.sum(), 1.0, rtol=1e-12)
        assert _tv([counts[k] / 100_000 for k in keys], law) <= 0.02

    def test_ordered_law_uniform_child_order(self):
        p = np.array([0.4, 0.35, 0.25])
        par, ords = sample_ptree_batch(p, 100_000, 7)
        counts = Counter(zip(map(tuple, par.tolist()), map(tuple, ords.tolist())))
        trees_ = enumerate_ordered_trees(3)
        law = np.array([ordered_ptree_prob(t, p) for t in trees_])
        np.testing.assert_allclose(law.sum(), 1.0, rtol=1e-12)
        assert _tv([counts[t.key] / 100_000 for t in trees_], law) <= 0.02

    @given(trees())
    @settings(max_examples=80, deadline=None)
    def test_valid_tree(self, tp):
        t, _ = tp
        assert np.sum(t.parent < 0) == 1
        assert sorted(t.order.tolist()) == list(range(t.m))
        assert t.out_degrees.sum() == t.m - 1


class TestBirthday:
    def test_sequence_rule(self):
        # 1-indexed Y = (1, 2, 1, 3) on vertices {0, 1, 2}
        t, reps = birthday_tree_from_sequence([0, 1, 0, 2])
        assert t.root == 0
        assert {tuple(e) for e in t.edges.tolist()} == {(0, 1), (0, 2)}
        assert reps[0] == 1

    @pytest.mark.parametrize("m", [3, 4])
    def test_birthday_vs_enumeration(self, m):
        p = np.arange(1, m + 1) / (m * (m + 1) / 2)
        rng = np.random.default_rng(100 + m)
        counts = Counter(tuple(ptree_birthday(p, rng)[0].parent.tolist()) for _ in range(100_000))
        keys = enumerate_rooted_trees(m)
        law = [rooted_ptree_prob(k, p) for k in keys]
        assert _tv([counts[k] / 100_000 for k in keys], law) <= 0.02

    def test_repeat_marginal_is_p(self):
        p = np.array([0.1, 0.2, 0.3, 0.4])
        rng = np.random.default_rng(5)
        first = np.array([ptree_birthday(p, rng)[1][0] for _ in range(50_000)])
        freq = np.bincount(first, minlength=4) / first.size
        assert np.max(np.abs(freq - p)) < 0.01

    def test_repeat_independent_of_tree(self):
        p = np.array([0.5, 0.3, 0.2])
        rng = np.random.default_rng(6)
        pairs = [ptree_birthday(p, rng) for _ in range(40_000)]
        root0 = np.array([t.root == 0 for t, _ in pairs])
        rep = np.array([r[0] for _, r in pairs])
        # P(repeat = 0 | root = 0) vs P(repeat = 0 | root != 0)
        a, b = np.mean(rep[root0] == 0), np.mean(rep[~root0] == 0)
        se = math.sqrt(0.25 / root0.sum() + 0.25 / (~root0).sum())
        assert abs(a - b) < 4 * se

    def test_incomplete_sequence_rejected(self):
        with pytest.raises(ParameterError):
            birthday_tree_from_sequence([0, 1], m=3)


class TestEnumeration:
    @pytest.mark.parametrize("m", [1, 2, 3, 4, 5])
    def test_cayley_count(self, m):
        assert len(enumerate_rooted_trees(m)) == m ** (m - 1)

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_laws_normalised(self, m):
        rng = np.random.default_rng(m)
        p = rng.dirichlet(np.ones(m))
        np.testing.assert_allclose(sum(rooted_ptree_prob(k, p) for k in enumerate_rooted_trees(m)),
                                   1.0, rtol=1e-12)
        np.testing.assert_allclose(sum(ordered_ptree_prob(t, p) for t in enumerate_ordered_trees(m)),
                                   1.0, rtol=1e-12)


class TestDfsAnnotation:
    def test_root_with_two_children(self):
        # vertices 1, 2, 3 of the example are 0, 1, 2 here
        p = np.array([0.5, 0.3, 0.2])
        a = 2.0
        t = OrderedTree.from_children(0, {0: [1, 2]})
        ann = dfs_annotate(t, p, a, with_edges=True)
        assert ann.permitted_edges == frozenset({(1, 2)})
        np.testing.assert_allclose(ann.dA, [0.0, 0.2, 0.0], atol=1e-15)
        np.testing.assert_allclose(ann.Lambda, a * 0.3 * 0.2, rtol=1e-14)

    def test_path_tree(self):
        t = OrderedTree.from_children(0, {0: [1], 1: [2]})
        ann = dfs_annotate(t, [0.2, 0.3, 0.5], 3.0, with_edges=True)
        assert ann.permitted_edges == frozenset()
        assert ann.Lambda == 0.0 and ann.tilt_Lbar == 1.0

    @given(k=st.integers(1, 8), data=st.data())
    def test_star(self, k, data):
        w = np.array(data.draw(st.lists(st.floats(0.01, 1.0), min_size=k + 1, max_size=k + 1)))
        p = w / w.sum()
        order = data.draw(st.permutations(list(range(1, k + 1))))
        t = OrderedTree.from_children(0, {0: order})
        a = 1.7
        expected = a * sum(p[order[i]] * p[order[j]] for i in range(k) for j in range(i + 1, k))
        np.testing.assert_allclose(dfs_annotate(t, p, a).Lambda, expected, rtol=1e-12, atol=1e-15)

    @given(trees(max_m=100), st.floats(0.0, 50.0))
    @settings(max_examples=200, deadline=None)
    def test_lambda_two_formulas_and_bounds(self, tp, a):
        t, p = tp
        ann = dfs_annotate(t, p, a, with_edges=True)
        pair_sum = a * sum(p[k] * p[l] for k, l in ann.permitted_edges)
        np.testing.assert_allclose(ann.Lambda, pair_sum, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(ann.Lambda, a * float(np.dot(p, ann.dA)), rtol=1e-10, atol=1e-12)
        assert 1.0 - 1e-12 <= ann.tilt_I <= math.exp(a * p.max()) * (1 + 1e-12)
        np.testing.assert_allclose(ann.tilt_Lbar, math.exp(ann.Lambda), rtol=1e-12)
        np.testing.assert_allclose(math.log(ann.tilt_L), log_tilt(t, p, a), rtol=1e-9, atol=1e-12)
        assert ann.dA.max() <= ann.active_weight.max() + 1e-12

    def test_permitted_edges_from_active_sets(self):
        t, p = _random_tree(30, 4)
        ann = dfs_annotate(t, p, 1.0, with_edges=True)
        direct = set()
        for stack in ann.active_sets:
            v = stack[-1]
            direct.update((v, u) for u in stack[:-1])
        assert direct == set(ann.permitted_edges)


class TestTilted:
    def test_small_a_recovers_untilted(self):
        p = np.full(3, 1 / 3)
        trees_, probs = tilted_table(p, 1e-4)
        base = [ordered_ptree_prob(t, p) for t in trees_]
        assert _tv(probs, base) < 1e-3

    def test_rejection_matches_table(self):
        p = np.full(3, 1 / 3)
        trees_, probs = tilted_table(p, 1.0)
        index = {t.key: i for i, t in enumerate(trees_)}
        out = sample_tilted_ptree(p, 1.0, 3, mode="rejection", size=100_000)
        counts = np.bincount([index[t.key] for t in out], minlength=len(trees_))
        assert _tv(counts / counts.sum(), probs) <= 0.02

    def test_single_vertex(self):
        t = sample_tilted_ptree([1.0], 2.0, 0)
        assert t.m == 1

    def test_exact_enum_size_limit(self):
        with pytest.raises(ParameterError):
            sample_tilted_ptree(np.full(6, 1 / 6), 1.0, 0, mode="exact-enum")

    def test_unknown_mode(self):
        with pytest.raises(ParameterError):
            sample_tilted_ptree([0.5, 0.5], 1.0, 0, mode="magic")

    def test_envelope_restart_on_overflow(self):
        # a one-tree pilot makes an overflow almost certain at strong tilt
        sampler = ptree.TiltedSampler(np.full(5, 0.2), 40.0, 1, pilot=1, safety=1.0)
        sampler.sample(200)
        assert sampler.restarts >= 1
        assert sampler.overflow_rate > 0


class TestSurplus:
    def test_path_tree_has_no_surplus(self):
        t = OrderedTree.from_children(0, {0: [1], 1: [2]})
        g = ptree.add_surplus_edges(t, [0.3, 0.3, 0.4], 5.0, 0)
        assert g.edge_set() == frozenset({(0, 1), (1, 2)})

    def test_surplus_edges_are_permitted(self):
        t, p = _random_tree(40, 9)
        ann = dfs_annotate(t, p, 30.0, with_edges=True)
        rng = np.random.default_rng(0)
        for _ in range(200):
            for L, R, y in sample_surplus(t, p, 30.0, rng, annotation=ann):
                assert (L, R) in ann.permitted_edges
                assert t.parent[R] == y

    def test_count_is_poisson_lambda(self):
        t, p = _random_tree(50, 2)
        a = 20.0
        ann = dfs_annotate(t, p, a)
        rng = np.random.default_rng(8)
        N = np.array([len(sample_surplus(t, p, a, rng, annotation=ann)) for _ in range(20_000)])
        se_mean = math.sqrt(ann.Lambda / N.size)
        se_var = math.sqrt((ann.Lambda + 2 * ann.Lambda**2) / N.size)
        assert abs(N.mean() - ann.Lambda) < 3 * se_mean
        assert abs(N.var(ddof=1) - ann.Lambda) < 3 * se_var

    def test_planar_poisson_counts(self):
        t, p = _random_tree(50, 3)
        a = 20.0
        ann = dfs_annotate(t, p, a)
        N = ptree.surplus_point_counts(t, p, a, 50_000, 1, annotation=ann)
        assert abs(N.mean() - ann.Lambda) < 3 * math.sqrt(ann.Lambda / N.size)

    def test_first_endpoint_law(self):
        t, p = _random_tree(6, 12)
        a = 30.0
        ann = dfs_annotate(t, p, a)
        rng = np.random.default_rng(4)
        firsts = [L for _ in range(20_000) for L, _, _ in sample_surplus(t, p, a, rng, annotation=ann)]
        freq = np.bincount(firsts, minlength=6) / len(firsts)
        target = p * ann.dA / np.dot(p, ann.dA)
        assert np.max(np.abs(freq - target)) < 0.01


class TestModifiedSpace:
    def test_no_draws_is_tree_metric(self):
        t, p = _random_tree(20, 1)
        X = build_modified_space(t, p, 1.0, 0, draws=[])
        T = tree_metric_space(t, p)
        np.testing.assert_array_equal(X.dist, T.dist)
        np.testing.assert_allclose(X.mu, p)

    def test_one_identification_floyd_warshall(self):
        for seed in range(10):
            t, p = _random_tree(int(np.random.default_rng(seed).integers(5, 51)), seed)
            depth = np.zeros(t.m, dtype=int)
            for v in t.order[1:]:
                depth[v] = depth[t.parent[v]] + 1
            x = int(np.argmax(depth))
            y = t.root
            X = build_modified_space(t, p, 1.0, 0, draws=[(x, -1, y)])
            # brute force: tree graph with x and y contracted, all-pairs Floyd-Warshall
            m = t.m
            relabel = np.arange(m)
            relabel[[x, y]] = min(x, y)
            keep = np.unique(relabel)
            pos = {v: i for i, v in enumerate(keep.tolist())}
            W = np.full((keep.size, keep.size), np.inf)
            np.fill_diagonal(W, 0)
            for u, v in t.edges.tolist():
                a, b = pos[relabel[u]], pos[relabel[v]]
                if a != b:
                    W[a, b] = W[b, a] = 1
            D = csgraph.floyd_warshall(W)
            np.testing.assert_array_equal(X.dist, D)
            merged = pos[min(x, y)]
            np.testing.assert_allclose(X.mu[merged], p[x] + p[y])

    def test_measure_is_probability(self):
        t, p = _random_tree(60, 5)
        X = build_modified_space(t, p, 40.0, 2)
        np.testing.assert_allclose(X.mu.sum(), 1.0)

    def test_shortcut_never_increases_distance(self):
        t, p = _random_tree(40, 8)
        T = tree_metric_space(t, p)
        draws = sample_surplus(t, p, 50.0, 3)
        X = build_modified_space(t, p, 50.0, 0, draws=draws)
        # gluing L onto an ancestor maps every tree geodesic to a path of at most the same length
        cls = np.arange(t.m)
        for L, _, y in draws:
            cls[cls == cls[L]] = cls[y]
        _, cls = np.unique(cls, return_inverse=True)
        assert X.dist.shape == (cls.max() + 1,) * 2
        assert np.all(X.dist[np.ix_(cls, cls)] <= T.dist)


class TestCompositeLaw:
    def test_tree_plus_surplus_equals_connected_conditioned(self):
        m, a = 4, 1.0
        p = np.full(m, 1 / m)
        N = 100_000
        codes, _ = graphgen.sample_connected_conditioned_codes(p, a, N, 1)
        bit = {pq: k for k, pq in enumerate(graphgen.pair_index(m))}
        rng = np.random.default_rng(2)
        trees_ = sample_tilted_ptree(p, a, rng, mode="exact-enum", size=N)
        ann = {}
        tree_codes = np.empty(N, dtype=np.int64)
        for i, t in enumerate(trees_):
            if t.key not in ann:
                ann[t.key] = dfs_annotate(t, p, a)
            pairs = t.edges.tolist() + [(L, R) for L, R, _ in sample_surplus(t, p, a, rng, ann[t.key])]
            tree_codes[i] = sum({1 << bit[(min(u, v), max(u, v))] for u, v in pairs})
        A = np.bincount(tree_codes, minlength=64) / N
        B = np.bincount(codes, minlength=64) / N
        assert np.all(graphgen.connected_mask(np.flatnonzero(A), m))
        assert _tv(A, B) <= 0.02


def test_tree_round_trip(tmp_path):
    t, _ = _random_tree(25, 3)
    write_tree(t, tmp_path / "t.txt")
    assert read_tree(tmp_path / "t.txt") == t
    assert (tmp_path / "t.txt").read_text().startswith(f"t {t.root} ")
