"""Stick-breaking ICRT, reduced trees, p-tree surrogates and limit spaces."""
import math

import numpy as np
import pytest

from critgraphs import levy
from critgraphs.icrt import (build_limit_space, icrt_via_ptree, limit_component_space,
                             reduced_tree, sample_icrt, surrogate_pmf, write_segments_csv)
from critgraphs.metric import typical_distance_sample
from critgraphs.weights import EntranceBoundary, ParameterError, ThetaSequence, entrance_boundary

ONE = ThetaSequence(np.array([1.0]))


def _theta(K, tau=3.5):
    return ThetaSequence(entrance_boundary(1.0, tau, K).c)


class TestStickBreaking:
    def test_single_hub_star(self):
        for seed in range(20):
            t = sample_icrt(ONE, 6.0, seed)
            assert set(t.hub_pos) == {1}
            # every branch after the first segment hangs from the joinpoint of hub 1
            np.testing.assert_allclose(t.attach_pos[1:], t.hub_pos[1])
            np.testing.assert_array_equal(t.attach_seg[1:], t.hub_seg[1])

    def test_expected_cutpoints(self):
        # E[(N(2) - 1)^+] = 2 - (1 - e^-2) = 1 + e^-2 for a rate-one process on [0, 2]
        cuts = np.array([sample_icrt(ONE, 2.0, s).n_segments - 1 for s in range(20_000)])
        se = cuts.std(ddof=1) / math.sqrt(cuts.size)
        assert abs(cuts.mean() - (1 + math.exp(-2))) < 3 * se

    def test_seed_determinism(self):
        th = _theta(50)
        a, b = sample_icrt(th, 4.0, 17), sample_icrt(th, 4.0, 17)
        np.testing.assert_array_equal(a.eta, b.eta)
        np.testing.assert_array_equal(a.attach_seg, b.attach_seg)
        assert a.mark(1, 2) == b.mark(1, 2)

    def test_valid_tree(self):
        t = sample_icrt(_theta(200), 5.0, 3)
        assert t.attach_seg[0] == -1
        assert np.all(t.attach_seg[1:] < np.arange(1, t.n_segments))
        assert np.all(t.attach_seg[1:] >= 0)
        np.testing.assert_allclose(t.total_length, t.segment_lengths.sum())
        np.testing.assert_allclose(t.total_length, t.seg_end[-1])
        # a branch attaches inside (or at the end of) its host segment
        for k in range(1, t.n_segments):
            h = t.attach_seg[k]
            assert t.eta[h] <= t.attach_pos[k] <= t.seg_end[h]

    def test_no_cutpoint_single_segment(self):
        t = sample_icrt(ThetaSequence(np.array([1.0])), 1e-6, 0)
        assert t.n_segments == 1

    def test_marks_are_uniform(self):
        marks = np.array([sample_icrt(ONE, 3.0, s).mark(1, 0) for s in range(4000)])
        assert 0 < marks.min() and marks.max() < 1
        assert abs(marks.mean() - 0.5) < 4 * math.sqrt(1 / 12 / marks.size)

    def test_hub_density_grows_with_K(self):
        counts = []
        for K in (10, 100, 1000):
            th = _theta(K)
            hubs = [len([h for h, x in sample_icrt(th, 2.0, s).hub_pos.items() if x <= 2.0])
                    for s in range(200)]
            counts.append(np.mean(hubs))
        assert counts[0] < counts[1] < counts[2]

    def test_unnormalised_theta_rejected(self):
        with pytest.raises(ParameterError):
            sample_icrt(ThetaSequence(np.array([2.0]), normalized=False), 1.0, 0)


class TestReducedTree:
    def _tree_with_leaves(self, th, J, horizon=8.0):
        for seed in range(1000):
            t = sample_icrt(th, horizon, seed)
            if t.n_leaves >= J:
                return t
        raise AssertionError("no tree with enough leaves")

    def test_single_leaf_is_one_segment(self):
        t = self._tree_with_leaves(_theta(20), 1)
        r = reduced_tree(t, 0, 1)
        assert r.kind == ["root", "leaf"]
        np.testing.assert_allclose(r.lengths, [t.eta[1]])

    def test_structure_and_measures(self):
        th = _theta(100)
        t = self._tree_with_leaves(th, 6)
        r = reduced_tree(t, 10, 6)
        assert r.kind.count("leaf") == 6
        assert np.all(r.lengths > 0)
        for Q in r.leaf_measures:
            if Q:
                np.testing.assert_allclose(sum(Q.values()), 1.0, rtol=1e-14)
        # total length of the spanning tree is at most the stick length
        assert r.lengths.sum() <= t.total_length + 1e-12
        # root-to-leaf distances equal the leaf positions' depths
        for j in range(1, 7):
            seg, pos = t.leaf(j)
            np.testing.assert_allclose(t.distance((0, 0.0), (seg, pos)), t.depth(seg, pos))

    def test_single_hub_leaf_value_is_mark(self):
        for seed in range(50):
            t = sample_icrt(ONE, 5.0, seed)
            if t.n_leaves < 1:
                continue
            r = reduced_tree(t, 1, 1)
            seg, pos = t.leaf(1)
            hubs = t.path_hubs(seg, pos)
            if hubs:
                (hub, j), = hubs
                np.testing.assert_allclose(r.leaf_values[0], t.mark(hub, j))
                assert r.leaf_measures[0] == {1: pytest.approx(1.0)}

    def test_too_many_leaves(self):
        t = sample_icrt(ONE, 1.0, 0)
        with pytest.raises(ParameterError):
            reduced_tree(t, 1, t.n_leaves + 1)


class TestSurrogate:
    def test_uniform_when_theta_trivial(self):
        # one hub carrying almost nothing: the other vertices share the mass equally
        p = surrogate_pmf(ThetaSequence(np.array([1.0])), 1000, leaf_share=0.01)
        np.testing.assert_allclose(p.sum(), 1.0)
        assert np.all(p[1:] == p[1])

    def test_theta_gap(self):
        th = _theta(10)
        p = surrogate_pmf(th, 10_000)
        sigma = math.sqrt(float(np.sum(p**2)))
        assert np.max(np.abs(p[:10] / sigma - th.theta)) < 0.01

    def test_infeasible_split(self):
        with pytest.raises(ParameterError):
            surrogate_pmf(_theta(10), 11, leaf_share=100.0)
        with pytest.raises(ParameterError):
            surrogate_pmf(_theta(10), 10)

    def test_hub_degree_grows(self):
        th = _theta(10)
        deg = {m: np.mean([icrt_via_ptree(th, m, [m, s]).out_degrees[0] for s in range(100)])
               for m in (1000, 10_000)}
        assert deg[10_000] > deg[1000]


class TestLimitSpaces:
    def test_gamma_zero_no_identifications(self):
        th = _theta(10)
        X = build_limit_space(th, 0.0, 500, 1)
        assert X.k == 500
        np.testing.assert_allclose(X.mu.sum(), 1.0)

    def test_probability_measure_with_tilt(self):
        X = build_limit_space(_theta(10), 1.0, 500, 2)
        np.testing.assert_allclose(X.mu.sum(), 1.0)
        assert X.k <= 500

    def test_distance_rescaling_over_m(self):
        # unit-length tree distances multiplied by sigma(p): sigma(p) shrinks over the m-grid
        # while the unscaled graph distances grow
        th = _theta(10)
        sig, raw = [], []
        for m in (1000, 10_000, 100_000):
            p = surrogate_pmf(th, m)
            s = math.sqrt(float(np.sum(p**2)))
            X = build_limit_space(th, 0.0, m, 5, landmarks=200)
            d = typical_distance_sample(X, 4000, 1)
            np.testing.assert_allclose(d / s, np.round(d / s), atol=1e-9)
            sig.append(s)
            raw.append(float(np.mean(d / s)))
        assert sig[0] > sig[1] > sig[2]
        assert raw[0] < raw[1] < raw[2]

    def test_component_space_single_jump(self):
        c1 = 2.0
        c = EntranceBoundary(np.array([c1]))
        X = limit_component_space(c, 0.0, 1, 300, 3)
        # theta = (1), gamma_bar = 1, Gamma = 1/c1^2: distances scaled by 1/4 of the base space
        exc = levy.excursions(levy.build_levy_path(c, 0.0, math.inf, 3))[0]
        gbar, theta, Gamma = levy.component_limit_params(exc, c)
        assert theta.K == 1 and gbar == pytest.approx(1.0) and Gamma == pytest.approx(0.25)
        np.testing.assert_allclose(X.mu.sum(), 1.0)

    def test_missing_excursion(self):
        with pytest.raises(ParameterError):
            limit_component_space(EntranceBoundary(np.array([1.0])), 0.0, 5, 100, 0)


def test_segments_csv(tmp_path):
    t = sample_icrt(_theta(20), 3.0, 1)
    write_segments_csv(t, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "index,length,attach_segment,attach_offset,hub_label"
    assert len(lines) == t.n_segments + 1
