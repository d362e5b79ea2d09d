"""Breadth-first exploration walk of G(x, t)."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from critgraphs.exploration import (explore, largest_masses, rescaled_walk, sum_squares_process,
                                    write_walk_csv)
from critgraphs.graphgen import components, sample_mc_graph
from critgraphs.weights import ParameterError, critical_iota, nr_to_mc_params, power_law_weights

LN2 = math.log(2.0)


def _critical_x(n, tau=3.5):
    x, t = nr_to_mc_params(power_law_weights(n, tau, critical_iota(tau)), 0.0, tau)
    return x.values, t


class TestSmallCases:
    def test_tiny_t_gives_singletons(self):
        x = np.linspace(2.0, 1.0, 50)
        trace, comps = explore(x, 1e-12, 0)
        assert trace.n_components == 50
        assert all(len(c.vertices) == 1 for c in comps)
        np.testing.assert_allclose(trace.excursion_lengths, x[trace.order])

    def test_two_vertices_half(self):
        x = np.full(2, math.sqrt(LN2))
        joined = np.mean([len(explore(x, 1.0, s)[1]) == 1 for s in range(20_000)])
        assert abs(joined - 0.5) < 4 * math.sqrt(0.25 / 20_000)

    def test_rejects_nonpositive_t(self):
        with pytest.raises(ParameterError):
            explore(np.ones(3), 0.0, 0)


class TestWalk:
    @given(seed=st.integers(0, 2**32))
    @settings(max_examples=30, deadline=None)
    def test_excursions_are_components(self, seed):
        x, t = _critical_x(500)
        trace, comps = explore(x, t, seed)
        assert trace.complete
        assert sorted(trace.order.tolist()) == list(range(500))
        parts = np.split(trace.order, trace.comp_first[1:-1])
        masses = np.array([x[p].sum() for p in parts])
        np.testing.assert_allclose(trace.excursion_lengths, masses, rtol=1e-12)
        np.testing.assert_allclose(sorted(masses, reverse=True), [c.mass for c in comps])
        # over a component the walk ends x_root below its start and never lower in between
        for (a, b), p in zip(trace.comp_intervals, parts):
            za, zb = trace.walk(a), trace.walk(b)
            np.testing.assert_allclose(za - zb, x[p[0]], atol=1e-9)
            inner = trace.event_times[(trace.event_times > a) & (trace.event_times < b)]
            probe = np.concatenate([inner, trace.T[(trace.T > a) & (trace.T < b)]])
            assert np.all(trace.walk(probe) > zb - 1e-9)

    def test_largest_masses_with_early_stop(self):
        x, t = _critical_x(800)
        fast = largest_masses(x, t, 10, 4)
        for r in range(10):
            trace, comps = explore(x, t, [4, r])
            np.testing.assert_allclose(fast[r], comps[0].mass, rtol=1e-12)

    def test_matches_graph_sampler(self):
        n, R = 100, 10_000
        x, t = _critical_x(n)
        ex = largest_masses(x, t, R, 1)
        gm = np.array([components(sample_mc_graph(x, t, [2, r]))[0].mass for r in range(R)])
        res = stats.ks_2samp(ex, gm)
        assert res.statistic <= 0.02, res


class TestTransforms:
    def test_sum_squares(self):
        x, t = _critical_x(300)
        trace, _ = explore(x, t, 3)
        s2 = float(np.sum(x**2))
        T, S, R = sum_squares_process(trace, 0.1)
        assert np.all(np.diff(S) > 0) and np.all(R <= S + 1e-15)
        np.testing.assert_allclose(S[-1], np.sum((x / s2) ** 2))
        _, S2, R2 = sum_squares_process(trace, 1e9)
        np.testing.assert_allclose(R2, S2)
        _, _, R0 = sum_squares_process(trace, 0.0)
        assert np.all(R0 == 0)
        np.testing.assert_allclose(T, trace.T)

    def test_rescaled_walk(self):
        x, t = _critical_x(300)
        trace, _ = explore(x, t, 3)
        ts, vs = rescaled_walk(trace, 2.0)
        np.testing.assert_allclose(vs, trace.walk(ts) / 2.0)
        with pytest.raises(ParameterError):
            rescaled_walk(trace, 0.0)

    def test_walk_csv(self, tmp_path):
        x, t = _critical_x(50)
        trace, _ = explore(x, t, 1)
        write_walk_csv(trace, tmp_path / "w.csv")
        lines = (tmp_path / "w.csv").read_text().splitlines()
        assert lines[0] == "explored_weight,walk_value,component_id"
        assert lines[1] == "0.0,0.0,0"
