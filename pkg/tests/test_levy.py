"""Lévy paths with entrance-boundary jumps, reflection, excursions and the thinned process."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critgraphs import levy
from critgraphs.levy import (Excursion, PiecewiseLinearPath, build_levy_path,
                             component_limit_params, excursions, largest_excursion_lengths,
                             nr_limit_constants, reflect, thinned_levy,
                             thinned_levy_hitting_times, zeta_series)
from critgraphs.weights import EntranceBoundary, ParameterError, entrance_boundary

# zeta_series(0.8) frozen from an independent 50-digit evaluation of -zeta_R(0.8)
ZETA_08 = 4.43753841589555


class TestPaths:
    def test_single_jump_excursion(self):
        for c1 in (0.5, 1.0, 2.0, 3.0):
            path = build_levy_path(EntranceBoundary(np.array([c1])), 0.0, math.inf, 4)
            assert path.drift == -c1**2
            exc = excursions(path)
            assert len(exc) == 1
            # up by c1, down at rate c1^2
            np.testing.assert_allclose(exc[0].length, 1 / c1, rtol=1e-12)
            np.testing.assert_allclose(exc[0].start, path.times[0])

    def test_expected_number_of_jumps(self):
        c = entrance_boundary(1.0, 3.5, 50)
        h = 2.0
        n = np.array([build_levy_path(c, 0.0, h, s).n_jumps for s in range(4000)])
        p = 1 - np.exp(-c.c * h)
        mean, var = p.sum(), (p * (1 - p)).sum()
        assert abs(n.mean() - mean) < 4 * math.sqrt(var / n.size)

    def test_lambda_shifts_drift_only(self):
        c = entrance_boundary(1.0, 3.5, 100)
        a, b = build_levy_path(c, 0.0, 5.0, 8), build_levy_path(c, 1.5, 5.0, 8)
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_allclose(b.drift - a.drift, 1.5)
        s = np.linspace(0, 5, 41)
        np.testing.assert_allclose(b.value(s) - a.value(s), 1.5 * s, atol=1e-12)

    def test_shared_clocks_across_truncations(self):
        small, big = entrance_boundary(1.0, 3.5, 20), entrance_boundary(1.0, 3.5, 40)
        a, b = build_levy_path(small, 0.0, math.inf, 2), build_levy_path(big, 0.0, math.inf, 2)
        ta = dict(zip(a.index.tolist(), a.times.tolist()))
        tb = dict(zip(b.index.tolist(), b.times.tolist()))
        assert all(tb[j] == t for j, t in ta.items())

    def test_value_is_cadlag_sum(self):
        p = PiecewiseLinearPath(-1.0, np.array([1.0, 2.0]), np.array([3.0, 0.5]),
                                np.array([0, 1]), 10.0)
        np.testing.assert_allclose(p.value([0.0, 0.999, 1.0, 2.0, 4.0]),
                                   [0.0, -0.999, 2.0, 1.5, -0.5])

    def test_bad_horizon(self):
        with pytest.raises(ParameterError):
            build_levy_path(EntranceBoundary(np.ones(1)), 0.0, 0.0, 0)

    def test_unsorted_times_rejected(self):
        with pytest.raises(ParameterError):
            PiecewiseLinearPath(0.0, np.array([2.0, 1.0]), np.ones(2), np.arange(2), 3.0)


class TestReflection:
    @given(seed=st.integers(0, 2**32), lam=st.floats(-2.0, 2.0))
    @settings(max_examples=40, deadline=None)
    def test_nonnegative_and_dominates(self, seed, lam):
        path = build_levy_path(entrance_boundary(1.0, 3.5, 30), lam, 6.0, seed)
        R = reflect(path)
        s = np.linspace(0, 6, 301)
        assert np.all(R.value(s) >= 0)
        assert np.all(R.value(s) >= path.value(s) - 1e-12)
        mins = R.running_min(s)
        assert np.all(np.diff(mins) <= 1e-12)
        assert np.all(mins <= 1e-12)

    def test_idempotent(self):
        R = reflect(build_levy_path(entrance_boundary(1.0, 3.5, 30), 0.0, 6.0, 1))
        RR = reflect(R)
        s = np.linspace(0, 6, 101)
        np.testing.assert_array_equal(RR.value(s), R.value(s))

    def test_explicit_minimum(self):
        # drift -1, jump 3 at time 1: minimum -1 reached at time 1-, then V - (-1)
        p = PiecewiseLinearPath(-1.0, np.array([1.0]), np.array([3.0]), np.array([0]), 10.0)
        R = reflect(p)
        np.testing.assert_allclose(R.value([0.5, 1.0, 3.0, 4.0, 5.0]), [0.0, 3.0, 1.0, 0.0, 0.0])

    def test_nonzero_start_rejected(self):
        p = PiecewiseLinearPath(-1.0, np.empty(0), np.empty(0), np.empty(0, np.int64), 1.0,
                                start=1.0)
        with pytest.raises(ParameterError):
            reflect(p)


class TestExcursions:
    def test_no_jumps_no_excursions(self):
        p = PiecewiseLinearPath(-1.0, np.empty(0), np.empty(0), np.empty(0, np.int64), 5.0)
        exc = excursions(p)
        assert len(exc) == 0 and exc.incomplete == []

    def test_two_overlapping_jumps_merge(self):
        p = PiecewiseLinearPath(-1.0, np.array([1.0, 1.5]), np.array([1.0, 1.0]),
                                np.array([0, 1]), math.inf)
        exc = excursions(p)
        assert len(exc) == 1
        assert exc[0].jump_indices == (0, 1)
        np.testing.assert_allclose([exc[0].start, exc[0].end], [1.0, 3.0])

    def test_clipped_excursion_excluded(self):
        p = PiecewiseLinearPath(-1.0, np.array([1.0, 4.5]), np.array([1.0, 1.0]),
                                np.array([0, 1]), 5.0)
        exc = excursions(p)
        assert [e.jump_indices for e in exc] == [(0,)]
        assert len(exc.incomplete) == 1 and not exc.incomplete[0].complete

    @given(seed=st.integers(0, 2**32))
    @settings(max_examples=30, deadline=None)
    def test_disjoint_sorted_and_zero_between(self, seed):
        path = build_levy_path(entrance_boundary(1.0, 3.5, 200), 0.0, math.inf, seed)
        exc = excursions(path)
        assert np.all(np.diff(exc.lengths) <= 0)
        iv = sorted((e.start, e.end) for e in exc)
        assert all(a[1] <= b[0] for a, b in zip(iv, iv[1:]))
        R = reflect(path)
        for e in exc:
            inside = np.linspace(e.start, e.end, 12)[1:-1]
            assert np.all(R.value(inside) > 0)
            assert R.value(e.end) == pytest.approx(0.0, abs=1e-9)
        # every jump belongs to exactly one excursion
        assert sorted(j for e in exc for j in e.jump_indices) == sorted(path.index.tolist())

    def test_largest_lengths_shape(self):
        L = largest_excursion_lengths(entrance_boundary(1.0, 3.5, 100), 0.0, 20, 1, k=3)
        assert L.shape == (20, 3)
        assert np.all(np.diff(L, axis=1) <= 0)


class TestComponentParams:
    def test_two_jump_excursion(self):
        c = np.array([0.6, 0.8])
        exc = Excursion(0.0, 2.0, (0, 1))
        gbar, theta, Gamma = component_limit_params(exc, c)
        np.testing.assert_allclose(theta.theta, [0.8, 0.6])
        np.testing.assert_allclose([gbar, Gamma], [2.0, 2.0])

    def test_errors(self):
        with pytest.raises(ParameterError):
            component_limit_params(Excursion(0.0, 1.0, (0,), complete=False), np.ones(1))
        with pytest.raises(ParameterError):
            component_limit_params(Excursion(0.0, 1.0, ()), np.ones(1))


class TestZeta:
    def test_matches_riemann_zeta(self):
        mpmath = pytest.importorskip("mpmath")
        for beta in (0.55, 0.6667, 0.8, 0.95):
            np.testing.assert_allclose(zeta_series(beta), -float(mpmath.zeta(beta)), rtol=1e-12)

    def test_frozen_value(self):
        np.testing.assert_allclose(zeta_series(0.8), ZETA_08, rtol=1e-13)

    def test_terms_nonnegative_and_partial_sums_increase(self):
        beta = 0.8
        i = np.arange(1, 2001, dtype=np.float64)
        terms = (i ** (1 - beta) - (i - 1) ** (1 - beta)) / (1 - beta) - i ** (-beta)
        assert np.all(terms >= 0)
        partial = np.cumsum(terms)
        assert partial[-1] < zeta_series(beta)

    def test_beta_range(self):
        for beta in (0.0, 1.0):
            with pytest.raises(ParameterError):
                zeta_series(beta)

    def test_nr_constants(self):
        c, zeta, t = nr_limit_constants(3.5, 1.0, 2.0, 0.5, J=10)
        np.testing.assert_allclose(c.c, 0.5 * np.arange(1, 11) ** -0.4)
        np.testing.assert_allclose(zeta, -ZETA_08 / 2, rtol=1e-12)
        np.testing.assert_allclose(t, (0.5 + zeta) / 2)


class TestThinned:
    def test_zero_jump_size(self):
        path, H = thinned_levy(1, 1.0, 0.0, 1.0, 5.0, 0)
        np.testing.assert_allclose(path.drift, 1.0)
        assert H is None
        _, H = thinned_levy(1, 1.0, 0.0, -1.0, 5.0, 0)
        assert H == 0.0

    def test_flip_probability(self):
        a, horizon, j = 1.0, 1.0, 2
        hits = np.mean([j in thinned_levy(1, a, 1.0, 0.0, horizon, s, J_thin=5)[0].index
                        for s in range(20_000)])
        p = 1 - math.exp(-a * j ** -0.4 * horizon)
        assert abs(hits - p) < 4 * math.sqrt(p * (1 - p) / 20_000)

    def test_index_i_excluded(self):
        for s in range(50):
            path, _ = thinned_levy(3, 1.0, 1.0, 0.0, 50.0, s, J_thin=10)
            assert 3 not in path.index

    def test_hitting_time_agrees_with_path(self):
        path, H = thinned_levy(1, 1.0, 1.0, 0.0, 100.0, 5, J_thin=100)
        assert H is not None and H > 0
        np.testing.assert_allclose(path.value(H), 0.0, atol=1e-9)
        s = np.linspace(0, H, 200, endpoint=False)
        assert np.all(path.value(s) > -1e-12)

    def test_batch_hits_nonnegative(self):
        h = thinned_levy_hitting_times(500, 1, 1.0, 1.0, 0.0, 50.0, 3, J_thin=200)
        assert h.shape == (500,)
        assert np.all(h[~np.isnan(h)] > 0)


def test_csv_writers(tmp_path):
    path = build_levy_path(entrance_boundary(1.0, 3.5, 20), 0.0, math.inf, 1)
    levy.write_path_csv(path, tmp_path / "p.csv")
    levy.write_excursions_csv(excursions(path), tmp_path / "e.csv")
    assert (tmp_path / "p.csv").read_text().startswith("time,value\n0.0,0.0")
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "rank,start,end,length,n_jumps"
