"""Experiment configuration, orchestration and reports.

Config grammar
--------------
One ``key = value`` pair per line; ``#`` starts a comment; blank lines are
ignored.  Values are JSON literals (numbers, strings in double quotes, lists,
``null``, ``true``/``false``); a bare word is read as a string.  Keys of the
form ``tol.<name>`` override the tolerance ``<name>`` of the experiment.
:meth:`ExperimentConfig.dumps` writes every field in this grammar, so a
config survives a write/read round trip unchanged.

Every experiment is a pair ``simulate(cfg) -> records`` and
``summarize(records, cfg) -> (summary, checks)``.  :func:`run` writes the
records to ``records.csv`` and the summary to ``summary.json``; because the
summary is a function of the records alone, it can always be recomputed from
the CSV file (see :func:`recompute_summary`).

Replica ``r`` of sweep point ``k`` draws from ``split_seed(split_seed(seed, k), r)``
so results do not depend on the number of worker threads.
"""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable

import numpy as np
from scipy import stats
from scipy.sparse import csgraph

from . import branching, graphgen, levy, metric, ptree
from .exploration import largest_masses
from .seeding import split_seed
from .weights import (EntranceBoundary, ExponentSet, ParameterError, critical_iota,
                      entrance_boundary, nr_to_mc_params, power_law_weights)

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "EXPERIMENTS",
    "CRITERIA",
    "run",
    "recompute_summary",
    "read_records",
]


@dataclass
class ExperimentConfig:
    experiment: str
    n: list[int] | None = None
    m: list[int] | None = None
    tau: float = 3.5
    iota: float | None = None
    lam: float = 0.0
    alpha: float = 1.0
    J: int = 10_000
    a: float | None = None
    gamma: float | None = None
    horizon: float | None = None
    replicas: int | None = None
    samples: int | None = None
    seed: int = 0
    out: str = "results"
    threads: int = 1
    tol: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ParameterError(f"unknown experiment {self.experiment!r}; "
                                 f"choose from {sorted(EXPERIMENTS)}")
        spec = EXPERIMENTS[self.experiment]
        for k, v in spec.defaults.items():
            if getattr(self, k) is None:
                setattr(self, k, v)
        for k in ("n", "m"):
            v = getattr(self, k)
            if v is not None:
                setattr(self, k, [int(x) for x in (v if isinstance(v, list) else [v])])
        if not 3 < self.tau < 4:
            raise ParameterError("tau must lie in (3, 4)")
        if self.iota is not None and self.iota <= 0:
            raise ParameterError("iota must be positive")
        if self.replicas is not None and self.replicas < 1:
            raise ParameterError("replicas must be >= 1")
        if self.samples is not None and self.samples < 1:
            raise ParameterError("samples must be >= 1")
        if self.threads < 1:
            raise ParameterError("threads must be >= 1")
        if any(x < 1 for x in (self.n or []) + (self.m or [])):
            raise ParameterError("sizes must be positive")
        unknown = set(self.tol) - set(spec.tolerances)
        if unknown:
            raise ParameterError(f"unknown tolerance keys {sorted(unknown)}")

    @property
    def iota_value(self) -> float:
        return critical_iota(self.tau) if self.iota is None else self.iota

    def tolerance(self, name: str) -> float:
        return float(self.tol.get(name, EXPERIMENTS[self.experiment].tolerances[name]))

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "tol":
                lines += [f"tol.{k} = {json.dumps(x)}" for k, x in sorted(v.items())]
            else:
                lines.append(f"{f.name} = {json.dumps(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        kw: dict[str, Any] = {}
        tol: dict[str, float] = {}
        names = {f.name for f in fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"line {lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            try:
                value = json.loads(val)
            except json.JSONDecodeError:
                value = val
            if key.startswith("tol."):
                tol[key[4:]] = float(value)
            elif key in names:
                kw[key] = value
            else:
                raise ParameterError(f"line {lineno}: unknown key {key!r}")
        if "experiment" not in kw:
            raise ParameterError("config needs an 'experiment' key")
        kw["tol"] = tol
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.loads(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: list[dict[str, Any]]
    summary: dict[str, Any]
    checks: dict[str, bool]
    runtime: float = 0.0
    directory: Path | None = None

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def lines(self) -> list[str]:
        return [f"{'PASS' if ok else 'FAIL'} {self.config.experiment}: {name}"
                for name, ok in self.checks.items()]


@dataclass(frozen=True)
class _Experiment:
    simulate: Callable[[ExperimentConfig], list[dict[str, Any]]]
    summarize: Callable[[list[dict[str, Any]], ExperimentConfig],
                        tuple[dict[str, Any], dict[str, bool]]]
    columns: tuple[str, ...]
    defaults: dict[str, Any]
    tolerances: dict[str, float]
    criterion: int | None = None


EXPERIMENTS: dict[str, _Experiment] = {}


def _register(name, columns, defaults, tolerances, criterion=None):
    def deco(pair):
        sim, summ = pair
        EXPERIMENTS[name] = _Experiment(sim, summ, tuple(columns), defaults, tolerances, criterion)
        return pair
    return deco


def _map(fn, items, threads: int) -> list:
    items = list(items)
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


def _tv(a, b) -> float:
    return 0.5 * float(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)).sum())


def _slope(x, y) -> dict[str, float]:
    res = stats.linregress(np.log(x), np.log(y))
    return {"slope": float(res.slope), "stderr": float(res.stderr),
            "ci_low": float(res.slope - 1.96 * res.stderr),
            "ci_high": float(res.slope + 1.96 * res.stderr)}


def _ramp_p(m: int) -> np.ndarray:
    p = np.arange(1, m + 1, dtype=np.float64)
    return p / p.sum()


def _key(par) -> str:
    return " ".join(str(int(x)) for x in par)


# ---------------------------------------------------------------------------
# 1. p-tree law: exploration and birthday samplers against enumeration


def _ptree_law_sim(cfg):
    rows = []
    for k, m in enumerate(cfg.m):
        p = _ramp_p(m)
        keys = [_key(par) for par in ptree.enumerate_rooted_trees(m)]
        probs = {k_: ptree.rooted_ptree_prob([int(x) for x in k_.split()], p) for k_ in keys}
        par, _ = ptree.sample_ptree_batch(p, cfg.samples, split_seed(cfg.seed, 2 * k))
        explo = _count_keys(par)
        rng = np.random.default_rng(split_seed(cfg.seed, 2 * k + 1))
        bday = _count_keys(ptree.ptree_birthday(p, rng)[0].parent for _ in range(cfg.samples))
        for sampler, counts in (("exploration", explo), ("birthday", bday)):
            for key in keys:
                rows.append({"m": m, "sampler": sampler, "tree": key,
                             "count": counts.get(key, 0), "prob": probs[key]})
    return rows


def _count_keys(parents) -> dict[str, int]:
    out: dict[str, int] = {}
    for par in parents:
        k = _key(par)
        out[k] = out.get(k, 0) + 1
    return out


def _ptree_law_sum(records, cfg):
    summary, checks = {}, {}
    tol = cfg.tolerance("tv")
    for m in sorted({r["m"] for r in records}):
        for sampler in ("exploration", "birthday"):
            rows = [r for r in records if r["m"] == m and r["sampler"] == sampler]
            N = sum(r["count"] for r in rows)
            tv = _tv([r["count"] / N for r in rows], [r["prob"] for r in rows])
            summary[f"tv_{sampler}_m{m}"] = tv
            checks[f"{sampler} sampler matches enumeration at m={m} (TV {tv:.4f} <= {tol})"] = tv <= tol
    return summary, checks


_register("ptree-law", ("m", "sampler", "tree", "count", "prob"),
          {"m": [3, 4], "samples": 100_000}, {"tv": 0.02}, criterion=1)(
    (_ptree_law_sim, _ptree_law_sum))


# ---------------------------------------------------------------------------
# 2. tilted law: rejection sampler against the enumerated table


def _tilted_sim(cfg):
    rows = []
    for k, m in enumerate(cfg.m):
        p = _ramp_p(m)
        trees, probs = ptree.tilted_table(p, cfg.a)
        _, probs0 = ptree.tilted_table(p, 1e-9)
        base = np.array([ptree.ordered_ptree_prob(t, p) for t in trees])
        index = {t.key: i for i, t in enumerate(trees)}
        sampler = ptree.TiltedSampler(p, cfg.a, split_seed(cfg.seed, k))
        par, ords = sampler.sample_arrays(cfg.samples)
        counts = np.zeros(len(trees), dtype=np.int64)
        for a_, b_ in zip(par, ords):
            counts[index[(tuple(a_.tolist()), tuple(b_.tolist()))]] += 1
        for i, t in enumerate(trees):
            rows.append({"m": m, "tree": _key(t.parent) + " | " + _key(t.order),
                         "count": int(counts[i]), "tilted_prob": float(probs[i]),
                         "small_a_prob": float(probs0[i]), "untilted_prob": float(base[i])})
    return rows


def _tilted_sum(records, cfg):
    summary, checks = {}, {}
    for m in sorted({r["m"] for r in records}):
        rows = [r for r in records if r["m"] == m]
        N = sum(r["count"] for r in rows)
        tv = _tv([r["count"] / N for r in rows], [r["tilted_prob"] for r in rows])
        tv0 = _tv([r["small_a_prob"] for r in rows], [r["untilted_prob"] for r in rows])
        summary[f"tv_rejection_m{m}"] = tv
        summary[f"tv_small_a_m{m}"] = tv0
        t1, t0 = cfg.tolerance("tv"), cfg.tolerance("tv_small_a")
        checks[f"rejection sampler matches tilted table at m={m} (TV {tv:.4f} <= {t1})"] = tv <= t1
        checks[f"a -> 0 recovers the untilted law at m={m} (TV {tv0:.2e} < {t0})"] = tv0 < t0
    return summary, checks


_register("tilted-law", ("m", "tree", "count", "tilted_prob", "small_a_prob", "untilted_prob"),
          {"m": [3], "a": 1.0, "samples": 100_000}, {"tv": 0.02, "tv_small_a": 0.01},
          criterion=2)((_tilted_sim, _tilted_sum))


# ---------------------------------------------------------------------------
# 3. construction equivalence


def _edge_code(m: int, pairs) -> int:
    bit = {pq: k for k, pq in enumerate(graphgen.pair_index(m))}
    code = 0
    for u, v in pairs:
        code |= 1 << bit[(min(u, v), max(u, v))]
    return code


def _equivalence_sim(cfg):
    m = cfg.m[0]
    p = np.full(m, 1.0 / m)
    a = cfg.a
    codes, _ = graphgen.sample_connected_conditioned_codes(p, a, cfg.samples, split_seed(cfg.seed, 0))
    graph_side = np.bincount(codes, minlength=1 << (m * (m - 1) // 2))
    trees, probs = ptree.tilted_table(p, a)
    rng = np.random.default_rng(split_seed(cfg.seed, 1))
    picks = rng.choice(len(trees), size=cfg.samples, p=probs)
    ann = {}
    tree_side = np.zeros_like(graph_side)
    for i in picks.tolist():
        t = trees[i]
        if i not in ann:
            ann[i] = ptree.dfs_annotate(t, p, a)
        draws = ptree.sample_surplus(t, p, a, rng, annotation=ann[i])
        pairs = t.edges.tolist() + [(L, R) for L, R, _ in draws]
        tree_side[_edge_code(m, pairs)] += 1
    return [{"m": m, "code": c, "tree_side": int(tree_side[c]), "graph_side": int(graph_side[c])}
            for c in np.flatnonzero(tree_side + graph_side).tolist()]


def _equivalence_sum(records, cfg):
    A = np.array([r["tree_side"] for r in records], dtype=float)
    B = np.array([r["graph_side"] for r in records], dtype=float)
    tv = _tv(A / A.sum(), B / B.sum())
    tol = cfg.tolerance("tv")
    return ({"tv": tv, "cells": len(records)},
            {f"tilted p-tree + surplus equals connected-conditioned graph law (TV {tv:.4f} <= {tol})":
             tv <= tol})


_register("construction-equivalence", ("m", "code", "tree_side", "graph_side"),
          {"m": [4], "a": 1.0, "samples": 100_000}, {"tv": 0.02}, criterion=3)(
    (_equivalence_sim, _equivalence_sum))


# ---------------------------------------------------------------------------
# 4. surplus count is Poisson(Lambda) given the tree


def _surplus_sim(cfg):
    m = cfg.m[0]
    w = power_law_weights(m, cfg.tau, 1.0).values
    p = w / w.sum()
    rows = []
    for r in range(cfg.replicas):
        rng = np.random.default_rng(split_seed(cfg.seed, r))
        t = ptree.ptree_exploration(p, rng.random(m))
        ann = ptree.dfs_annotate(t, p, cfg.a)
        N = ptree.surplus_point_counts(t, p, cfg.a, cfg.samples, rng, annotation=ann)
        rows.append({"tree": r, "Lambda": ann.Lambda, "draws": cfg.samples,
                     "mean": float(N.mean()), "var": float(N.var(ddof=1))})
    return rows


def _surplus_sum(records, cfg):
    L = np.array([r["Lambda"] for r in records])
    K = np.array([r["draws"] for r in records], dtype=float)
    mean = np.array([r["mean"] for r in records])
    var = np.array([r["var"] for r in records])
    se_mean = np.sqrt(L / K)
    se_var = np.sqrt((L + 2 * L**2) / K)
    z_mean = float((mean - L).sum() / np.sqrt((se_mean**2).sum()))
    z_var = float((var - L).sum() / np.sqrt((se_var**2).sum()))
    within_mean = float(np.mean(np.abs(mean - L) <= 3 * se_mean))
    within_var = float(np.mean(np.abs(var - L) <= 3 * se_var))
    zmax = cfg.tolerance("z")
    return ({"z_mean": z_mean, "z_var": z_var, "frac_trees_mean_within_3se": within_mean,
             "frac_trees_var_within_3se": within_var, "mean_Lambda": float(L.mean())},
            {f"pooled mean of N* equals Lambda (|z| = {abs(z_mean):.2f} <= {zmax})": abs(z_mean) <= zmax,
             f"pooled variance of N* equals Lambda (|z| = {abs(z_var):.2f} <= {zmax})": abs(z_var) <= zmax})


_register("surplus-poisson", ("tree", "Lambda", "draws", "mean", "var"),
          {"m": [50], "a": 20.0, "replicas": 100, "samples": 2000}, {"z": 3.0}, criterion=4)(
    (_surplus_sim, _surplus_sum))


# ---------------------------------------------------------------------------
# 5. largest component mass against largest excursion


def _excursion_sim(cfg):
    n = cfg.n[0]
    w = power_law_weights(n, cfg.tau, cfg.iota_value)
    x, _ = nr_to_mc_params(w, cfg.lam, cfg.tau)
    s2 = x.sigma(2)
    masses = largest_masses(x, 1.0 / s2, cfg.replicas, split_seed(cfg.seed, 0))
    c = EntranceBoundary(x.values / s2)
    lengths = levy.largest_excursion_lengths(c, cfg.lam, cfg.replicas, split_seed(cfg.seed, 1),
                                             horizon=cfg.horizon)
    rows = [{"source": "exploration", "replica": r, "value": float(v)} for r, v in enumerate(masses)]
    rows += [{"source": "levy", "replica": r, "value": float(v[0])} for r, v in enumerate(lengths)]
    return rows


def _excursion_sum(records, cfg):
    a = [r["value"] for r in records if r["source"] == "exploration"]
    b = [r["value"] for r in records if r["source"] == "levy"]
    ks = float(stats.ks_2samp(a, b).statistic)
    tol = cfg.tolerance("ks")
    return ({"ks": ks, "median_mass": float(np.median(a)), "median_excursion": float(np.median(b))},
            {f"largest mass vs largest excursion (KS {ks:.4f} <= {tol})": ks <= tol})


_register("excursion-vs-mass", ("source", "replica", "value"),
          {"n": [10_000], "replicas": 10_000, "horizon": math.inf}, {"ks": 0.05}, criterion=5)(
    (_excursion_sim, _excursion_sum))


# ---------------------------------------------------------------------------
# 6-8. rank-one graphs: sizes, distances, dimension


def _nr_component(cfg, n, k, r):
    w = power_law_weights(n, cfg.tau, cfg.iota_value)
    g = graphgen.sample_nr_graph(w, cfg.lam, split_seed(split_seed(cfg.seed, k), r), tau=cfg.tau)
    return g, graphgen.largest_component(g)


def _size_sim(cfg):
    def one(job):
        k, n, r = job
        _, c1 = _nr_component(cfg, n, k, r)
        return {"n": n, "replica": r, "c1_size": int(c1.size)}
    jobs = [(k, n, r) for k, n in enumerate(cfg.n) for r in range(cfg.replicas)]
    return _map(one, jobs, cfg.threads)


def _size_sum(records, cfg):
    ns = sorted({r["n"] for r in records})
    med = [float(np.median([r["c1_size"] for r in records if r["n"] == n])) for n in ns]
    fit = _slope(ns, med)
    rho = ExponentSet(cfg.tau).rho
    tol = cfg.tolerance("slope")
    ok = abs(fit["slope"] - rho) <= tol
    return ({"n": ns, "median_c1": med, **fit, "target": rho},
            {f"log median |C1| slope {fit['slope']:.3f} = {rho:.2f} +- {tol}": ok})


_register("size-scaling", ("n", "replica", "c1_size"),
          {"n": [2**k for k in range(12, 18)], "replicas": 200}, {"slope": 0.08}, criterion=6)(
    (_size_sim, _size_sum))


def _distance_sim(cfg):
    pairs = cfg.samples

    def one(job):
        k, n, r = job
        g, c1 = _nr_component(cfg, n, k, r)
        rng = np.random.default_rng([split_seed(split_seed(cfg.seed, k), r), 1])
        src = rng.choice(c1, size=pairs)
        dst = rng.choice(c1, size=pairs)
        d = csgraph.shortest_path(g.adjacency, unweighted=True, directed=False,
                                           indices=np.unique(src))
        row = {v: i for i, v in enumerate(np.unique(src).tolist())}
        return [{"n": n, "replica": r, "pair": j, "c1_size": int(c1.size),
                 "distance": float(d[row[s], t])}
                for j, (s, t) in enumerate(zip(src.tolist(), dst.tolist()))]
    jobs = [(k, n, r) for k, n in enumerate(cfg.n) for r in range(cfg.replicas)]
    return [row for rows in _map(one, jobs, cfg.threads) for row in rows]


def _distance_sum(records, cfg):
    ns = sorted({r["n"] for r in records})
    med = [float(np.median([r["distance"] for r in records if r["n"] == n])) for n in ns]
    mean = [float(np.mean([r["distance"] for r in records if r["n"] == n])) for n in ns]
    fit = _slope(ns, med)
    fit_mean = _slope(ns, mean)
    eta = ExponentSet(cfg.tau).eta
    tol = cfg.tolerance("slope")
    ok = abs(fit["slope"] - eta) <= tol
    return ({"n": ns, "median_distance": med, "mean_distance": mean, **fit,
             "slope_of_mean": fit_mean["slope"], "target": eta},
            {f"log median typical distance slope {fit['slope']:.3f} = {eta:.2f} +- {tol}": ok})


_register("distance-scaling", ("n", "replica", "pair", "c1_size", "distance"),
          {"n": [2**k for k in range(12, 18)], "replicas": 200, "samples": 5}, {"slope": 0.1},
          criterion=7)((_distance_sim, _distance_sum))


def _dimension_grid(n: int, tau: float, points: int = 6) -> np.ndarray:
    """One decade of radii ending at the typical distance scale ``n**eta``."""
    return n ** ExponentSet(tau).eta * np.geomspace(0.1, 1.0, points)


def _dimension_sim(cfg):
    def one(job):
        k, n, r = job
        g, c1 = _nr_component(cfg, n, k, r)
        space = metric.graph_metric_space(g, c1)
        grid = _dimension_grid(n, cfg.tau)
        _, counts = metric.dim_estimate(space, grid)
        return [{"n": n, "replica": r, "c1_size": int(c1.size), "delta": float(d), "count": int(c)}
                for d, c in zip(np.sort(grid), counts)]
    jobs = [(k, n, r) for k, n in enumerate(cfg.n) for r in range(cfg.replicas)]
    return [row for rows in _map(one, jobs, cfg.threads) for row in rows]


def _dimension_sum(records, cfg):
    ns = sorted({r["n"] for r in records})
    means, sds = [], []
    for n in ns:
        slopes = []
        for rep in sorted({r["replica"] for r in records if r["n"] == n}):
            rows = [r for r in records if r["n"] == n and r["replica"] == rep]
            x = np.log([1.0 / r["delta"] for r in rows])
            y = np.log([r["count"] for r in rows])
            slopes.append(float(np.polyfit(x, y, 1)[0]))
        means.append(float(np.mean(slopes)))
        sds.append(float(np.std(slopes, ddof=1)) if len(slopes) > 1 else 0.0)
    target = ExponentSet(cfg.tau).pi_dim
    tol = cfg.tolerance("dim")
    final = means[-1]
    trend = all(abs(b - target) < abs(a - target) for a, b in zip(means, means[1:]))
    return ({"n": ns, "mean_dim": means, "sd_dim": sds, "target": target},
            {f"dimension estimate {final:.2f} at n={ns[-1]} within {target:.1f} +- {tol}":
             abs(final - target) <= tol,
             f"dimension estimates {[round(v, 2) for v in means]} move toward {target:.1f} as n grows":
             trend})


_register("dimension", ("n", "replica", "c1_size", "delta", "count"),
          {"n": [10_000, 100_000], "replicas": 20}, {"dim": 0.8}, criterion=8)(
    (_dimension_sim, _dimension_sum))


# ---------------------------------------------------------------------------
# 9. degree law


def _degree_sim(cfg):
    rows = []
    for k, n in enumerate(cfg.n):
        w = power_law_weights(n, cfg.tau, cfg.iota_value)
        g = graphgen.sample_nr_graph(w, cfg.lam, split_seed(cfg.seed, k), tau=cfg.tau)
        deg = np.bincount(g.degrees, minlength=11)
        for d in range(11):
            rows.append({"n": n, "k": d, "count": int(deg[d]),
                         "expected": graphgen.mixed_poisson_degree_pmf(d, cfg.tau, cfg.iota_value)})
    return rows


def _degree_sum(records, cfg):
    summary, checks = {}, {}
    tol = cfg.tolerance("max_error")
    for n in sorted({r["n"] for r in records}):
        err = max(abs(r["count"] / n - r["expected"]) for r in records if r["n"] == n)
        summary[f"max_error_n{n}"] = err
        checks[f"degree frequencies at n={n} (max error {err:.4f} <= {tol})"] = err <= tol
    return summary, checks


_register("degree-law", ("n", "k", "count", "expected"), {"n": [100_000]},
          {"max_error": 0.01}, criterion=9)((_degree_sim, _degree_sum))


# ---------------------------------------------------------------------------
# 10. branching processes


HEIGHT_GRID = (10, 20, 40, 80, 160)
PROGENY_CELLS = 50


def _branching_sim(cfg):
    cap = 10_000
    tot = branching.total_progeny(branching.DiscreteDistribution.point(1.0), cfg.replicas,
                                  split_seed(cfg.seed, 0), cap=cap)
    hist = np.bincount(tot, minlength=PROGENY_CELLS + 1)
    pmf, _ = branching.poisson_offspring(1.0, PROGENY_CELLS + 20)
    rows = []
    for k in range(1, PROGENY_CELLS + 1):
        p = hist[k] / cfg.replicas
        rows.append({"part": "total-progeny", "k": k, "observed": float(p),
                     "expected": branching.otter_dwass_pmf(pmf, k),
                     "stderr": math.sqrt(p * (1 - p) / cfg.replicas)})
    mix = branching.size_biased_power_law(cfg.tau, cfg.iota)
    for m, p, se in branching.height_tail(mix, HEIGHT_GRID, cfg.replicas, split_seed(cfg.seed, 1)):
        rows.append({"part": "height-tail", "k": m, "observed": p, "expected": float("nan"),
                     "stderr": se})
    return rows


def _branching_sum(records, cfg):
    od = [r for r in records if r["part"] == "total-progeny"]
    err = max(abs(r["observed"] - r["expected"]) for r in od)
    ht = [r for r in records if r["part"] == "height-tail"]
    fit = _slope([r["k"] for r in ht], [r["observed"] for r in ht])
    t_err, t_slope = cfg.tolerance("max_cell_error"), cfg.tolerance("max_slope")
    return ({"otter_dwass_max_error": err, "height_slope": fit["slope"],
             "height_slope_stderr": fit["stderr"]},
            {f"Otter-Dwass total progeny law (max cell error {err:.2e} <= {t_err})": err <= t_err,
             f"height tail log-log slope {fit['slope']:.3f} <= {t_slope}": fit["slope"] <= t_slope})


_register("branching-oracle", ("part", "k", "observed", "expected", "stderr"),
          {"replicas": 1_000_000}, {"max_cell_error": 0.005, "max_slope": -1.6}, criterion=10)(
    (_branching_sim, _branching_sum))


# ---------------------------------------------------------------------------
# 11. metric kernel


def _random_metric(k: int, rng) -> np.ndarray:
    pts = rng.random((k, 2))
    return np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))


def _metric_sim(cfg):
    rng = np.random.default_rng(split_seed(cfg.seed, 0))
    rows = []
    for i in range(cfg.samples):
        a, b = rng.uniform(0.01, 10.0, 2)
        X = metric.MeasuredMetricSpace(np.array([[0, a], [a, 0]]), np.full(2, 0.5))
        Y = metric.MeasuredMetricSpace(np.array([[0, b], [b, 0]]), np.full(2, 0.5))
        rows.append({"check": "gh-two-point", "instance": i, "lhs": metric.gh_exact(X, Y),
                     "rhs": abs(a - b) / 2})
    for i in range(cfg.samples):
        X = metric.MeasuredMetricSpace(_random_metric(4, rng), np.full(4, 0.25))
        Y = metric.MeasuredMetricSpace(_random_metric(4, rng), np.full(4, 0.25))
        s = float(rng.uniform(0.1, 10.0))
        rows.append({"check": "gh-scale", "instance": i,
                     "lhs": metric.gh_exact(metric.scale(X, s), metric.scale(Y, s)),
                     "rhs": s * metric.gh_exact(X, Y)})
    for i in range(cfg.samples):
        k = int(rng.integers(2, 13))
        S = metric.MeasuredMetricSpace(_random_metric(k, rng), np.full(k, 1.0 / k))
        delta = float(rng.uniform(0.05, 0.8))
        rows.append({"check": "cover", "instance": i,
                     "lhs": float(metric.ball_cover_count(S, delta, "greedy")),
                     "rhs": float(metric.ball_cover_count(S, delta, "exact"))})
    k = 512
    line = np.arange(k, dtype=np.float64)
    P = metric.MeasuredMetricSpace(np.abs(line[:, None] - line[None, :]), np.full(k, 1.0 / k),
                                   check=False)
    slope, _ = metric.dim_estimate(P, [2.0, 4.0, 8.0, 16.0])
    rows.append({"check": "path-dim", "instance": 0, "lhs": slope, "rhs": 1.0})
    # diagnostic only: radii much larger than the point spacing
    k = 1000
    line = np.linspace(0.0, 1.0, k)
    P = metric.MeasuredMetricSpace(np.abs(line[:, None] - line[None, :]), np.full(k, 1.0 / k),
                                   check=False)
    slope, _ = metric.dim_estimate(P, np.geomspace(0.01, 0.1, 6))
    rows.append({"check": "path-dim-fine", "instance": 0, "lhs": slope, "rhs": 1.0})
    return rows


def _metric_sum(records, cfg):
    def rows(name):
        return [r for r in records if r["check"] == name]
    exact = cfg.tolerance("exact")
    two = max(abs(r["lhs"] - r["rhs"]) for r in rows("gh-two-point"))
    sc = max(abs(r["lhs"] - r["rhs"]) / max(1.0, abs(r["rhs"])) for r in rows("gh-scale"))
    cover_ok = all(r["lhs"] >= r["rhs"] for r in rows("cover"))
    dim = rows("path-dim")[0]["lhs"]
    fine = [r["lhs"] for r in rows("path-dim-fine")]
    dtol = cfg.tolerance("dim")
    return ({"two_point_max_error": two, "scale_max_rel_error": sc, "path_dim": dim,
             "path_dim_fine_grid": fine[0] if fine else None,
             "cover_instances": len(rows("cover"))},
            {f"gh_exact on two-point spaces is |a-b|/2 (max error {two:.1e})": two <= exact,
             f"gh_exact is scale-equivariant on 4-point spaces (max rel error {sc:.1e})": sc <= exact,
             "greedy cover >= exact cover on all instances with k <= 12": cover_ok,
             f"512-point unit path, radii 2-16: dimension {dim:.3f} = 1 +- {dtol}":
             abs(dim - 1.0) <= dtol})


_register("metric-unit", ("check", "instance", "lhs", "rhs"), {"samples": 100},
          {"exact": 1e-12, "dim": 0.1}, criterion=11)((_metric_sim, _metric_sum))


# ---------------------------------------------------------------------------
# 12. Lévy kernel


THIN_GRID = (0.01, 0.02, 0.05, 0.1, 0.2)


def _levy_sim(cfg):
    rows = []
    rng = np.random.default_rng(split_seed(cfg.seed, 0))
    for i, c1 in enumerate((0.25, 0.5, 1.0, 2.0, 3.7)):
        c = EntranceBoundary(np.array([c1]))
        exc = [e for e in levy.excursions(levy.build_levy_path(c, 0.0, math.inf, rng))
               if e.complete][0]
        gbar, theta, Gamma = levy.component_limit_params(exc, c)
        for name, lhs, rhs in (("length", exc.length, 1.0 / c1), ("theta", theta.theta[0], 1.0),
                               ("theta_size", float(theta.K), 1.0), ("gamma_bar", gbar, 1.0),
                               ("Gamma", Gamma, 1.0 / c1**2)):
            rows.append({"check": f"single-jump-{name}", "instance": i, "lhs": float(lhs),
                         "rhs": float(rhs)})
    c = entrance_boundary(cfg.alpha, cfg.tau, cfg.J)
    horizon = cfg.horizon
    for i in range(cfg.replicas):
        path = levy.build_levy_path(c, cfg.lam, horizon, rng)
        refl = levy.reflect(path)
        q = rng.uniform(0.0, horizon, 1000)
        rows.append({"check": "reflected-min", "instance": i, "lhs": float(np.min(refl.value(q))),
                     "rhs": 0.0})
    _, zeta, _ = levy.nr_limit_constants(cfg.tau, 1.0, 1.0, cfg.lam, J=10)
    H = levy.thinned_levy_hitting_times(cfg.samples, 1, 1.0, 1.0, cfg.lam + zeta - 1.0,
                                        max(THIN_GRID), rng, tau=cfg.tau)
    hit = np.nan_to_num(H, nan=np.inf)
    for s in THIN_GRID:
        p = float(np.mean(hit <= s))
        rows.append({"check": "thinned-lower-tail", "instance": int(round(s * 1e4)), "lhs": p,
                     "rhs": s})
    return rows


def _levy_sum(records, cfg):
    exact = cfg.tolerance("exact")
    single = [r for r in records if r["check"].startswith("single-jump")]
    err = max(abs(r["lhs"] - r["rhs"]) / max(1.0, abs(r["rhs"])) for r in single)
    mins = [r["lhs"] for r in records if r["check"] == "reflected-min"]
    tail = sorted((r for r in records if r["check"] == "thinned-lower-tail"), key=lambda r: r["rhs"])
    N = cfg.samples
    ratio = [r["lhs"] / r["rhs"] for r in tail]
    se = [math.sqrt(max(r["lhs"] * (1 - r["lhs"]), 1.0 / N) / N) / r["rhs"] for r in tail]
    half = len(tail) // 2
    # bounded: the ratio does not grow as s decreases (beyond 3 standard errors)
    bounded = max(ratio[:half]) <= max(ratio[half:]) + 3 * max(se[:half])
    return ({"single_jump_max_rel_error": err, "reflected_min": float(min(mins)),
             "reflected_paths": len(mins), "tail_ratio": ratio, "tail_ratio_se": se},
            {f"single-jump closed forms (max rel error {err:.1e} <= {exact})": err <= exact,
             f"reflected path non-negative on {len(mins)} paths x 1000 times": min(mins) >= 0.0,
             f"thinned process P(H <= s)/s bounded over s-grid (max {max(ratio):.2f})": bounded})


_register("levy-unit", ("check", "instance", "lhs", "rhs"),
          {"replicas": 1000, "samples": 100_000, "horizon": 10.0, "J": 1000},
          {"exact": 1e-12}, criterion=12)((_levy_sim, _levy_sum))


CRITERIA: dict[int, str] = {spec.criterion: name for name, spec in EXPERIMENTS.items()
                            if spec.criterion is not None}


# ---------------------------------------------------------------------------
# orchestration


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse(s: str):
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def write_records(records: list[dict[str, Any]], columns, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in records:
            w.writerow([_fmt(r[c]) for c in columns])


def read_records(path: str | Path) -> list[dict[str, Any]]:
    with open(path, newline="") as fh:
        return [{k: _parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def recompute_summary(records_path: str | Path, cfg: ExperimentConfig
                      ) -> tuple[dict[str, Any], dict[str, bool]]:
    """Summary and checks recomputed from a records CSV."""
    return EXPERIMENTS[cfg.experiment].summarize(read_records(records_path), cfg)


def run(cfg: ExperimentConfig, write: bool = True) -> ExperimentReport:
    """Run one experiment; with ``write`` the records, summary and config go to
    ``<out>/<experiment>/``."""
    spec = EXPERIMENTS[cfg.experiment]
    directory = Path(cfg.out) / cfg.experiment
    if write:
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {directory}: {exc}") from exc
    t0 = time.perf_counter()
    records = spec.simulate(cfg)
    # normalise through the CSV text form so that in-memory and on-disk summaries agree
    records = [{c: _parse(_fmt(r[c])) for c in spec.columns} for r in records]
    summary, checks = spec.summarize(records, cfg)
    runtime = time.perf_counter() - t0
    report = ExperimentReport(cfg, records, summary, checks, runtime,
                              directory if write else None)
    if write:
        write_records(records, spec.columns, directory / "records.csv")
        payload = {"experiment": cfg.experiment, "criterion": spec.criterion,
                   "summary": _jsonable(summary), "checks": checks, "passed": report.passed}
        (directory / "summary.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        cfg.save(directory / "config.txt")
    return report


def config_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    return asdict(cfg)
