"""Command line interface.

Exit codes: 0 success / all checks passed, 1 a check failed, 2 usage or I/O error.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, exploration, graphgen, harness, icrt, levy, metric, ptree
from .weights import (ParameterError, ThetaSequence, critical_iota, entrance_boundary,
                      nr_to_mc_params, power_law_weights)

log = logging.getLogger("critgraphs")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _out_dir(args) -> Path:
    d = Path(args.out or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _weights(args):
    iota = critical_iota(args.tau) if args.iota is None else args.iota
    return power_law_weights(args.n, args.tau, iota)


def cmd_gen_graph(args) -> int:
    w = _weights(args)
    if args.model == "nr":
        g = graphgen.sample_nr_graph(w, args.lam, args.seed, tau=args.tau)
    else:
        x, t = nr_to_mc_params(w, args.lam, args.tau)
        g = graphgen.sample_mc_graph(x, t, args.seed)
    out = Path(args.out or "graph.txt")
    graphgen.write_graph(g, out)
    comps = graphgen.components(g)
    print(f"n={g.n} edges={len(g.edges)} largest component={len(comps[0].vertices)} -> {out}")
    return 0


def cmd_explore(args) -> int:
    x, t = nr_to_mc_params(_weights(args), args.lam, args.tau)
    trace, comps = exploration.explore(x, t, args.seed)
    out = _out_dir(args) / "walk.csv"
    exploration.write_walk_csv(trace, out)
    for i, c in enumerate(comps[: args.top], 1):
        print(f"C{i}: size={len(c.vertices)} mass={c.mass:.6g}")
    print(f"walk -> {out}")
    return 0


def cmd_ptree(args) -> int:
    p = np.asarray(_floats(args.p)) if args.p else np.full(args.m, 1.0 / args.m)
    p = p / p.sum()
    if args.a > 0:
        mode = "exact-enum" if p.size <= ptree.EXACT_ENUM_MAX else "rejection"
        t = ptree.sample_tilted_ptree(p, args.a, args.seed, mode=mode)
    elif args.construction == "birthday":
        t, _ = ptree.ptree_birthday(p, args.seed)
    else:
        t = ptree.ptree_exploration(p, np.random.default_rng(args.seed).random(p.size))
    ann = ptree.dfs_annotate(t, p, args.a, with_edges=False)
    out = Path(args.out or "tree.txt")
    ptree.write_tree(t, out)
    print(f"m={t.m} root={t.root} max out-degree={int(t.out_degrees.max())} "
          f"Lambda={ann.Lambda:.6g} -> {out}")
    return 0


def cmd_icrt(args) -> int:
    c = entrance_boundary(1.0, args.tau, args.K)
    theta = ThetaSequence(c.c)
    if args.m:
        t = icrt.icrt_via_ptree(theta, args.m, args.seed)
        out = Path(args.out or "icrt_tree.txt")
        ptree.write_tree(t, out)
        print(f"p-tree surrogate m={args.m}: degree of vertex 0 = {int(t.out_degrees[0])} -> {out}")
    else:
        t = icrt.sample_icrt(theta, args.horizon, args.seed)
        out = Path(args.out or "segments.csv")
        icrt.write_segments_csv(t, out)
        print(f"{t.n_segments} segments, {len(t.hub_pos)} hubs, total length "
              f"{t.total_length:.6g} -> {out}")
    return 0


def cmd_levy(args) -> int:
    c = entrance_boundary(args.alpha, args.tau, args.J)
    path = levy.build_levy_path(c, args.lam, args.horizon, args.seed)
    exc = levy.excursions(path)
    d = _out_dir(args)
    levy.write_path_csv(path, d / "path.csv")
    levy.write_excursions_csv(exc, d / "excursions.csv")
    for i, e in enumerate(exc[: args.top], 1):
        print(f"excursion {i}: [{e.start:.6g}, {e.end:.6g}] length={e.length:.6g}"
              + ("" if e.complete else " (clipped)"))
    return 0


def cmd_metric(args) -> int:
    g = graphgen.read_graph(args.graph)
    c1 = graphgen.largest_component(g)
    mode = "exact" if c1.size <= args.landmarks else "landmarks"
    space = metric.graph_metric_space(g, c1, mode=mode, landmarks=args.landmarks, seed=args.seed)
    out = Path(args.out or "space.txt")
    metric.write_space(space, out)
    msg = f"largest component: {c1.size} vertices, {space.k} points, diameter {space.diameter:g}"
    if space.diameter >= 3:
        grid = np.geomspace(1.0, space.diameter / 2, 6)
        slope, _ = metric.dim_estimate(space, grid)
        msg += f", box-counting slope {slope:.3f}"
    print(msg + f" -> {out}")
    return 0


def cmd_experiment(args) -> int:
    if args.config:
        cfg = harness.ExperimentConfig.load(args.config)
        if args.out:
            cfg.out = args.out
        if args.seed_given:
            cfg.seed = args.seed
        if args.threads:
            cfg.threads = args.threads
    elif args.name:
        cfg = harness.ExperimentConfig(args.name, seed=args.seed, out=args.out or "results",
                                       threads=args.threads or 1)
    else:
        print("experiment: give --config FILE or --name NAME "
              f"(one of {', '.join(sorted(harness.EXPERIMENTS))})", file=sys.stderr)
        return 2
    report = harness.run(cfg)
    print("\n".join(report.lines()))
    print(f"records and summary -> {report.directory} ({report.runtime:.1f} s)")
    return 0 if report.passed else 1


SELFTEST = [
    ("levy-unit", {"replicas": 100, "samples": 20_000}),
    ("ptree-law", {"m": [3], "samples": 20_000}),
    ("tilted-law", {"samples": 20_000}),
    ("surplus-poisson", {"replicas": 20, "samples": 1000}),
    ("degree-law", {"n": [100_000]}),
]


def _two_point(a: float) -> metric.MeasuredMetricSpace:
    return metric.MeasuredMetricSpace(np.array([[0.0, a], [a, 0.0]]), np.full(2, 0.5))


def _unit_path(k: int) -> metric.MeasuredMetricSpace:
    x = np.arange(k, dtype=np.float64)
    return metric.MeasuredMetricSpace(np.abs(x[:, None] - x[None, :]), np.full(k, 1.0 / k))


def _single_jump_length(c1: float) -> float:
    c = levy.EntranceBoundary(np.array([c1]))
    return levy.excursions(levy.build_levy_path(c, 0.0, math.inf, 0))[0].length


def cmd_selftest(args) -> int:
    ok = True
    # closed-form checks on the weight bookkeeping
    trivial = [
        ("w_1 = 4 for n=32, tau=3.5", power_law_weights(32, 3.5, 1.0).values[0], 4.0, 1e-12),
        ("c_32 = 0.5 for alpha=2", entrance_boundary(2.0, 3.5, 32).c[31], 0.5, 1e-12),
        ("GH distance of two-point spaces 1 and 3 is 1", metric.gh_exact(_two_point(1.0),
                                                                         _two_point(3.0)), 1.0, 1e-12),
        ("5-point unit path needs 2 open balls of radius 1.5",
         metric.ball_cover_count(_unit_path(5), 1.5), 2, 0),
        ("single-jump excursion length 1/c_1 for c_1=2", _single_jump_length(2.0), 0.5, 1e-12),
    ]
    for name, got, want, tol in trivial:
        good = abs(got - want) <= tol
        ok &= good
        print(f"{'PASS' if good else 'FAIL'} {name}")
    out = args.out or "selftest-results"
    for name, kw in SELFTEST:
        rep = harness.run(harness.ExperimentConfig(name, seed=args.seed, out=out, **kw))
        print("\n".join(rep.lines()))
        ok &= rep.passed
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    common.add_argument("--config", help="experiment config file (key = value lines)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--threads", type=int, default=None, help="worker threads for replicas")

    ap = argparse.ArgumentParser(prog="critgraphs",
                                 description="Critical random graph and limit-object simulator")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def graph_args(p):
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--tau", type=float, default=3.5)
        p.add_argument("--iota", type=float, default=None, help="default: critical scale")
        p.add_argument("--lambda", dest="lam", type=float, default=0.0)

    p = sub.add_parser("gen-graph", parents=[common], help="sample a rank-one random graph")
    graph_args(p)
    p.add_argument("--model", choices=["nr", "mc"], default="nr")
    p.set_defaults(func=cmd_gen_graph)

    p = sub.add_parser("explore", parents=[common], help="breadth-first walk of G(x, t)")
    graph_args(p)
    p.add_argument("--top", type=int, default=5)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("ptree", parents=[common], help="sample a (tilted) p-tree")
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--p", help="comma-separated weights (normalised); default uniform")
    p.add_argument("--a", type=float, default=0.0, help="tilt intensity (0: untilted)")
    p.add_argument("--construction", choices=["exploration", "birthday"], default="exploration")
    p.set_defaults(func=cmd_ptree)

    p = sub.add_parser("icrt", parents=[common], help="stick-breaking ICRT or p-tree surrogate")
    p.add_argument("--K", type=int, default=100, help="number of hubs")
    p.add_argument("--tau", type=float, default=3.5)
    p.add_argument("--horizon", type=float, default=5.0)
    p.add_argument("--m", type=int, default=0, help="use a p-tree surrogate on m vertices")
    p.set_defaults(func=cmd_icrt)

    p = sub.add_parser("levy", parents=[common], help="Lévy path, reflection and excursions")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=3.5)
    p.add_argument("--J", type=int, default=10_000)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--horizon", type=float, default=math.inf)
    p.add_argument("--top", type=int, default=5)
    p.set_defaults(func=cmd_levy)

    p = sub.add_parser("metric", parents=[common], help="metric space of a graph's largest component")
    p.add_argument("--graph", required=True)
    p.add_argument("--landmarks", type=int, default=2000)
    p.set_defaults(func=cmd_metric)

    p = sub.add_parser("experiment", parents=[common], help="run a named experiment")
    p.add_argument("--name", choices=sorted(harness.EXPERIMENTS))
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("selftest", parents=[common], help="fast closed-form and small-sample checks")
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except (ParameterError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
