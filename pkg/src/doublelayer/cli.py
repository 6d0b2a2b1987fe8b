"""Command line interface: ``solve``, ``bench``, ``rates`` and ``gen``.

A YAML ``--config`` file may set any flag (underscored names, e.g.
``max_iters``) plus the control aliases ``outer_block_size``, ``inner``,
``epsilon``; explicit flags override the file.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import yaml

from . import bench, rates
from .errors import FeasibilityError

log = logging.getLogger("doublelayer")

ALIASES = {"outer_block_size": "block_size", "inner": "strategy", "epsilon": "eps", "lopping_epsilon": "eps"}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML file whose keys mirror the flags")
    p.add_argument("--m", type=int, default=100, help="number of constraints")
    p.add_argument("--n", type=int, default=20, help="dimension")
    p.add_argument("--seed", type=int, default=0, help="problem seed (base seed for bench)")
    p.add_argument("--strategy", action="append", default=None,
                   help="cyclic|all|active|maxprox|top:<t>|threshold:<t>; repeatable for bench")
    p.add_argument("--block-size", type=int, default=None, help="outer block size b (default m)")
    p.add_argument("--alpha", type=float, default=1.0, help="relaxation parameter in (0, 2)")
    p.add_argument("--eps", type=float, default=1e-6, help="stopping tolerance on the maximum proximity")
    p.add_argument("--check-every", type=int, default=100)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--lopping", action="store_true", help="use the lopping/flagging outer control")
    p.add_argument("--flag-horizon", type=int, default=1)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--format", choices=("csv", "svg", "both"), default="both")
    p.add_argument("--problem", help="problem file to use instead of generating one")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="doublelayer", description="Double-layer projection methods")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("solve", "run one strategy on one problem and write its trace"),
                        ("bench", "run an experiment plan and write CSV/SVG output"),
                        ("rates", "write predicted and empirical rate factors"),
                        ("gen", "write a random problem file")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "bench":
            p.add_argument("--trials", type=int, default=100)
            p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    return parser


def load_config(path) -> dict:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError("config file must hold a mapping")
    out = {}
    for key, value in data.items():
        key = ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
        if key == "strategy" and not isinstance(value, list):
            value = [value]
        out[key] = value
    return out


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = load_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known
        if unknown:
            parser.error(f"unknown config keys: {sorted(unknown)}")
        # Re-parse with the file as defaults so that explicit flags win.
        sub.set_defaults(**cfg)
        flagged = args.strategy
        args = parser.parse_args(argv)
        if flagged is not None:
            args.strategy = flagged
    return args


def _strategies(args, m: int) -> list:
    b = args.block_size or m
    texts = args.strategy or ["maxprox"]
    return [bench.Strategy.parse(str(t), b, alpha=args.alpha, lopping=bool(args.lopping),
                                 flag_horizon=args.flag_horizon) for t in texts]


def _problem(args) -> bench.ProblemInstance:
    if args.problem:
        return bench.read_problem(args.problem)
    return bench.generate_problem(args.m, args.n, args.seed)


def cmd_gen(args) -> list:
    prob = _problem(args)
    path = os.path.join(args.out, f"problem_m{prob.m}_n{prob.n}_seed{prob.seed}.yaml")
    bench.write_problem(prob, path)
    return [path]


def cmd_solve(args) -> list:
    prob = _problem(args)
    paths = []
    for strat in _strategies(args, prob.m):
        trace = bench.solve(prob, strat, args.eps, args.check_every, args.max_iters)
        name = "".join(c if c.isalnum() else "_" for c in strat.label)
        path = os.path.join(args.out, f"trace_{name}_seed{prob.seed}.csv")
        trace.write_csv(path)
        print(f"{strat.label}: {trace.status} after {trace.iterations} iterations, "
              f"max prox {trace.max_prox_all[-1]:.3e}")
        paths.append(path)
    return paths


def cmd_rates(args) -> list:
    prob = _problem(args)
    reports = []
    for strat in _strategies(args, prob.m):
        t = int(strat.t) if strat.method == "top" else None
        rep = rates.linear_report(prob.family(), prob.x0, prob.witness, strat.rate_method, strat.b, t,
                                  seed=args.seed)
        trace = bench.solve(prob, strat, args.eps, args.check_every, args.max_iters)
        try:
            rep.q_hat = rates.fit_empirical_rate(trace, args.eps)
        except FeasibilityError as exc:
            log.warning("%s: no empirical rate (%s)", strat.label, exc)
        print(f"{strat.label}: q_r = {rep.q_r:.12g}, q_hat = {rep.q_hat}")
        reports.append(rep)
    path = os.path.join(args.out, "rates.csv")
    rates.write_rate_csv(reports, path)
    return [path]


def cmd_bench(args) -> list:
    common = dict(m=args.m, n=args.n, epsilon=args.eps, check_every=args.check_every,
                  max_iters=args.max_iters, base_seed=args.seed)
    if args.strategy:
        plan = bench.ExperimentPlan(trials=args.trials, strategies=_strategies(args, args.m), **common)
    else:
        plan = bench.ExperimentPlan.standard(trials=args.trials, **common)
    result = bench.run_plan(plan, workers=args.workers)
    for label, agg in result.per_strategy.items():
        print(f"{label}: median convergence iteration {agg.median_converged_at:g}")
    return bench.emit(result, args.out, args.format)


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "rates": cmd_rates, "bench": cmd_bench}


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        os.makedirs(args.out, exist_ok=True)
        paths = COMMANDS[args.command](args)
    except (FeasibilityError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
