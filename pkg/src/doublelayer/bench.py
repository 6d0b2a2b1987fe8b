"""Random consistent linear-inequality problems and the benchmark harness.

Problem generation
------------------
``z ~ N(0, I_n)`` is the witness, rows ``a_i ~ N(0, I_n)``, and
``b_i = <a_i, z> + u_i`` with ``u_i ~ U[0, 1]`` so that ``z`` is strictly
feasible.  The start point is ``x0 = z + 10 d`` for a uniform random unit
vector ``d``, redrawn until ``x0`` is infeasible.  All draws come from a
PCG64 generator seeded with the problem seed; trial ``j`` of a plan uses
seed ``base_seed + j`` for every strategy, so strategies are compared on
identical instances.

Ribbons
-------
The ``p``% band at iteration ``k`` spans the ``50 - p/2`` and ``50 + p/2``
percentiles (linear interpolation) of the per-trial metric values.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from .controls import InnerStrategy, OuterSchedule
from .errors import InvalidControlError, InvalidProblemError
from .sets import LinearFamily, rowdot
from .solver import IterateTrace, SolverConfig, run, run_lopping

log = logging.getLogger(__name__)

START_RADIUS = 10.0
BANDS = (10, 20, 30, 40, 50)
METRIC_FLOOR = -16.0


# --------------------------------------------------------------------------
# Problems
# --------------------------------------------------------------------------


@dataclass(eq=False)
class ProblemInstance:
    A: np.ndarray
    b: np.ndarray
    witness: np.ndarray
    x0: np.ndarray
    seed: int = 0
    equality: bool = False

    def __post_init__(self):
        self.A = np.array(self.A, dtype=np.float64, ndmin=2)
        self.b = np.array(self.b, dtype=np.float64).reshape(-1)
        self.witness = np.array(self.witness, dtype=np.float64).reshape(-1)
        self.x0 = np.array(self.x0, dtype=np.float64).reshape(-1)
        m, n = self.A.shape
        if self.b.size != m or self.witness.size != n or self.x0.size != n:
            raise InvalidProblemError("inconsistent problem dimensions")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def family(self) -> LinearFamily:
        return LinearFamily(self.A, self.b, equality=self.equality)

    def validate(self, tol: float = 1e-9) -> None:
        fam = self.family()
        if np.max(fam.proximities(self.witness)) > tol:
            raise InvalidProblemError("witness is not feasible")
        if np.max(fam.proximities(self.x0)) <= 0.0:
            raise InvalidProblemError("start point is already feasible")

    def __eq__(self, other):
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        return (self.seed == other.seed and self.equality == other.equality
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("A", "b", "witness", "x0")))


def generate_problem(m: int, n: int, seed: int) -> ProblemInstance:
    if m < 1 or n < 1:
        raise InvalidProblemError("m and n must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    z = rng.standard_normal(n)
    A = rng.standard_normal((m, n))
    b = rowdot(A, z) + rng.uniform(0.0, 1.0, m)
    fam = LinearFamily(A, b)
    while True:
        d = rng.standard_normal(n)
        x0 = z + START_RADIUS * d / np.linalg.norm(d)
        if np.max(fam.proximities(x0)) > 0.0:
            break
    return ProblemInstance(A, b, z, x0, seed)


def generate_equality_problem(m: int, n: int, seed: int, rank: int | None = None) -> ProblemInstance:
    """Consistent system ``A x = b`` whose matrix has the given rank.

    With ``rank < n`` the solution set is an affine subspace of dimension
    ``n - rank``, so the nearest solution to ``x0`` is not the witness.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    rank = min(m, n) if rank is None else rank
    A = rng.standard_normal((m, rank)) @ rng.standard_normal((rank, n)) / math.sqrt(rank)
    z = rng.standard_normal(n)
    b = rowdot(A, z)
    d = rng.standard_normal(n)
    x0 = z + START_RADIUS * d / np.linalg.norm(d)
    return ProblemInstance(A, b, z, x0, seed, equality=True)


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def _fmt_list(vals) -> str:
    return "[" + ", ".join(_fmt(v) for v in vals) + "]"


def write_problem(problem: ProblemInstance, path) -> None:
    """Write the problem file (YAML; reals with 17 significant digits)."""
    lines = [f"n: {problem.n}", f"m: {problem.m}", f"seed: {problem.seed}", "rows:"]
    lines += [f"  - {_fmt_list(row)}" for row in problem.A]
    lines += [f"rhs: {_fmt_list(problem.b)}", f"witness: {_fmt_list(problem.witness)}",
              f"x0: {_fmt_list(problem.x0)}"]
    if problem.equality:
        lines.append("equality: true")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_problem(path) -> ProblemInstance:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    missing = {"n", "m", "rows", "rhs", "witness", "x0", "seed"} - set(data)
    if missing:
        raise InvalidProblemError(f"problem file lacks fields {sorted(missing)}")

    def floats(v):
        return np.array([float(e) for e in v], dtype=np.float64)

    A = np.array([floats(r) for r in data["rows"]])
    prob = ProblemInstance(A, floats(data["rhs"]), floats(data["witness"]), floats(data["x0"]),
                           int(data["seed"]), bool(data.get("equality", False)))
    if (prob.m, prob.n) != (int(data["m"]), int(data["n"])):
        raise InvalidProblemError("declared m, n do not match the rows")
    return prob


# --------------------------------------------------------------------------
# Strategies and plans
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Strategy:
    """A double-layer method: inner rule plus outer block size ``b``.

    ``method`` is ``cyclic`` (blocks of one, all selected), ``all``,
    ``active``, ``maxprox``, ``top`` or ``threshold``; ``t`` is the inner
    size or threshold where relevant.
    """

    method: str
    b: int = 1
    t: float | None = None
    alpha: float = 1.0
    lopping: bool = False
    flag_horizon: int = 1

    @classmethod
    def parse(cls, text: str, block_size: int | None = None, **kw) -> "Strategy":
        text = text.strip().lower()
        if text == "cyclic":
            return cls("cyclic", 1, **kw)
        inner = InnerStrategy.parse(text)
        return cls(inner.kind, block_size or 1, inner.param, **kw)

    @property
    def inner(self) -> InnerStrategy:
        if self.method == "cyclic":
            return InnerStrategy("all")
        return InnerStrategy(self.method, self.t)

    @property
    def rate_method(self) -> str:
        return {"cyclic": "cyclic", "all": "simultaneous", "active": "active", "maxprox": "maxprox",
                "top": "top_t", "threshold": "threshold"}[self.method]

    def schedule(self, m: int) -> OuterSchedule:
        return OuterSchedule.contiguous(m, 1 if self.method == "cyclic" else self.b)

    @property
    def label(self) -> str:
        if self.method == "cyclic":
            base = "cyclic"
        elif self.method in ("top", "threshold"):
            base = f"{self.method}:{self.t:g} b={self.b}"
        else:
            base = f"{self.method} b={self.b}"
        if self.alpha != 1.0:
            base += f" alpha={self.alpha:g}"
        if self.lopping:
            base += f" lop N={self.flag_horizon}"
        return base


def solve(problem: ProblemInstance, strategy: Strategy, epsilon: float = 1e-6, check_every: int = 100,
          max_iters: int = 5000, **config_kw) -> IterateTrace:
    """Run one strategy on one problem."""
    config = SolverConfig(alpha=strategy.alpha, epsilon=epsilon, check_every=check_every,
                          max_iters=max_iters, **config_kw)
    sched = strategy.schedule(problem.m)
    fam = problem.family()
    if strategy.lopping:
        return run_lopping(fam, problem.x0, sched, strategy.inner, config, strategy.flag_horizon,
                           witness=problem.witness)
    return run(fam, problem.x0, sched, strategy.inner, config, witness=problem.witness)


def default_figures(m: int = 100) -> dict:
    """Strategy groups mirroring the four figures of the numerical study."""
    figs = {
        "fig1_maxprox_block": [Strategy("cyclic")] + [Strategy("maxprox", b) for b in (2, 3, 5, 10, 25)],
        "fig2_top_t": [Strategy("all", 25)] + [Strategy("top", 25, t) for t in (15, 10, 5)]
                      + [Strategy("maxprox", 25)],
        "fig3_threshold": [Strategy("threshold", 25, t) for t in (0.0, 0.1, 0.25, 0.5, 0.75, 1.0)],
        "fig4_ratio": [Strategy("top", b, round(r * b)) for r in (0.3, 0.5, 0.7) for b in (10, 20, 50)],
    }
    return {name: [s for s in strats if s.b <= m] for name, strats in figs.items()}


@dataclass
class ExperimentPlan:
    trials: int = 100
    strategies: list = field(default_factory=list)
    m: int = 100
    n: int = 20
    epsilon: float = 1e-6
    check_every: int = 100
    max_iters: int = 5000
    base_seed: int = 0
    figures: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidControlError("a plan needs at least one trial")
        if not self.strategies:
            for group in self.figures.values():
                for s in group:
                    if s not in self.strategies:
                        self.strategies.append(s)
        if not self.strategies:
            raise InvalidControlError("a plan needs at least one strategy")
        for s in self.strategies:
            s.inner.validate_for(s.schedule(self.m))

    @classmethod
    def standard(cls, trials: int = 100, **kw) -> "ExperimentPlan":
        m = kw.get("m", 100)
        return cls(trials=trials, figures=default_figures(m), **kw)


def metric(trace: IterateTrace | np.ndarray, floor: float = METRIC_FLOOR) -> np.ndarray:
    """``log10(max_prox(x_k) / max_prox(x_0))``, clipped below at ``floor``.

    An exactly feasible iterate would give ``-inf``; the floor keeps the
    series finite so medians and percentiles stay defined.
    """
    series = np.asarray(getattr(trace, "max_prox_all", trace), dtype=np.float64)
    if not series[0] > 0.0:
        raise InvalidProblemError("the start point is feasible; the metric is undefined")
    with np.errstate(divide="ignore"):
        out = np.log10(series / series[0])
    return np.maximum(out, floor)


@dataclass
class TrialResult:
    metric: np.ndarray
    iterations: int
    converged_at: float
    status: str


def run_trial(problem: ProblemInstance, strategy: Strategy, plan: ExperimentPlan) -> TrialResult:
    trace = solve(problem, strategy, plan.epsilon, plan.check_every, plan.max_iters)
    hit = trace.first_below(plan.epsilon)
    return TrialResult(metric(trace), trace.iterations, math.inf if hit is None else float(hit), trace.status)


def _trial_job(args):
    plan, strategy, j = args
    problem = generate_problem(plan.m, plan.n, plan.base_seed + j)
    return run_trial(problem, strategy, plan)


@dataclass
class StrategyAggregate:
    """Aligned metric statistics of one strategy.

    ``bands[p]`` is a ``(2, L)`` array with the lower and upper edges of the
    ``p``% band.  ``converged_at`` holds, per trial, the first iteration at
    which the maximum proximity reached epsilon (``inf`` if never).
    """

    strategy: Strategy
    median: np.ndarray
    bands: dict
    converged_at: np.ndarray
    iterations: np.ndarray
    statuses: list

    @property
    def label(self) -> str:
        return self.strategy.label

    @property
    def median_converged_at(self) -> float:
        return float(np.median(self.converged_at))


@dataclass
class AggregateResult:
    plan: ExperimentPlan
    per_strategy: dict

    def __getitem__(self, label) -> StrategyAggregate:
        if isinstance(label, Strategy):
            label = label.label
        return self.per_strategy[label]

    @property
    def length(self) -> int:
        return max(a.median.size for a in self.per_strategy.values())


def aggregate(strategy: Strategy, trials: list, length: int | None = None) -> StrategyAggregate:
    """Median and nested percentile bands across trials at every iteration."""
    length = length or max(t.metric.size for t in trials)
    M = np.empty((len(trials), length))
    for i, t in enumerate(trials):
        M[i, : t.metric.size] = t.metric
        M[i, t.metric.size:] = t.metric[-1]
    median = np.percentile(M, 50.0, axis=0)
    bands = {p: np.percentile(M, [50.0 - p / 2.0, 50.0 + p / 2.0], axis=0) for p in BANDS}
    return StrategyAggregate(
        strategy, median, bands,
        np.array([t.converged_at for t in trials]),
        np.array([t.iterations for t in trials]),
        [t.status for t in trials],
    )


def run_plan(plan: ExperimentPlan, workers: int = 1) -> AggregateResult:
    """Run every strategy on the shared trial set and aggregate.

    Results do not depend on ``workers``: each trial is a pure function of
    its seed and the reduction runs in trial order.
    """
    jobs = [(plan, s, j) for s in plan.strategies for j in range(plan.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_trial_job(job) for job in jobs]
    per = {}
    for i, s in enumerate(plan.strategies):
        trials = results[i * plan.trials:(i + 1) * plan.trials]
        failed = [t for t in trials if t.status == "numerical-failure"]
        if failed:
            log.warning("%s: %d trial(s) hit a numerical failure", s.label, len(failed))
        per[s.label] = aggregate(s, trials)
    return AggregateResult(plan, per)


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------

CSV_FIELDS = ["strategy", "k", "median"] + [f"{side}{p}" for p in BANDS for side in ("lo", "hi")]


def write_csv(result: AggregateResult, path) -> int:
    """One row per (strategy, k); returns the number of data rows."""
    count = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for label, agg in result.per_strategy.items():
            for k in range(agg.median.size):
                row = [label, k, _fmt(agg.median[k])]
                for p in BANDS:
                    row += [_fmt(agg.bands[p][0, k]), _fmt(agg.bands[p][1, k])]
                w.writerow(row)
                count += 1
    return count


def write_summary_csv(result: AggregateResult, path) -> None:
    """Per-strategy terminal statistics."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "trials", "converged", "median_converged_at", "median_terminal_metric"])
        for label, agg in result.per_strategy.items():
            w.writerow([label, agg.converged_at.size, int(np.isfinite(agg.converged_at).sum()),
                        _fmt(agg.median_converged_at), _fmt(agg.median[-1])])


def emit(result: AggregateResult, out_dir, fmt: str = "both") -> list:
    """Write ``bench.csv`` / ``summary.csv`` and one SVG per figure group.

    Returns the written paths.
    """
    if not result.per_strategy:
        raise InvalidControlError("nothing to emit")
    if fmt not in ("csv", "svg", "both"):
        raise ValueError(f"unknown format {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    if fmt in ("csv", "both"):
        p = os.path.join(out_dir, "bench.csv")
        write_csv(result, p)
        s = os.path.join(out_dir, "summary.csv")
        write_summary_csv(result, s)
        paths += [p, s]
    if fmt in ("svg", "both"):
        from .plotting import ribbon_figure

        groups = result.plan.figures or {"bench": result.plan.strategies}
        for name, strategies in groups.items():
            aggs = [result[s] for s in strategies]
            p = os.path.join(out_dir, f"{name}.svg")
            ribbon_figure(aggs, p, title=name)
            paths.append(p)
    return paths
