"""Double-layer fixed point iteration.

Each step offers the block ``J_k`` from the outer control, picks ``I_k``
from it by proximity, and moves to the relaxed weighted average

    x_{k+1} = x_k + alpha_k * (sum_{i in I_k} w_i U_i x_k - x_k).

With ``alpha_k == 1`` the update is evaluated as the plain weighted average
``sum w_i U_i x_k``; with a single selected index this is ``U_i x_k``
exactly, so the classical cyclic and simultaneous methods are reproduced
bit for bit.  Weighted sums accumulate in ascending index order.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .controls import FlagState, InnerStrategy, OuterSchedule, inner_select
from .errors import InvalidParameterError, InvalidWitnessError
from .sets import as_family, dot

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERS = "max-iters"
LOPPING_CERTIFIED = "lopping-certified"
NUMERICAL_FAILURE = "numerical-failure"

TRACE_FIELDS = ("k", "max_prox_all", "max_prox_block", "step_norm", "dist_witness", "block_id", "inner_size")


@dataclass
class SolverConfig:
    """Relaxation, weights and stopping rules.

    ``alpha`` is either a constant or a function of ``k``; every value must
    lie in ``[alpha_min, alpha_max]`` inside (0, 2).  ``weights`` is ``None``
    for uniform weights ``1/|I_k|`` or a function ``(k, I_k) -> w``.
    """

    alpha: float | Callable[[int], float] = 1.0
    alpha_min: float | None = None
    alpha_max: float | None = None
    weights: Callable[[int, np.ndarray], np.ndarray] | None = None
    epsilon: float = 1e-6
    check_every: int = 100
    max_iters: int = 5000
    store_iterates: bool = False
    store_selected: bool = False
    divergence_bound: float = 1e12

    def __post_init__(self):
        if callable(self.alpha):
            lo = self.alpha_min if self.alpha_min is not None else np.nextafter(0.0, 1.0)
            hi = self.alpha_max if self.alpha_max is not None else np.nextafter(2.0, 0.0)
        else:
            self.alpha = float(self.alpha)
            lo = self.alpha if self.alpha_min is None else self.alpha_min
            hi = self.alpha if self.alpha_max is None else self.alpha_max
        if not 0.0 < lo <= hi < 2.0:
            raise InvalidParameterError(f"relaxation bounds must satisfy 0 < {lo} <= {hi} < 2")
        self.alpha_min, self.alpha_max = float(lo), float(hi)
        if not callable(self.alpha) and not lo <= self.alpha <= hi:
            raise InvalidParameterError(f"alpha {self.alpha} outside [{lo}, {hi}]")
        if self.check_every < 1 or self.max_iters < 0 or self.epsilon < 0:
            raise InvalidParameterError("check_every >= 1, max_iters >= 0 and epsilon >= 0 are required")

    def alpha_at(self, k: int) -> float:
        if not callable(self.alpha):
            return self.alpha
        a = float(self.alpha(k))
        if not self.alpha_min <= a <= self.alpha_max:
            raise InvalidParameterError(f"alpha({k}) = {a} outside [{self.alpha_min}, {self.alpha_max}]")
        return a


@dataclass
class IterateTrace:
    """Per-iteration record of a run.

    Arrays indexed by iterate (``max_prox_all``, ``dist_witness``) have one
    entry per ``x_k``, ``k = 0..K``; arrays indexed by step (the rest) have
    one entry per transition ``x_k -> x_{k+1}``, ``k = 0..K-1``.
    """

    max_prox_all: np.ndarray
    dist_witness: np.ndarray
    max_prox_block: np.ndarray
    step_norm: np.ndarray
    block_id: np.ndarray
    inner_size: np.ndarray
    x_final: np.ndarray
    status: str
    epsilon: float
    iterates: np.ndarray | None = None
    selected: list | None = None

    @property
    def iterations(self) -> int:
        return self.step_norm.size

    def __len__(self) -> int:
        return self.max_prox_all.size

    def first_below(self, eps: float | None = None) -> int | None:
        """First ``k`` with ``max_i p_i(x_k) <= eps``, or ``None``."""
        eps = self.epsilon if eps is None else eps
        hits = np.flatnonzero(self.max_prox_all <= eps)
        return int(hits[0]) if hits.size else None

    def rows(self):
        K = self.iterations
        for k in range(K + 1):
            if k < K:
                yield (k, self.max_prox_all[k], self.max_prox_block[k], self.step_norm[k],
                       self.dist_witness[k], int(self.block_id[k]), int(self.inner_size[k]))
            else:
                yield (k, self.max_prox_all[k], np.nan, np.nan, self.dist_witness[k], -1, 0)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_FIELDS)
            for row in self.rows():
                w.writerow([row[0]] + [f"{v:.17g}" for v in row[1:5]] + [row[5], row[6]])


def read_trace_csv(path) -> dict:
    """Read a trace file back into column arrays (for inspection and tests)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    out = {}
    for name in TRACE_FIELDS:
        kind = int if name in ("k", "block_id", "inner_size") else float
        out[name] = np.array([kind(r[name]) for r in rows])
    return out


def _weighted_images(images, config, k, I):
    if config is None or config.weights is None:
        return images * (1.0 / I.size)
    w = np.asarray(config.weights(k, I), dtype=np.float64)
    if w.shape != I.shape or np.any(w <= 0.0) or abs(w.sum() - 1.0) > 1e-12:
        raise InvalidParameterError(f"weights at step {k} must be positive and sum to 1")
    return w[:, None] * images


def _advance(family, x, J, prox_J, strategy, alpha, config, k, aux=None):
    I = inner_select(strategy, J, prox_J)
    if I.size == 0:
        return x, I
    images = family.images(x, I, aux)
    # Reduction over axis 0 adds rows one after another in index order.
    agg = _weighted_images(images, config, k, I).sum(axis=0)
    if alpha == 1.0:
        return agg, I
    return x + alpha * (agg - x), I


def step(x, cutters, J, strategy: InnerStrategy, alpha: float = 1.0, weights=None, k: int = 0):
    """One double-layer step; returns ``(x_next, I_k)``.

    ``cutters`` is a family or a list of specs/sets, ``J`` the offered
    block and ``weights`` an optional ``(k, I_k) -> w`` function.
    """
    x = np.asarray(x, dtype=np.float64)
    family = as_family(cutters, n=x.size)
    if x.size != family.n:
        raise InvalidParameterError(f"point has dimension {x.size}, constraints have {family.n}")
    if not 0.0 < alpha < 2.0:
        raise InvalidParameterError(f"alpha must lie in (0, 2), got {alpha}")
    J = np.asarray(J, dtype=np.intp)
    prox, aux = family.evaluate(x)
    config = SolverConfig(alpha=alpha, weights=weights) if weights is not None else None
    return _advance(family, x, J, prox[J], strategy, alpha, config, k, aux)


class _Recorder:
    def __init__(self, config: SolverConfig, witness):
        self.config = config
        self.witness = None if witness is None else np.asarray(witness, dtype=np.float64)
        self.prox_all, self.dist = [], []
        self.prox_block, self.steps, self.blocks, self.sizes = [], [], [], []
        self.iterates = [] if config.store_iterates else None
        self.selected = [] if config.store_selected else None

    def point(self, x, mp):
        self.prox_all.append(mp)
        if self.witness is None:
            self.dist.append(np.nan)
        else:
            d = x - self.witness
            self.dist.append(math.sqrt(d @ d))
        if self.iterates is not None:
            self.iterates.append(x.copy())

    def transition(self, block_max, stepnorm, block_id, I):
        self.prox_block.append(block_max)
        self.steps.append(stepnorm)
        self.blocks.append(block_id)
        self.sizes.append(I.size)
        if self.selected is not None:
            self.selected.append(np.array(I))

    def finish(self, x, status) -> IterateTrace:
        return IterateTrace(
            max_prox_all=np.array(self.prox_all),
            dist_witness=np.array(self.dist),
            max_prox_block=np.array(self.prox_block),
            step_norm=np.array(self.steps),
            block_id=np.array(self.blocks, dtype=np.int64),
            inner_size=np.array(self.sizes, dtype=np.int64),
            x_final=x,
            status=status,
            epsilon=self.config.epsilon,
            iterates=None if self.iterates is None else np.array(self.iterates),
            selected=self.selected,
        )


def _check_inputs(family, x0, sched, strategy):
    x = np.array(x0, dtype=np.float64).reshape(-1)
    if x.size != family.n:
        raise InvalidParameterError(f"start point has dimension {x.size}, constraints have {family.n}")
    if sched.m != family.m:
        raise InvalidParameterError(f"schedule covers {sched.m} indices, family has {family.m}")
    strategy.validate_for(sched)
    return x


def _blown_up(x, bound) -> bool:
    return not x @ x <= bound * bound


def run(cutters, x0, sched: OuterSchedule, strategy: InnerStrategy,
        config: SolverConfig | None = None, witness=None) -> IterateTrace:
    """Iterate with the cyclic outer control until the periodic global
    proximity check passes or ``max_iters`` steps have been taken."""
    config = config or SolverConfig()
    family = as_family(cutters, n=np.size(x0))
    x = _check_inputs(family, x0, sched, strategy)
    rec = _Recorder(config, witness)
    blocks = sched.blocks
    prox, aux = family.evaluate(x)
    status = MAX_ITERS
    for k in range(config.max_iters + 1):
        mp = float(prox.max())
        rec.point(x, mp)
        if k % config.check_every == 0 and mp <= config.epsilon:
            status = CONVERGED
            break
        if k == config.max_iters:
            break
        j = k % len(blocks)
        J = blocks[j]
        pJ = prox[J]
        x_new, I = _advance(family, x, J, pJ, strategy, config.alpha_at(k), config, k, aux)
        d = x_new - x
        rec.transition(float(pJ.max()), math.sqrt(d @ d), j, I)
        x = x_new
        if _blown_up(x, config.divergence_bound):
            log.warning("iterate left the divergence guard at step %d", k)
            rec.point(x, np.nan)
            status = NUMERICAL_FAILURE
            break
        if I.size:
            prox, aux = family.evaluate(x)
    return rec.finish(x, status)


def run_lopping(cutters, x0, sched: OuterSchedule, strategy: InnerStrategy,
                config: SolverConfig | None = None, flag_horizon: int = 1,
                witness=None) -> IterateTrace:
    """Iterate under lopping and flagging.

    Blocks whose maximum proximity is at most ``config.epsilon`` are skipped
    (the iterate is kept) and flagged for their next ``flag_horizon`` turns.
    After ``s`` consecutive skips the run stops with status
    ``lopping-certified``; no periodic global check is made.
    """
    config = config or SolverConfig()
    family = as_family(cutters, n=np.size(x0))
    x = _check_inputs(family, x0, sched, strategy)
    rec = _Recorder(config, witness)
    state = FlagState.start(sched, flag_horizon, config.epsilon)
    prox, aux = family.evaluate(x)
    status = MAX_ITERS
    certified = False
    for k in range(config.max_iters + 1):
        rec.point(x, float(prox.max()))
        if certified:
            status = LOPPING_CERTIFIED
            break
        if k == config.max_iters:
            break
        j = state.next_block()
        J = sched.blocks[j]
        pJ = prox[J]
        block_max = float(pJ.max())
        compute, certified = state.record(j, block_max)
        if compute:
            x_new, I = _advance(family, x, J, pJ, strategy, config.alpha_at(k), config, k, aux)
        else:
            x_new, I = x, J[:0]
        d = x_new - x
        rec.transition(block_max, math.sqrt(d @ d), j, I)
        x = x_new
        if _blown_up(x, config.divergence_bound):
            rec.point(x, np.nan)
            status = NUMERICAL_FAILURE
            break
        if I.size:
            prox, aux = family.evaluate(x)
    return rec.finish(x, status)


def fejer_check(trace: IterateTrace, z, cutters=None, tol: float = 1e-9) -> float:
    """Worst increase ``max_k (||x_{k+1} - z|| - ||x_k - z||)`` along a trace.

    Needs stored iterates.  When ``cutters`` is given, ``z`` is first
    checked for feasibility.
    """
    z = np.asarray(z, dtype=np.float64)
    if cutters is not None:
        family = as_family(cutters, n=z.size)
        worst = float(np.max(family.proximities(z)))
        if worst > tol:
            raise InvalidWitnessError(f"witness violates a constraint by {worst:.3g}")
    if trace.iterates is None:
        raise ValueError("fejer_check needs a trace recorded with store_iterates=True")
    dist = np.sqrt(np.einsum("ij,ij->i", trace.iterates - z, trace.iterates - z))
    if dist.size < 2:
        return 0.0
    return float(max(np.max(np.diff(dist)), 0.0))
