"""Outer block schedules, inner selection rules and lopping/flagging.

Indices are 0-based throughout.  Ties are always broken toward the lowest
index so that selections, and therefore traces, are reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ControlInvariantError, InvalidControlError


@dataclass(frozen=True, eq=False)
class OuterSchedule:
    """Cyclic outer control ``J_k = blocks[k mod s]`` over ``{0, ..., m-1}``.

    Blocks may overlap; :attr:`is_partition` tells whether they do not.
    """

    blocks: tuple
    m: int

    def __post_init__(self):
        blocks = tuple(np.unique(np.asarray(b, dtype=np.intp)) for b in self.blocks)
        if not blocks:
            raise InvalidControlError("an outer schedule needs at least one block")
        for b in blocks:
            if b.size == 0:
                raise InvalidControlError("outer blocks must be nonempty")
            if b[0] < 0 or b[-1] >= self.m:
                raise InvalidControlError(f"block {b.tolist()} leaves the index range 0..{self.m - 1}")
            b.setflags(write=False)
        covered = np.unique(np.concatenate(blocks))
        if covered.size != self.m:
            raise InvalidControlError("the blocks do not cover every constraint index")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def contiguous(cls, m: int, block_size: int) -> "OuterSchedule":
        """``ceil(m / b)`` contiguous blocks of size ``b``; the last may be shorter."""
        if not 1 <= block_size:
            raise InvalidControlError(f"block size must be positive, got {block_size}")
        b = min(int(block_size), m)
        return cls(tuple(np.arange(i, min(i + b, m)) for i in range(0, m, b)), m)

    @property
    def s(self) -> int:
        return len(self.blocks)

    @property
    def is_partition(self) -> bool:
        return sum(b.size for b in self.blocks) == self.m

    @property
    def min_block_size(self) -> int:
        return min(b.size for b in self.blocks)

    @property
    def max_block_size(self) -> int:
        return max(b.size for b in self.blocks)


def outer_block(sched: OuterSchedule, k: int) -> np.ndarray:
    return sched.blocks[k % sched.s]


def verify_intermittent(sched: OuterSchedule) -> int:
    """Smallest window length ``s`` such that every ``s`` consecutive blocks
    of the cyclic schedule cover all indices."""
    nb = sched.s
    for width in range(1, nb + 1):
        ok = True
        for start in range(nb):
            seen = np.zeros(sched.m, dtype=bool)
            for j in range(width):
                seen[sched.blocks[(start + j) % nb]] = True
            if not seen.all():
                ok = False
                break
        if ok:
            return width
    raise InvalidControlError("schedule never covers every index")


# --------------------------------------------------------------------------
# Inner strategies
# --------------------------------------------------------------------------

INNER_KINDS = ("all", "active", "maxprox", "top", "threshold")


@dataclass(frozen=True)
class InnerStrategy:
    """How ``I_k`` is picked from the offered block ``J_k``.

    ``param`` is the inner size for ``top`` and the threshold fraction for
    ``threshold``; it is unused otherwise.
    """

    kind: str
    param: float | None = None

    def __post_init__(self):
        if self.kind not in INNER_KINDS:
            raise InvalidControlError(f"unknown inner strategy {self.kind!r}")
        if self.kind == "top":
            if self.param is None or int(self.param) != self.param or self.param < 1:
                raise InvalidControlError("top-t needs a positive integer t")
            object.__setattr__(self, "param", int(self.param))
        elif self.kind == "threshold":
            if self.param is None or not 0.0 <= float(self.param) <= 1.0:
                raise InvalidControlError("threshold needs t in [0, 1]")
            object.__setattr__(self, "param", float(self.param))

    @classmethod
    def parse(cls, text: str) -> "InnerStrategy":
        """Parse ``all|active|maxprox|top:<t>|threshold:<t>``."""
        text = text.strip().lower()
        if ":" in text:
            kind, _, arg = text.partition(":")
            if kind == "top":
                return cls("top", int(arg))
            if kind == "threshold":
                return cls("threshold", float(arg))
            raise InvalidControlError(f"cannot parse inner strategy {text!r}")
        return cls(text)

    def validate_for(self, sched: OuterSchedule) -> None:
        if self.kind == "top" and self.param > sched.max_block_size:
            raise InvalidControlError(
                f"top-{self.param} exceeds the largest block ({sched.max_block_size})")

    def __str__(self) -> str:
        if self.kind == "top":
            return f"top:{self.param}"
        if self.kind == "threshold":
            return f"threshold:{self.param:g}"
        return self.kind


def inner_select(strategy: InnerStrategy, block, prox) -> np.ndarray:
    """Select ``I_k`` from ``block`` given the block's proximities.

    ``prox`` is aligned with ``block`` (``prox[j]`` belongs to ``block[j]``)
    and ``block`` is sorted ascending.  The result is sorted ascending.
    """
    block = np.asarray(block)
    prox = np.asarray(prox, dtype=np.float64)
    if block.size == 0:
        raise InvalidControlError("cannot select from an empty block")
    kind = strategy.kind
    if kind == "all":
        return block
    if kind == "active":
        return block[prox > 0.0]
    if kind == "maxprox":
        return block[int(np.argmax(prox)):][:1]
    if kind == "top":
        t = min(strategy.param, block.size)
        if t == 1:
            return block[int(np.argmax(prox)):][:1]
        order = np.argsort(-prox, kind="stable")[:t]
        return block[np.sort(order)]
    # threshold
    return block[prox >= strategy.param * prox.max()]


def verify_argmax_condition(inner, block, prox) -> bool:
    """True iff ``inner`` meets the argmax of the proximity over ``block``.

    ``prox`` is aligned with ``block``.
    """
    block = np.asarray(block)
    prox = np.asarray(prox, dtype=np.float64)
    argmax = block[prox == prox.max()]
    return bool(np.intersect1d(np.asarray(inner), argmax).size)


# --------------------------------------------------------------------------
# Lopping and flagging
# --------------------------------------------------------------------------


@dataclass
class FlagState:
    """Mutable bookkeeping for the lopping/flagging outer control.

    ``skips[j]`` counts how many upcoming turns of block ``j`` are still
    flagged as unavailable.  ``n`` is the number of consecutive blocks found
    satisfied (maximum proximity at most ``epsilon``).
    """

    s: int
    flag_horizon: int
    epsilon: float
    last_used: int = -1
    n: int = 0
    skips: np.ndarray = field(default=None)
    satisfied: set = field(default_factory=set)

    def __post_init__(self):
        if self.flag_horizon < 1:
            raise InvalidControlError("flag horizon must be at least 1")
        if self.epsilon < 0:
            raise InvalidControlError("epsilon must be nonnegative")
        if self.skips is None:
            self.skips = np.zeros(self.s, dtype=np.int64)

    @classmethod
    def start(cls, sched: OuterSchedule, flag_horizon: int, epsilon: float) -> "FlagState":
        # The block before block 0 counts as last used, so scanning starts at block 0.
        return cls(sched.s, int(flag_horizon), float(epsilon), last_used=sched.s - 1)

    @property
    def available(self) -> np.ndarray:
        return self.skips == 0

    def next_block(self) -> int:
        """Advance to the next available block after the last used one."""
        j = self.last_used
        for _ in range(self.s * (self.flag_horizon + 1) + 1):
            j = (j + 1) % self.s
            if self.skips[j] > 0:
                self.skips[j] -= 1
                continue
            self.last_used = j
            return j
        raise ControlInvariantError("no block became available")

    def record(self, block: int, block_max_prox: float) -> tuple[bool, bool]:
        """Record the visit of ``block``; returns ``(compute, stop)``."""
        if block_max_prox > self.epsilon:
            self.n = 0
            self.satisfied.clear()
            return True, False
        self.n += 1
        self.satisfied.add(block)
        self.skips[block] = self.flag_horizon
        if self.n == self.s:
            if len(self.satisfied) != self.s:
                raise ControlInvariantError(
                    f"{self.s} consecutive skips covered only blocks {sorted(self.satisfied)}")
            return False, True
        return False, False


def next_block_lopping(state: FlagState, sched: OuterSchedule,
                       block_max_prox: Callable[[np.ndarray], float]) -> tuple[int, bool, bool]:
    """One pass of the lopping/flagging control.

    ``block_max_prox`` maps a block's index array to its maximum proximity
    at the current iterate.  Returns ``(block_id, compute, stop)``; ``state``
    is updated in place.
    """
    if state.s != sched.s:
        raise ControlInvariantError("flag state and schedule disagree on the number of blocks")
    j = state.next_block()
    compute, stop = state.record(j, float(block_max_prox(sched.blocks[j])))
    return j, compute, stop
