"""Sets, cutter operators and proximity functions.

A constraint is packaged as a :class:`CutterSpec`: an operator ``U`` whose
fixed points are exactly the set, together with a proximity function that
vanishes exactly on the set.  Metric projections onto half-spaces,
hyperplanes and balls, and subgradient projections onto sublevel sets of
convex functionals are all cutters.

For speed the solver works on *families* of constraints rather than on
individual specs.  A family exposes ``m``, ``n``, ``proximities(x)`` (all
``m`` values), ``evaluate(x)`` (the proximities plus auxiliary data that
``images`` may reuse at the same point) and ``images(x, idx, aux)`` (the
rows ``U_i x`` for ``i`` in ``idx``).  :class:`LinearFamily` is the vectorised family for linear
systems, :class:`CutterFamily` wraps arbitrary specs, and
:class:`StackedFamily` concatenates families.

All inner products go through :func:`dot` / :func:`rowdot`, which are
evaluated row by row with a fixed reduction order.  BLAS matrix-vector
products are not bitwise stable across row subsets, and reproducible
traces depend on that stability.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import nnls

from .errors import InvalidParameterError, InvalidSetError, OracleContractError, OracleFailureError

DEFAULT_TOL = 1e-12


def dot(u, v) -> float:
    return float(np.einsum("j,j->", u, v))


def rowdot(A, x) -> np.ndarray:
    """Row-wise inner products ``A @ x`` with a row-independent reduction order."""
    return np.einsum("ij,j->i", A, x)


def _vector(v, name="vector") -> np.ndarray:
    arr = np.array(v, dtype=np.float64).reshape(-1)
    if arr.size == 0 or not np.all(np.isfinite(arr)):
        raise InvalidSetError(f"{name} must be a nonempty finite vector")
    return arr


# --------------------------------------------------------------------------
# Set types
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HalfSpace:
    """``{x : <a, x> <= b}``."""

    a: np.ndarray
    b: float

    def __post_init__(self):
        a = _vector(self.a, "normal")
        if not np.any(a):
            raise InvalidSetError("half-space normal must be nonzero")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return self.a.size

    def residual(self, x) -> float:
        return dot(self.a, x) - self.b


@dataclass(frozen=True, eq=False)
class Hyperplane:
    """``{x : <a, x> = b}``."""

    a: np.ndarray
    b: float

    def __post_init__(self):
        a = _vector(self.a, "normal")
        if not np.any(a):
            raise InvalidSetError("hyperplane normal must be nonzero")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return self.a.size

    def residual(self, x) -> float:
        return dot(self.a, x) - self.b


@dataclass(frozen=True, eq=False)
class Ball:
    """Closed Euclidean ball."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = _vector(self.center, "center")
        c.setflags(write=False)
        r = float(self.radius)
        if not (np.isfinite(r) and r > 0):
            raise InvalidSetError("ball radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", r)

    @property
    def dim(self) -> int:
        return self.center.size


@dataclass(frozen=True, eq=False)
class SublevelSet:
    """Zero sublevel set ``{x : f(x) <= 0}`` of a convex functional.

    ``oracle(x)`` must return ``(f(x), g)`` with ``g`` a subgradient of
    ``f`` at ``x``; the choice of ``g`` must be deterministic.
    """

    oracle: Callable[[np.ndarray], tuple]
    name: str = "f"

    def evaluate(self, x):
        value, grad = self.oracle(x)
        return float(value), np.asarray(grad, dtype=np.float64)


def quadratic_sublevel(center, radius) -> SublevelSet:
    """Sublevel set of ``f(x) = ||x - c||^2 - r^2`` (the ball, described by ``f``)."""
    c = _vector(center, "center")
    r2 = float(radius) ** 2

    def oracle(x):
        d = x - c
        return dot(d, d) - r2, 2.0 * d

    return SublevelSet(oracle, name="quadratic")


def norm_sublevel(center, radius) -> SublevelSet:
    """Sublevel set of ``f(x) = ||x - c|| - r``."""
    c = _vector(center, "center")
    r = float(radius)

    def oracle(x):
        d = x - c
        nd = np.sqrt(dot(d, d))
        if nd == 0.0:
            return -r, np.zeros_like(d)
        return nd - r, d / nd

    return SublevelSet(oracle, name="norm")


def affine_sublevel(a, b) -> SublevelSet:
    """Sublevel set of ``f(x) = <a, x> - b``."""
    a = _vector(a, "normal")
    b = float(b)
    return SublevelSet(lambda x: (dot(a, x) - b, a), name="affine")


def max_affine_sublevel(A, b) -> SublevelSet:
    """Sublevel set of ``f(x) = max_i (<a_i, x> - b_i)``; ties pick the lowest index."""
    A = np.array(A, dtype=np.float64)
    b = np.array(b, dtype=np.float64)

    def oracle(x):
        vals = rowdot(A, x) - b
        i = int(np.argmax(vals))
        return float(vals[i]), A[i]

    return SublevelSet(oracle, name="max_affine")


# --------------------------------------------------------------------------
# Projections
# --------------------------------------------------------------------------


def project_halfspace(H: HalfSpace, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    viol = max(H.residual(x), 0.0)
    return x - (viol / dot(H.a, H.a)) * H.a


def project_hyperplane(H: Hyperplane, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x - (H.residual(x) / dot(H.a, H.a)) * H.a


def project_ball(B: Ball, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    d = x - B.center
    nd = np.sqrt(dot(d, d))
    if nd <= B.radius:
        return x
    return B.center + (B.radius / nd) * d


def subgradient_project(S: SublevelSet, x) -> np.ndarray:
    """Subgradient projection ``x - f_+(x) / ||g||^2 * g``.

    Raises
    ------
    OracleContractError
        If ``f(x) > 0`` but the oracle returns a zero subgradient.
    """
    x = np.asarray(x, dtype=np.float64)
    value, g = S.evaluate(x)
    if value <= 0.0:
        return x
    gg = dot(g, g)
    if gg == 0.0:
        raise OracleContractError(f"zero subgradient at a point with {S.name}(x) = {value} > 0")
    return x - (value / gg) * g


# --------------------------------------------------------------------------
# Cutter specs
# --------------------------------------------------------------------------


def _displacement(apply):
    def prox(x):
        d = apply(x) - x
        return float(np.sqrt(dot(d, d)))

    return prox


@dataclass(frozen=True, eq=False)
class CutterSpec:
    """A cutter ``U`` with proximity ``p`` such that ``Fix U = p^{-1}(0)``.

    ``region`` keeps the underlying set when there is one, so reference
    oracles can reach it.
    """

    apply: Callable[[np.ndarray], np.ndarray]
    proximity: Callable[[np.ndarray], float]
    tol: float = DEFAULT_TOL
    region: object = None
    label: str = ""

    def __call__(self, x):
        return self.apply(np.asarray(x, dtype=np.float64))

    def contains(self, x) -> bool:
        return self.proximity(np.asarray(x, dtype=np.float64)) <= self.tol


def cutter(region, tol: float = DEFAULT_TOL) -> CutterSpec:
    """Cutter and proximity for a :class:`HalfSpace`, :class:`Hyperplane`,
    :class:`Ball` or :class:`SublevelSet`."""
    if isinstance(region, HalfSpace):
        return CutterSpec(
            lambda x: project_halfspace(region, x),
            lambda x: max(region.residual(x), 0.0),
            tol, region, "halfspace",
        )
    if isinstance(region, Hyperplane):
        return CutterSpec(
            lambda x: project_hyperplane(region, x),
            lambda x: abs(region.residual(x)),
            tol, region, "hyperplane",
        )
    if isinstance(region, Ball):
        def prox(x):
            d = np.asarray(x, dtype=np.float64) - region.center
            return max(np.sqrt(dot(d, d)) - region.radius, 0.0)

        return CutterSpec(lambda x: project_ball(region, x), prox, tol, region, "ball")
    if isinstance(region, SublevelSet):
        return CutterSpec(
            lambda x: subgradient_project(region, x),
            lambda x: max(region.evaluate(np.asarray(x, dtype=np.float64))[0], 0.0),
            tol, region, "sublevel",
        )
    raise TypeError(f"no cutter for {type(region).__name__}")


def generic_cutter(apply, tol: float = DEFAULT_TOL, label: str = "generic") -> CutterSpec:
    """Wrap an arbitrary cutter; proximity defaults to the displacement ``||Ux - x||``."""
    return CutterSpec(apply, _displacement(apply), tol, None, label)


def proximity(spec: CutterSpec, x) -> float:
    return float(spec.proximity(np.asarray(x, dtype=np.float64)))


def relax(spec: CutterSpec, alpha: float) -> CutterSpec:
    """Relaxation ``Id + alpha (U - Id)`` for ``alpha`` in (0, 2]."""
    alpha = float(alpha)
    if not 0.0 < alpha <= 2.0:
        raise InvalidParameterError(f"relaxation parameter must lie in (0, 2], got {alpha}")
    if alpha == 1.0:
        return spec
    U = spec.apply

    def apply(x):
        return x + alpha * (U(x) - x)

    return CutterSpec(apply, spec.proximity, spec.tol, spec.region, f"{spec.label}@{alpha:g}")


def cutter_from_averaged(V, eta: float, tol: float = DEFAULT_TOL) -> CutterSpec:
    """Turn an ``eta``-averaged operator ``V`` into the cutter ``Id + (V - Id) / (2 eta)``."""
    eta = float(eta)
    if not 0.0 < eta < 1.0:
        raise InvalidParameterError(f"averaging constant must lie in (0, 1), got {eta}")
    scale = 1.0 / (2.0 * eta)

    def apply(x):
        x = np.asarray(x, dtype=np.float64)
        return x + scale * (V(x) - x)

    return generic_cutter(apply, tol, label="averaged")


# --------------------------------------------------------------------------
# Families
# --------------------------------------------------------------------------


class LinearFamily:
    """Half-spaces ``<a_i, x> <= b_i`` (or hyperplanes when ``equality``)
    with metric projections and residual proximities."""

    def __init__(self, A, b, equality: bool = False, tol: float = DEFAULT_TOL):
        A = np.array(A, dtype=np.float64, ndmin=2)
        b = np.array(b, dtype=np.float64).reshape(-1)
        if A.shape[0] != b.size:
            raise InvalidSetError(f"A has {A.shape[0]} rows but b has {b.size} entries")
        sq = np.array([dot(a, a) for a in A])
        if np.any(sq == 0.0):
            raise InvalidSetError(f"zero rows at {np.flatnonzero(sq == 0.0).tolist()}")
        A.setflags(write=False)
        b.setflags(write=False)
        self.A, self.b, self.sqnorms = A, b, sq
        self.equality = bool(equality)
        self.tol = tol

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def row_norms(self) -> np.ndarray:
        return np.sqrt(self.sqnorms)

    def evaluate(self, x):
        """Proximities at ``x`` plus the signed residuals, reused by :meth:`images`."""
        r = rowdot(self.A, x) - self.b
        return (np.abs(r) if self.equality else np.maximum(r, 0.0)), r

    def proximities(self, x) -> np.ndarray:
        return self.evaluate(x)[0]

    def images(self, x, idx, aux=None) -> np.ndarray:
        rows = self.A[idx]
        r = rowdot(rows, x) - self.b[idx] if aux is None else aux[idx]
        if not self.equality:
            r = np.maximum(r, 0.0)
        coef = r / self.sqnorms[idx]
        return x[None, :] - coef[:, None] * rows

    def regions(self) -> list:
        kind = Hyperplane if self.equality else HalfSpace
        return [kind(a, bi) for a, bi in zip(self.A, self.b)]

    def specs(self) -> list:
        return [cutter(r, self.tol) for r in self.regions()]


class CutterFamily:
    """Family built from arbitrary :class:`CutterSpec` objects."""

    def __init__(self, specs: Sequence[CutterSpec], n: int):
        if not specs:
            raise InvalidSetError("a family needs at least one cutter")
        self.cutters = list(specs)
        self._n = int(n)

    @property
    def m(self) -> int:
        return len(self.cutters)

    @property
    def n(self) -> int:
        return self._n

    def evaluate(self, x):
        return self.proximities(x), None

    def proximities(self, x) -> np.ndarray:
        return np.array([c.proximity(x) for c in self.cutters], dtype=np.float64)

    def images(self, x, idx, aux=None) -> np.ndarray:
        return np.array([self.cutters[i].apply(x) for i in idx], dtype=np.float64).reshape(len(idx), self._n)

    def regions(self) -> list:
        return [c.region for c in self.cutters]

    def specs(self) -> list:
        return list(self.cutters)


class StackedFamily:
    """Concatenation of families; indices run through the parts in order."""

    def __init__(self, parts):
        parts = list(parts)
        if not parts or len({p.n for p in parts}) != 1:
            raise InvalidSetError("stacked families must be nonempty and share a dimension")
        self.parts = parts
        self.offsets = np.cumsum([0] + [p.m for p in parts])

    @property
    def m(self) -> int:
        return int(self.offsets[-1])

    @property
    def n(self) -> int:
        return self.parts[0].n

    def evaluate(self, x):
        pairs = [p.evaluate(x) for p in self.parts]
        return np.concatenate([pr for pr, _ in pairs]), [aux for _, aux in pairs]

    def proximities(self, x) -> np.ndarray:
        return self.evaluate(x)[0]

    def images(self, x, idx, aux=None) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.intp)
        out = np.empty((idx.size, self.n))
        which = np.searchsorted(self.offsets, idx, side="right") - 1
        for j, part in enumerate(self.parts):
            sel = which == j
            if np.any(sel):
                out[sel] = part.images(x, idx[sel] - self.offsets[j], None if aux is None else aux[j])
        return out

    def regions(self) -> list:
        return [r for p in self.parts for r in p.regions()]

    def specs(self) -> list:
        return [s for p in self.parts for s in p.specs()]


def as_family(obj, n: int | None = None):
    """Accept a family, a list of cutter specs, or a list of set objects."""
    if hasattr(obj, "evaluate") and hasattr(obj, "images"):
        return obj
    items = list(obj)
    specs = [it if isinstance(it, CutterSpec) else cutter(it) for it in items]
    dims = {getattr(s.region, "dim", None) for s in specs} - {None}
    if len(dims) > 1:
        raise InvalidSetError(f"sets live in different dimensions {sorted(dims)}")
    if n is None:
        if not dims:
            raise InvalidSetError("cannot infer the dimension; pass n explicitly")
        n = dims.pop()
    elif dims and dims != {n}:
        raise InvalidParameterError(f"point has dimension {n}, sets have {dims.pop()}")
    return CutterFamily(specs, n)


def is_feasible(family, x, tol: float = 1e-9) -> bool:
    return bool(np.max(family.proximities(np.asarray(x, dtype=np.float64))) <= tol)


# --------------------------------------------------------------------------
# Reference nearest-point oracle (test infrastructure)
# --------------------------------------------------------------------------


def _flatten_regions(sets) -> list:
    if hasattr(sets, "regions"):
        return sets.regions()
    out = []
    for s in sets:
        if isinstance(s, CutterSpec):
            s = s.region
        if hasattr(s, "regions"):
            out.extend(s.regions())
        elif isinstance(s, (HalfSpace, Hyperplane, Ball)):
            out.append(s)
        else:
            raise TypeError(f"distance oracle does not handle {type(s).__name__}")
    return out


def _nearest_linear(regions, x) -> np.ndarray:
    # Least-distance programming solved through NNLS (Lawson & Hanson).
    rows, rhs = [], []
    for reg in regions:
        nrm = np.sqrt(dot(reg.a, reg.a))
        a, r = reg.a / nrm, (dot(reg.a, x) - reg.b) / nrm
        rows.append(-a)
        rhs.append(r)
        if isinstance(reg, Hyperplane):
            rows.append(a)
            rhs.append(-r)
    G = np.array(rows)
    h = np.array(rhs)
    if np.all(h <= 0.0):
        return x.copy()
    E = np.vstack([G.T, h[None, :]])
    f = np.zeros(E.shape[0])
    f[-1] = 1.0
    u, _ = nnls(E, f, maxiter=50 * E.shape[1])
    res = E @ u - f
    if abs(res[-1]) < 1e-14:
        raise OracleFailureError("least-distance subproblem reported an empty intersection")
    return x - res[:-1] / res[-1]


def _project_region(reg, x):
    if isinstance(reg, HalfSpace):
        return project_halfspace(reg, x)
    if isinstance(reg, Hyperplane):
        return project_hyperplane(reg, x)
    return project_ball(reg, x)


def _nearest_dykstra(regions, x, max_iter: int, tol: float) -> np.ndarray:
    y = x.copy()
    incr = [np.zeros_like(x) for _ in regions]
    for _ in range(max_iter):
        prev = y
        for i, reg in enumerate(regions):
            z = _project_region(reg, y + incr[i])
            incr[i] = y + incr[i] - z
            y = z
        if np.linalg.norm(y - prev) < tol:
            return y
    raise OracleFailureError(f"Dykstra iteration did not settle within {max_iter} sweeps")


def nearest_point(sets, x, max_iter: int = 1_000_000, tol: float = 1e-14) -> np.ndarray:
    """Metric projection of ``x`` onto the intersection of half-spaces,
    hyperplanes and balls.

    Linear constraints are handled exactly by a least-distance QP; if any
    ball is present Dykstra's alternating projections are run instead.
    """
    x = np.asarray(x, dtype=np.float64)
    regions = _flatten_regions(sets)
    if all(isinstance(r, (HalfSpace, Hyperplane)) for r in regions):
        return _nearest_linear(regions, x)
    return _nearest_dykstra(regions, x, max_iter, tol)


def distance_oracle(sets, x, **kwargs) -> float:
    """Reference value of ``d(x, C)`` for ``C`` the intersection of ``sets``."""
    x = np.asarray(x, dtype=np.float64)
    return float(np.linalg.norm(nearest_point(sets, x, **kwargs) - x))


def set_distance(region, x) -> float:
    """``d(x, C_i)`` for a single half-space, hyperplane or ball."""
    x = np.asarray(x, dtype=np.float64)
    return float(np.linalg.norm(_project_region(region, x) - x))
