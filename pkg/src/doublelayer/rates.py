"""Linear-rate constants, error bounds and empirical rate fits.

The geometric factor for a double-layer run with relaxation in
``[alpha_min, alpha_max]``, weights bounded below by ``omega_min`` and an
``s``-intermittent outer control is

    q = (1 - omega_min (2 - alpha_max) alpha_min^2 / (s alpha_max)
             * (delta / (kappa Delta))^2) ** (1 / (2 s)),

with prefactor ``c = 2 d(x0, C) / q^(s - 1)``.  ``delta`` and ``Delta``
sandwich the proximities between set distances and displacements, and
``kappa`` is the bounded linear regularity constant of the family.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InsufficientDataError, InvalidParameterError, InvalidProblemError, OracleFailureError
from .sets import LinearFamily, distance_oracle, set_distance

RATE_FIELDS = ("method", "m", "b", "t", "s", "delta_r", "Delta_r", "kappa", "kappa_provenance",
               "q_r", "c_r", "q_hat_empirical")

METHODS = ("cyclic", "simultaneous", "active", "maxprox", "top_t", "threshold")

KAPPA_SAFETY = 2.0


@dataclass(frozen=True)
class RegularityConstants:
    """``delta_r <= Delta_r`` and ``kappa_r >= 1``."""

    delta_r: float
    Delta_r: float
    kappa_r: float = 1.0
    provenance: str = "closed-form"

    def __post_init__(self):
        if not 0.0 < self.delta_r <= self.Delta_r:
            raise InvalidParameterError(f"need 0 < delta_r <= Delta_r, got {self.delta_r}, {self.Delta_r}")
        if not self.kappa_r >= 1.0:
            raise InvalidParameterError(f"kappa_r must be at least 1, got {self.kappa_r}")

    @property
    def ratio(self) -> float:
        """``delta_r / (kappa_r Delta_r)``."""
        return self.delta_r / (self.kappa_r * self.Delta_r)


def linear_system_constants(A) -> tuple[float, float]:
    """``(min_i ||a_i||, max_i ||a_i||)`` for a linear (in)equality system."""
    A = np.array(A, dtype=np.float64, ndmin=2)
    norms = np.sqrt(np.einsum("ij,ij->i", A, A))
    if np.any(norms == 0.0):
        raise InvalidProblemError("the system has a zero row")
    return float(norms.min()), float(norms.max())


def _radicand(omega_min, alpha_min, alpha_max, s, ratio):
    return 1.0 - omega_min * (2.0 - alpha_max) * alpha_min ** 2 / (s * alpha_max) * ratio ** 2


def q_general(omega_min: float, alpha_min: float, alpha_max: float, s: int,
              constants: RegularityConstants) -> float:
    if not 0.0 < alpha_min <= alpha_max < 2.0:
        raise InvalidParameterError(f"need 0 < alpha_min <= alpha_max < 2, got {alpha_min}, {alpha_max}")
    if not 0.0 < omega_min <= 1.0:
        raise InvalidParameterError(f"omega_min must lie in (0, 1], got {omega_min}")
    if int(s) != s or s < 1:
        raise InvalidParameterError(f"s must be a positive integer, got {s}")
    rad = _radicand(omega_min, alpha_min, alpha_max, int(s), constants.ratio)
    return max(rad, 0.0) ** (1.0 / (2 * int(s)))


def _blocks(m: int, b: int) -> tuple[int, int]:
    """Number of blocks and the smallest block size for ``m`` indices in blocks of ``b``."""
    s = -(-m // b)
    return s, m - (s - 1) * b


def q_method(method: str, m: int, b: int | None = None, t: int | None = None,
             constants: RegularityConstants | None = None) -> float:
    """Closed-form rate factor of one of the standard double-layer methods
    (uniform weights, ``alpha = 1``, cyclic blocks of size ``b``).

    For ``m`` not divisible by ``b`` the block count is ``ceil(m / b)`` and
    ``b`` is replaced by the smallest block size, which can only increase
    ``q``.
    """
    if constants is None:
        constants = RegularityConstants(1.0, 1.0, 1.0)
    rho2 = constants.ratio ** 2
    if m < 1:
        raise InvalidParameterError("m must be positive")
    if method == "cyclic":
        return (1.0 - rho2 / m) ** (1.0 / (2 * m))
    if b is None or not 1 <= b <= m:
        raise InvalidParameterError(f"block size must lie in [1, {m}], got {b}")
    s, b_eff = _blocks(m, b)
    if method in ("simultaneous", "active", "threshold"):
        return (1.0 - rho2 / m) ** (1.0 / (2 * s))
    if method == "maxprox":
        return max(1.0 - b_eff / m * rho2, 0.0) ** (1.0 / (2 * s))
    if method == "top_t":
        if t is None or not 1 <= t <= b:
            raise InvalidParameterError(f"t must lie in [1, {b}], got {t}")
        return max(1.0 - b_eff / (m * t) * rho2, 0.0) ** (1.0 / (2 * s))
    raise InvalidParameterError(f"unknown method {method!r}")


def method_parameters(method: str, m: int, b: int | None = None, t: int | None = None) -> dict:
    """``omega_min`` and ``s`` that turn :func:`q_general` into :func:`q_method`
    (exact when ``b`` divides ``m``)."""
    if method == "cyclic":
        return {"omega_min": 1.0, "s": m}
    s, b_eff = _blocks(m, b)
    omega = {"simultaneous": 1.0 / b_eff, "active": 1.0 / b_eff, "threshold": 1.0 / b_eff,
             "maxprox": 1.0, "top_t": 1.0 / t if t else None}[method]
    return {"omega_min": omega, "s": s}


@dataclass
class RateReport:
    """Predicted linear rate for one configuration."""

    method: str
    q_r: float
    c_r: float
    m: int
    b: int
    t: int | None
    s: int
    omega_min: float
    alpha_min: float
    alpha_max: float
    constants: RegularityConstants
    distance_is_bound: bool = False
    q_hat: float | None = None

    def envelope(self, k):
        """Upper envelope ``Delta_r c_r q_r^k`` of the maximum proximity."""
        k = np.asarray(k, dtype=np.float64)
        return self.constants.Delta_r * self.c_r * self.q_r ** k

    def record(self) -> dict:
        return {
            "method": self.method, "m": self.m, "b": self.b, "t": "" if self.t is None else self.t,
            "s": self.s, "delta_r": self.constants.delta_r, "Delta_r": self.constants.Delta_r,
            "kappa": self.constants.kappa_r, "kappa_provenance": self.constants.provenance,
            "q_r": self.q_r, "c_r": self.c_r,
            "q_hat_empirical": "" if self.q_hat is None else self.q_hat,
        }


def rate_report(method: str, m: int, b: int, t: int | None, constants: RegularityConstants,
                dist0: float, omega_min: float | None = None, alpha_min: float = 1.0,
                alpha_max: float = 1.0, distance_is_bound: bool = False) -> RateReport:
    params = method_parameters(method, m, b, t)
    s = params["s"]
    omega = params["omega_min"] if omega_min is None else omega_min
    if alpha_min == alpha_max == 1.0 and omega_min is None:
        q = q_method(method, m, b, t, constants)
    else:
        q = q_general(omega, alpha_min, alpha_max, s, constants)
    c = 2.0 * dist0 / q ** (s - 1) if q > 0 else math.inf
    return RateReport(method, q, c, m, 1 if method == "cyclic" else b, t, s, omega,
                      alpha_min, alpha_max, constants, distance_is_bound)


def error_bound(report: RateReport, constants: RegularityConstants, k: int,
                max_prox: float | None = None) -> tuple[float | None, float]:
    """Two-sided estimate at iteration ``k``.

    Returns ``(distance_bound, prox_envelope)``: the bound
    ``||x_k - x_inf|| <= 2 kappa / delta * max_prox`` implied by an observed
    maximum proximity (``None`` if none given), and the predicted envelope
    ``Delta c q^k``.
    """
    if k < 0:
        raise InvalidParameterError("k must be nonnegative")
    upper = constants.Delta_r * report.c_r * report.q_r ** k
    if max_prox is None:
        return None, upper
    return 2.0 * constants.kappa_r / constants.delta_r * max_prox, upper


def estimate_kappa(regions, witness, sample_count: int, radius: float, seed: int = 0,
                   oracle=distance_oracle) -> float:
    """Empirical lower estimate of the linear regularity constant.

    Samples points uniformly in the ball of the given radius around the
    witness and returns the largest ratio ``d(x, C) / max_i d(x, C_i)``
    over the infeasible samples.  Sample ``j`` depends only on ``seed`` and
    ``j``, so estimates are nondecreasing in ``sample_count``.
    """
    if hasattr(regions, "regions"):
        regions = regions.regions()
    witness = np.asarray(witness, dtype=np.float64)
    n = witness.size
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(sample_count):
        d = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        x = witness + radius * rng.uniform() ** (1.0 / n) * d
        worst = max(set_distance(r, x) for r in regions)
        if worst <= 0.0:
            continue
        ratio = oracle(regions, x) / worst
        best = ratio if best is None else max(best, ratio)
    if best is None:
        raise InsufficientDataError("every sample was feasible; enlarge the radius or resample")
    return max(best, 1.0)


def fit_empirical_rate(trace, eps: float | None = None, min_points: int = 10) -> float:
    """``exp`` of the least-squares slope of ``log max_prox(k)``.

    The fit uses the second half of the records before the maximum
    proximity first drops to ``eps`` (or all records if it never does).
    ``trace`` is an :class:`~doublelayer.solver.IterateTrace` or a 1-D array.
    """
    series = np.asarray(getattr(trace, "max_prox_all", trace), dtype=np.float64)
    if eps is None:
        eps = getattr(trace, "epsilon", 0.0)
    below = np.flatnonzero(series <= eps)
    stop = below[0] if below.size else series.size
    head = series[:stop]
    if head.size < min_points or np.any(head <= 0.0):
        raise InsufficientDataError(f"need at least {min_points} positive records, got {head.size}")
    k = np.arange(head.size)[head.size // 2:]
    y = np.log(head[head.size // 2:])
    slope = np.polyfit(k, y, 1)[0]
    return float(np.exp(slope))


def linear_report(family: LinearFamily, x0, witness, method: str, b: int, t: int | None = None,
                  kappa: float | None = None, kappa_samples: int = 200, seed: int = 0) -> RateReport:
    """Rate report for a linear system with closed-form ``delta``/``Delta``.

    ``kappa`` defaults to twice an empirical estimate (heuristic, not a
    bound).  ``d(x0, C)`` comes from the reference oracle, falling back to
    ``||x0 - witness||`` if the oracle fails.
    """
    delta, Delta = linear_system_constants(family.A)
    x0 = np.asarray(x0, dtype=np.float64)
    try:
        dist0, is_bound = distance_oracle(family, x0), False
    except OracleFailureError:
        dist0, is_bound = float(np.linalg.norm(x0 - witness)), True
    if kappa is None:
        k_hat = estimate_kappa(family, witness, kappa_samples, float(np.linalg.norm(x0 - witness)), seed)
        constants = RegularityConstants(delta, Delta, KAPPA_SAFETY * k_hat, "empirical-x2")
    else:
        constants = RegularityConstants(delta, Delta, kappa, "given")
    return rate_report(method, family.m, b, t, constants, dist0, distance_is_bound=is_bound)


def write_rate_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RATE_FIELDS, lineterminator="\n")
        w.writeheader()
        for rep in reports:
            row = rep.record()
            w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()})
