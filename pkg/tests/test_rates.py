import csv
import math

import numpy as np
import pytest

from doublelayer.bench import generate_problem
from doublelayer.errors import InsufficientDataError, InvalidParameterError, InvalidProblemError
from doublelayer.rates import (RATE_FIELDS, RegularityConstants, error_bound, estimate_kappa, fit_empirical_rate,
                               linear_report, linear_system_constants, method_parameters, q_general, q_method,
                               rate_report, write_rate_csv)
from doublelayer.sets import HalfSpace, LinearFamily

UNIT = RegularityConstants(1.0, 1.0, 1.0)


def test_linear_system_constants_examples():
    assert linear_system_constants(np.eye(3)) == (1.0, 1.0)
    assert linear_system_constants([[3.0, 4.0], [0.0, 1.0]]) == (1.0, 5.0)
    d, D = linear_system_constants([[2.0, 1.0]])
    assert d == D
    with pytest.raises(InvalidProblemError):
        linear_system_constants([[1.0, 0.0], [0.0, 0.0]])


def test_regularity_constant_validation():
    with pytest.raises(InvalidParameterError):
        RegularityConstants(2.0, 1.0)
    with pytest.raises(InvalidParameterError):
        RegularityConstants(1.0, 1.0, 0.5)


def test_q_general_examples():
    assert q_general(1.0, 1.0, 1.0, 1, UNIT) == 0.0
    assert q_general(1.0, 1.0, 1.0, 2, UNIT) == pytest.approx(0.5 ** 0.25, abs=1e-12)
    assert q_general(0.5, 1.0, 1.0, 1, UNIT) == pytest.approx(math.sqrt(0.5), abs=1e-12)
    assert 0.840896 == pytest.approx(q_general(1.0, 1.0, 1.0, 2, UNIT), abs=1e-6)
    for bad in ((1.0, 0.0, 1.0, 1), (1.0, 1.5, 1.0, 1), (1.0, 1.0, 2.0, 1), (0.0, 1.0, 1.0, 1), (1.0, 1.0, 1.0, 0)):
        with pytest.raises(InvalidParameterError):
            q_general(*bad, UNIT)


def test_q_method_examples():
    assert q_method("cyclic", 2, constants=UNIT) == pytest.approx(0.840896, abs=1e-6)
    assert q_method("maxprox", 4, 2, constants=UNIT) == pytest.approx(0.840896, abs=1e-6)
    c = RegularityConstants(1.0, 3.0, 2.0)
    assert q_method("top_t", 60, 12, 12, c) == pytest.approx(q_method("simultaneous", 60, 12, constants=c), abs=1e-15)
    # Full single block with maxprox: square root form.
    assert q_method("maxprox", 50, 50, constants=c) == pytest.approx(math.sqrt(1 - (1 / 6) ** 2), abs=1e-15)
    for method in ("active", "threshold"):
        assert q_method(method, 60, 12, constants=c) == q_method("simultaneous", 60, 12, constants=c)
    with pytest.raises(InvalidParameterError):
        q_method("greedy", 10, 2)
    with pytest.raises(InvalidParameterError):
        q_method("maxprox", 10, 11)
    with pytest.raises(InvalidParameterError):
        q_method("top_t", 10, 5, 6)


def test_non_divisible_block_size_is_conservative():
    c = RegularityConstants(1.0, 2.0, 1.5)
    s = method_parameters("maxprox", 10, 4)["s"]
    assert s == 3
    q = q_method("maxprox", 10, 4, constants=c)
    # Smallest block (2) replaces b.
    assert q == pytest.approx((1 - 2 / 10 * (1 / 3) ** 2) ** (1 / 6), abs=1e-15)
    assert q >= (1 - 4 / 10 * (1 / 3) ** 2) ** (1 / 6)


def test_error_bound_examples():
    rep = rate_report("maxprox", 4, 2, None, UNIT, dist0=1.0)
    _, upper = error_bound(rep, UNIT, 0)
    assert upper == pytest.approx(UNIT.Delta_r * rep.c_r)
    fake = rate_report("maxprox", 4, 2, None, UNIT, dist0=1.0)
    fake.q_r, fake.c_r = 0.5, 8.0
    assert error_bound(fake, UNIT, 3)[1] == pytest.approx(1.0)
    c = RegularityConstants(1.0, 1.0, 2.0)
    lower, _ = error_bound(fake, c, 3, max_prox=1e-6)
    assert lower == pytest.approx(4e-6)
    with pytest.raises(InvalidParameterError):
        error_bound(fake, c, -1)


def test_prefactor_definition():
    c = RegularityConstants(1.0, 2.0, 1.0)
    rep = rate_report("maxprox", 12, 3, None, c, dist0=2.5)
    assert rep.s == 4
    assert rep.c_r == pytest.approx(2 * 2.5 / rep.q_r ** 3)
    np.testing.assert_allclose(rep.envelope([0, 1, 2]), 2.0 * rep.c_r * rep.q_r ** np.arange(3))


def test_estimate_kappa_examples():
    single = [HalfSpace([1.0, 0.0], 0.0)]
    assert estimate_kappa(single, np.array([-1.0, 0.0]), 50, 5.0, seed=1) == pytest.approx(1.0, abs=1e-9)
    quad = [HalfSpace([1.0, 0.0], 0.0), HalfSpace([0.0, 1.0], 0.0)]
    k_small = estimate_kappa(quad, np.zeros(2), 20, 3.0, seed=4)
    k_big = estimate_kappa(quad, np.zeros(2), 200, 3.0, seed=4)
    assert 1.0 <= k_small <= k_big <= math.sqrt(2) + 1e-9
    assert k_big > 1.35
    with pytest.raises(InsufficientDataError):
        estimate_kappa(quad, np.array([-100.0, -100.0]), 20, 1.0)


def test_fit_empirical_rate_examples():
    k = np.arange(40)
    assert fit_empirical_rate(0.5 ** k, eps=0.0) == pytest.approx(0.5, abs=1e-9)
    rng = np.random.default_rng(0)
    noisy = 3.0 * 0.9 ** k * rng.uniform(0.9, 1.1, k.size)
    assert 0.88 <= fit_empirical_rate(noisy, eps=0.0) <= 0.92
    assert fit_empirical_rate(np.full(30, 2.0), eps=0.0) == pytest.approx(1.0)
    with pytest.raises(InsufficientDataError):
        fit_empirical_rate(0.5 ** np.arange(5), eps=0.0)
    # The fit ignores records after the first drop below eps.
    series = np.r_[0.8 ** np.arange(30), np.full(30, 1e-12)]
    assert fit_empirical_rate(series, eps=1e-9) == pytest.approx(0.8, abs=1e-9)


def test_linear_report_and_rate_file(tmp_path):
    p = generate_problem(40, 6, 2)
    fam = p.family()
    rep = linear_report(fam, p.x0, p.witness, "top_t", 10, 3, kappa_samples=50)
    assert rep.constants.provenance == "empirical-x2"
    assert 0.0 <= rep.q_r < 1.0 and rep.c_r > 0
    rep2 = linear_report(fam, p.x0, p.witness, "cyclic", 1, kappa=3.0)
    assert rep2.constants.kappa_r == 3.0 and rep2.s == 40
    path = tmp_path / "rates.csv"
    write_rate_csv([rep, rep2], path)
    rows = list(csv.DictReader(open(path)))
    assert tuple(rows[0]) == RATE_FIELDS and len(rows) == 2
    assert float(rows[0]["q_r"]) == rep.q_r


def test_q_monotone_in_b_and_t():
    c = RegularityConstants(1.0, 2.0, 1.3)
    m = 120
    divisors = [b for b in range(1, m + 1) if m % b == 0]
    qs = [q_method("maxprox", m, b, constants=c) for b in divisors]
    assert all(a > b for a, b in zip(qs, qs[1:]))
    qt = [q_method("top_t", m, 24, t, c) for t in range(1, 25)]
    assert all(a < b for a, b in zip(qt, qt[1:]))


def test_family_constants_match_rows():
    A = np.array([[3.0, 4.0], [1.0, 0.0]])
    fam = LinearFamily(A, [1.0, 1.0])
    assert linear_system_constants(fam.A) == (fam.row_norms.min(), fam.row_norms.max())
