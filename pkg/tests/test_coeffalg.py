import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chaoslab.coeffalg import (a_coeff, build_table, c_coeff, coeff_tail_bound, compositions_count,
                               d_coeff, eta_cov_closed, eta_cov_series)
from chaoslab.disorder import make_disorder
from chaoslab.errors import CumulantDepth, GuardViolated
from oracles import c_coeff_brute, compositions, eta_cov_coeffs

GAUSS = make_disorder("gaussian", m_max=40)
RAD = make_disorder("rademacher", m_max=40)


def test_compositions_count_examples():
    assert compositions_count(6, 2) == 3
    assert compositions_count(4, 2) == 1
    assert compositions_count(5, 3) == 0


@given(st.integers(1, 14), st.integers(1, 6))
def test_compositions_count_matches_enumeration(m, j):
    assert compositions_count(m, j) == sum(1 for _ in compositions(m, j))


def test_c_examples():
    assert c_coeff(2, 4, 2, GAUSS) == 1
    assert c_coeff(2, 5, 2, GAUSS) == 0
    assert c_coeff(2, 4, 1, GAUSS) == 0


def test_c_matches_brute_force():
    for spec in (GAUSS, RAD):
        for j in range(2, 5):
            for m in range(2 * j, 13):
                for l in range(0, m + 1):
                    assert c_coeff(j, m, l, spec) == c_coeff_brute(j, m, l, spec.kappa)


def test_d_and_a_examples():
    assert d_coeff(4, 2, GAUSS) == Fraction(1, 2)
    assert d_coeff(4, 2, RAD) == Fraction(1, 2)
    assert a_coeff(4, 2, RAD) == 0
    assert a_coeff(6, 3, GAUSS) == Fraction(1, 6)
    for spec in (GAUSS, RAD):
        assert d_coeff(5, 3, spec) == d_coeff(5, 2, spec)
        assert a_coeff(7, 3, spec) == a_coeff(7, 4, spec)


def test_table_matches_series_oracle():
    for spec in (GAUSS, RAD):
        oracle = eta_cov_coeffs(spec.kappa, 16)
        table = build_table(spec, 16)
        assert table.exact and table.is_symmetric()
        for m in range(4, 17):
            for l in range(2, m - 1):
                assert table[m, l] == oracle.get((m, l), 0)


def test_float_cumulants_give_float_table():
    spec = make_disorder("tabulated", [-1.0, 1.0], [0.5, 0.5], m_max=12)
    table = build_table(spec, 12)
    exact = build_table(RAD, 12)
    assert not table.exact
    for m in range(4, 13):
        for l in range(2, m - 1):
            assert abs(table[m, l] - float(exact[m, l])) < 1e-12


def test_cumulant_depth():
    with pytest.raises(CumulantDepth):
        build_table(make_disorder("rademacher", m_max=6), 10)


def test_tail_bound_examples():
    assert coeff_tail_bound(7, 0.0, 1.0) == 0.0
    assert math.isclose(coeff_tail_bound(4, 0.5 / 8, 1.0), 0.0625)
    assert coeff_tail_bound(5, 0.05, 1.0) <= coeff_tail_bound(4, 0.05, 1.0)
    with pytest.raises(GuardViolated):
        coeff_tail_bound(4, 0.2, 1.0)


def test_eta_cov_examples():
    assert eta_cov_closed(0.0, 0.7, 0.1, RAD) == 0.0
    assert eta_cov_closed(0.7, 0.0, 0.1, RAD) == 0.0
    v = eta_cov_series(1.0, 1.0, 0.1, GAUSS, 40).value
    assert abs(v - 5.01670841680e-5) < 1e-15
    assert abs(eta_cov_closed(1.0, 1.0, 0.1, GAUSS) - (math.expm1(0.01) - 0.01)) < 1e-18
    want = (math.exp(math.log(math.cosh(0.4)) - 2 * math.log(math.cosh(0.2))) - 1 + 0.04
            - 2 * 0.2 * math.tanh(0.2))
    assert abs(eta_cov_closed(1.0, 1.0, 0.2, RAD) - want) < 1e-15
    s = eta_cov_series(1.0, -1.0, 0.05, RAD, 40)
    assert abs(s.value - eta_cov_closed(1.0, -1.0, 0.05, RAD)) <= max(1e-12, s.tail_bound)


@settings(max_examples=40, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.0, 0.1))
def test_series_vs_closed_property(s, s2, lam):
    for spec in (GAUSS, RAD):
        ser = eta_cov_series(s, s2, lam, spec, 40)
        assert abs(ser.value - eta_cov_closed(s, s2, lam, spec)) <= max(1e-12, ser.tail_bound)
        # symmetric in the two replicas, up to the eps * lam^2 rounding of phi(x) - x^2/2
        assert math.isclose(eta_cov_closed(s, s2, lam, spec), eta_cov_closed(s2, s, lam, spec),
                            rel_tol=1e-12, abs_tol=1e-15 * lam ** 2)


def test_eta_cov_against_quadrature():
    # Gaussian omega: E[eta eta'] by Gauss-Hermite quadrature
    x, w = np.polynomial.hermite_e.hermegauss(80)
    w = w / w.sum()
    lam, s, s2 = 0.3, 0.8, -0.6
    eta = lambda a: np.exp(a * x - 0.5 * a * a) - 1 - a * x
    assert abs(np.dot(w, eta(lam * s) * eta(lam * s2)) - eta_cov_closed(s, s2, lam, GAUSS)) < 1e-14


def test_guard():
    with pytest.raises(GuardViolated):
        eta_cov_series(1.0, 1.0, 0.2, GAUSS, 40)
