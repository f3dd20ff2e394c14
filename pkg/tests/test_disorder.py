import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chaoslab.core import build_domain
from chaoslab.disorder import (couple_white_noise, cumulants, field_from_values, fresh_white_noise,
                               make_disorder, moments_to_cumulants, sample_disorder)
from chaoslab.errors import ChaosLabError


def test_log_mgf_examples():
    assert math.isclose(make_disorder("gaussian").log_mgf(0.3), 0.045)
    rad = make_disorder("rademacher")
    assert rad.log_mgf(0.0) == 0.0
    assert math.isclose(rad.log_mgf(1.0), math.log(math.cosh(1.0)), rel_tol=1e-15)
    assert math.isclose(rad.log_mgf(1.0), 0.4337808304, abs_tol=1e-10)
    # stable for large arguments
    assert np.isfinite(rad.log_mgf(800.0))


def test_cumulant_examples():
    assert cumulants(make_disorder("gaussian"), 6) == [0, 1, 0, 0, 0, 0]
    rad = cumulants(make_disorder("rademacher"), 6)
    assert rad[:4] == [0, 1, 0, -2]
    assert rad[5] == 16
    assert all(isinstance(k, Fraction) for k in rad)


def test_tabulated_matches_rademacher():
    tab = make_disorder("tabulated", [-1.0, 1.0], [0.5, 0.5], m_max=8)
    rad = make_disorder("rademacher", m_max=8)
    assert np.allclose([float(k) for k in tab.kappa], [float(k) for k in rad.kappa])
    assert tab.symmetric
    a = np.linspace(-2, 2, 9)
    assert np.allclose(tab.log_mgf(a), rad.log_mgf(a))
    assert np.allclose(tab.dlog_mgf(a), rad.dlog_mgf(a))


def test_tabulated_rejects_bad_laws():
    with pytest.raises(ValueError):
        make_disorder("tabulated", [0.0, 1.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        make_disorder("tabulated", [-1.0, 1.0], [0.3, 0.3])


def test_asymmetric_tabulated():
    # mean 0, variance 1, skewed three-point law
    v = [-1.0, 0.5, 2.0]
    p = np.linalg.solve([[1, 1, 1], v, np.square(v)], [1, 0, 1])
    spec = make_disorder("tabulated", v, p.tolist())
    assert not spec.symmetric
    assert abs(float(spec.kappa[2]) - float(np.dot(p, np.power(v, 3)))) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3))
def test_dlog_mgf_is_derivative(a):
    for spec in (make_disorder("gaussian"), make_disorder("rademacher")):
        h = 1e-5
        num = (spec.log_mgf(a + h) - spec.log_mgf(a - h)) / (2 * h)
        assert abs(num - spec.dlog_mgf(a)) < 1e-7


def test_moments_to_cumulants_gaussian():
    moments = [0, 1, 0, 3, 0, 15, 0, 105]
    assert moments_to_cumulants(moments) == [0, 1, 0, 0, 0, 0, 0, 0]


def test_sampling_statistics_and_determinism():
    dom = build_domain(1, (0, 1), 1e-5)
    rad = make_disorder("rademacher")
    f = sample_disorder(rad, dom, 11)
    assert abs(f.values.var() - 1.0) <= 0.02
    g = sample_disorder(make_disorder("gaussian"), dom, 11)
    assert abs(g.values.mean()) <= 0.02
    assert np.array_equal(sample_disorder(rad, dom, 11).values, f.values)
    assert not np.array_equal(sample_disorder(rad, dom, 12).values, f.values)
    with pytest.raises(ValueError):
        f.values[0] = 3.0


def test_white_noise_coupling():
    spec = make_disorder("gaussian")
    dom = build_domain(1, (0, 1), 0.1)
    w = couple_white_noise(field_from_values(spec, dom, np.full(dom.n, 1.2)))
    assert np.allclose(w.increments, math.sqrt(0.1) * 1.2)
    assert np.all(couple_white_noise(field_from_values(spec, dom, np.zeros(dom.n))).increments == 0)
    dom2 = build_domain(2, (0, 1), 0.5)
    assert np.allclose(couple_white_noise(field_from_values(spec, dom2, [2.0])).increments, 1.0)
    fresh = fresh_white_noise(build_domain(1, (0, 1), 1e-5), 3).increments
    assert abs(fresh.var() / 1e-5 - 1.0) < 0.02


def test_atoms():
    with pytest.raises(ChaosLabError):
        make_disorder("gaussian").atoms()
    v, p = make_disorder("rademacher").atoms()
    assert v.tolist() == [-1.0, 1.0] and p.tolist() == [0.5, 0.5]
