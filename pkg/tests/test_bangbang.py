import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trap_rotation.bangbang import analytic_b, as_protocol, design_bangbang
from trap_rotation.core import DomainError, effective_w2
from trap_rotation.ermakov import final_defect, integrate_ermakov


def test_half_pi_design():
    d = design_bangbang(math.pi / 2)
    assert round(d.f, 3) == 1.118
    assert d.T == pytest.approx(math.pi * 1.118, abs=2e-4)
    t_us = d.T / (2 * math.pi * 2e6) * 1e6
    assert round(t_us, 2) == 0.28


def test_limits_and_pi():
    d = design_bangbang(1e-9)
    assert d.c < 1e-9 and d.T == pytest.approx(math.pi, rel=1e-15)
    d = design_bangbang(math.pi)
    assert d.f == pytest.approx(math.sqrt(2), rel=1e-15)
    assert d.c == pytest.approx(1 / math.sqrt(2), rel=1e-15)
    assert d.T == pytest.approx(math.pi * math.sqrt(2), rel=1e-15)
    with pytest.raises(DomainError):
        design_bangbang(0.0)


@given(st.floats(1e-3, 20.0))
def test_design_invariants(theta_f):
    d = design_bangbang(theta_f)
    assert 0 < d.c < 1
    assert abs(d.c * d.T - theta_f) < 1e-12 * max(1, theta_f)
    assert abs(d.T - math.pi * d.f) < 1e-12 * d.T
    assert abs(d.omega1 - math.sqrt(1 - d.c**2)) < 1e-12


@given(st.floats(1e-3, 10.0), st.floats(1e-3, 10.0))
def test_duration_monotone(a, b):
    if a < b:
        assert design_bangbang(a).T < design_bangbang(b).T


def test_analytic_b_examples():
    d = design_bangbang(math.pi / 2)
    assert analytic_b(d, 0.0) == (1.0, 0.0)
    b, bdot = analytic_b(d, d.T / 2)
    assert b == pytest.approx(d.f, rel=1e-14) and round(float(b), 3) == 1.118
    b, bdot = analytic_b(d, d.T)
    assert abs(b - 1) < 1e-14 and abs(bdot) < 1e-14
    s = np.linspace(0, d.T, 1001)
    assert np.max(analytic_b(d, s)[0]) <= d.f + 1e-15
    with pytest.raises(DomainError):
        analytic_b(d, -0.1)


def test_protocol_examples():
    d = design_bangbang(math.pi / 2)
    p = as_protocol(d)
    assert p.kind == "bangbang" and p.breakpoints == (0.0, d.T)
    assert abs(p.theta(d.T) - math.pi / 2) < 1e-12
    assert effective_w2(p)(d.T / 3) == pytest.approx(d.omega1**2, rel=1e-15)
    assert final_defect(integrate_ermakov(p)) < 1e-10
    assert abs(p.angle_integral() - math.pi / 2) < 1e-8


@pytest.mark.parametrize("theta_f", [0.3, math.pi / 4, math.pi / 2, math.pi, 1.5 * math.pi, 2 * math.pi])
def test_numeric_matches_analytic(theta_f):
    d = design_bangbang(theta_f)
    tr = integrate_ermakov(as_protocol(d), h=d.T / 20000)
    assert np.max(np.abs(tr.b - analytic_b(d, tr.sigma)[0])) < 1e-7
    assert final_defect(tr) < 1e-10
