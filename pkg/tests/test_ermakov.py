import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trap_rotation.bangbang import analytic_b, as_protocol, design_bangbang
from trap_rotation.core import ConstantRateProtocol, DomainError, PolynomialProtocol, effective_w2, integrate_ode
from trap_rotation.ermakov import (BTrajectory, CollapseError, excitation_energy, excitation_report, final_defect,
                                   integrate_ermakov, pinney_invariant, solve_ermakov, write_csv)


def test_still_trap_is_fixed_point():
    tr = integrate_ermakov(ConstantRateProtocol(0.0, 4.0, 0.0))
    assert np.max(np.abs(tr.b - 1)) < 1e-14 and np.max(np.abs(tr.bdot)) < 1e-13
    assert tr.b[0] == 1 and tr.bdot[0] == 0


def test_bangbang_matches_closed_form(bangbang_protocol):
    d = design_bangbang(math.pi / 2)
    tr = integrate_ermakov(bangbang_protocol, h=d.T / 20000)
    b, bdot = analytic_b(d, tr.sigma)
    assert np.max(np.abs(tr.b - b)) < 1e-7
    assert np.max(np.abs(tr.bdot - bdot)) < 1e-7


def test_half_period_return():
    w1 = 0.7
    tr = solve_ermakov(lambda s: np.full_like(s, w1**2), math.pi / w1)
    assert final_defect(tr) < 1e-16


def test_ode_residual_spot_check():
    p = PolynomialProtocol(3.0, -1.0, math.pi / 2, 3.5)
    tr = integrate_ermakov(p, h=p.T / 20000)
    h = tr.sigma[1] - tr.sigma[0]
    rng = np.random.default_rng(7)
    i = rng.integers(2, tr.sigma.size - 2, 100)
    v = tr.bdot
    # fourth-order central difference of bdot, so truncation stays below the tolerance
    bdd = (-v[i + 2] + 8 * v[i + 1] - 8 * v[i - 1] + v[i - 2]) / (12 * h)
    rhs = -effective_w2(p)(tr.sigma[i]) * tr.b[i] + 1 / tr.b[i] ** 3
    assert np.max(np.abs(bdd - rhs)) < 1e-8
    db = (-tr.b[i + 2] + 8 * tr.b[i + 1] - 8 * tr.b[i - 1] + tr.b[i - 2]) / (12 * h)
    assert np.max(np.abs(db - v[i])) < 1e-8


def test_excitation_energy_examples():
    assert excitation_energy(1.0, 0.0, 1.0, 0) == 0.5
    for n in range(5):
        assert excitation_energy(1.0, 0.0, 1.0, n) == n + 0.5
    d = design_bangbang(math.pi / 2)
    e = excitation_energy(d.f, 0.0, d.omega1**2, 0)
    # independent evaluation of the quadratic form
    assert e == pytest.approx(0.25 * (d.omega1**2 * d.f**2 + 1 / d.f**2), rel=1e-15)
    # 0.45 at theta_f = pi/2: below 1/2 but above the softened trap's ground level omega1/2
    assert e == pytest.approx(0.45, rel=1e-14)
    assert e > 0.5 * d.omega1
    with pytest.raises(DomainError):
        excitation_energy(0.0, 0.0, 1.0)


def test_final_defect_examples():
    make = lambda b, v: BTrajectory(np.array([0.0, 1.0]), np.array([1.0, b]), np.array([0.0, v]), np.ones(2))
    assert final_defect(make(1.0, 0.0)) == 0.0
    assert final_defect(make(1.0765, 0.0842)) == pytest.approx(0.0765**2 + 0.0842**2, rel=1e-12)
    assert final_defect(make(1.0765, 0.0842)) == pytest.approx(0.01294, abs=5e-6)
    assert final_defect(make(math.sqrt(3), 0.0), b_target=math.sqrt(3)) == 0.0


def test_energy_lower_bound_where_bdot_vanishes(bangbang_protocol):
    tr = integrate_ermakov(bangbang_protocol)
    rep = excitation_report(tr, bangbang_protocol)
    k = tr.sigma.size // 2
    # bdot changes sign at the midpoint of the symmetric protocol
    assert abs(tr.bdot[k]) < 1e-3
    e = excitation_energy(tr.b[k], 0.0, tr.w2[k])
    assert e >= 0.5 * math.sqrt(tr.w2[k]) - 1e-15
    assert rep.excess_final < 1e-12


def test_pinney_invariant():
    p = PolynomialProtocol(5.0, -3.0, math.pi / 2, 3.0)
    h = p.T / 20000
    tr = integrate_ermakov(p, h=h)
    w2 = effective_w2(p)
    lin = integrate_ode(lambda s, y: np.array([y[1], -w2(s) * y[0]]), [1.0, 0.0], (0.0, p.T), h)
    inv = pinney_invariant(tr, lin.y[:, 0], lin.y[:, 1])
    assert np.ptp(inv) < 1e-6


def test_time_reversal_symmetry(bangbang_protocol):
    tr = integrate_ermakov(bangbang_protocol, h=bangbang_protocol.T / 20000)
    assert np.max(np.abs(tr.b - tr.b[::-1])) < 1e-7


@given(st.floats(0.1, 5), st.floats(-3, 3), st.floats(-2, 2), st.integers(0, 20))
def test_energy_monotone_in_n(b, bdot, w2, n):
    bracket = bdot**2 + w2 * b**2 + 1 / b**2
    if bracket > 0:
        assert excitation_energy(b, bdot, w2, n + 1) > excitation_energy(b, bdot, w2, n)


def test_collapse_aborts():
    # without the 1/b^3 term the solution is cos(sigma), which reaches zero
    with pytest.raises(CollapseError):
        solve_ermakov(lambda s: np.ones_like(s), 2.0, k=0.0, n_steps=2000)
    with pytest.raises(DomainError):
        integrate_ermakov(ConstantRateProtocol(0.0, 1.0, 0.0), b0=0.0)


def test_csv_columns(tmp_path, bangbang_protocol):
    tr = integrate_ermakov(bangbang_protocol, h=bangbang_protocol.T / 200)
    path = tmp_path / "b.csv"
    write_csv(tr, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "sigma,b,bdot,w2,energy_n0"
    assert len(lines) == tr.sigma.size + 1
    assert float(lines[1].split(",")[4]) == 0.5
