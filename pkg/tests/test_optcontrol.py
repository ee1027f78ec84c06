import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from trap_rotation.core import DomainError, check_protocol
from trap_rotation.ermakov import integrate_ermakov
from trap_rotation.optcontrol import (ShootingError, control_law, export_control, pmp_hamiltonian, pmp_rhs,
                                      run_shot, shoot, terminal_defect)

HALF_PI = math.pi / 2


def test_rhs_fixed_point():
    d = pmp_rhs(np.array([1.0, 0.0, 0.3, 0.2, 0.0, 0.0]), bounded=False)
    # u = 0, x = (1, 0): no motion in (x1, x2) and lambda3 constant
    assert d[0] == 0.0 and d[1] == 0.0 and d[5] == 0.0


def test_rhs_components():
    x1, x2, x3, l1, l2, l3 = 1.3, -0.2, 0.1, 0.4, 0.7, -0.9
    u = -l3 / (2 * l2 * x1)
    d = pmp_rhs(np.array([x1, x2, x3, l1, l2, l3]), bounded=False)
    expected = [x2, 1 / x1**3 + (u * u - 1) * x1, u, (3 / x1**4 - (u * u - 1)) * l2, -l1, 0.0]
    assert np.allclose(d, expected, rtol=1e-15, atol=0)


def test_unbounded_law():
    assert control_law(1.0, 0.0, 1.0, False) == (0.0, False)
    u, sing = control_law(2.0, -1.0, 1.5, False)
    assert u == pytest.approx(1 / 6) and u > 0 and not sing
    u, sing = control_law(0.0, -1.0, 1.0, False)
    assert u == 0.0 and sing


def test_bounded_law():
    assert control_law(1.0, -2.0, 1.0, True)[0] == 1.0
    assert control_law(1.0, 2.0, 1.0, True)[0] == 0.0
    assert control_law(1.0, -1.0, 1.0, True)[0] == 0.5


def test_terminal_defect():
    assert terminal_defect([1.0765, 0.0842, 1.5650], HALF_PI) == pytest.approx(
        0.0765**2 + 0.0842**2 + (1.5650 - HALF_PI) ** 2, rel=1e-12)


def test_zero_rotation_is_trivial():
    # lambda3 = 0 gives u = 0; nothing to do for a vanishing target angle
    sol = run_shot([0.3, 0.5, 0.0], 1e-3, 1e-9, bounded=False, n_steps=100)
    assert np.all(sol.u == 0.0)
    assert sol.defect < 1e-12
    p = export_control(sol)
    assert np.all(p.theta(np.linspace(0, p.T, 11)) == 0.0)


def test_all_starts_failing():
    with pytest.raises(ShootingError):
        shoot(HALF_PI, False, guess=[0.1, 0.1, 0.1, -1.0], n_starts=0)
    with pytest.raises(DomainError):
        shoot(0.0, False)


def test_unbounded_hamiltonian_conserved(oc_unbounded):
    H = oc_unbounded.hamiltonian(lam0=1.0)
    assert np.ptp(H) < 1e-5
    assert abs(oc_unbounded.hamiltonian()[0]) < 1e-14


def test_unbounded_solution(oc_unbounded):
    s = oc_unbounded
    assert s.defect < 1e-12
    assert not s.singular
    assert np.all(np.diff(s.x[:, 2]) > 0)
    assert np.all(s.x[:, 0] >= 1 - 1e-9)


def test_bounded_admissible_and_forward(oc_bounded):
    s = oc_bounded
    assert np.all(s.u >= 0.0) and np.all(s.u <= 1.0)
    assert np.all(s.u_left >= 0.0) and np.all(s.u_left <= 1.0)
    assert np.all(np.diff(s.x[:, 2]) >= 0.0)
    assert s.switch_off_sigma is not None
    assert s.x[-1, 2] == pytest.approx(HALF_PI, abs=1e-12)


def test_bounded_free_oscillation_after_switch_off(oc_bounded):
    s = oc_bounded
    k = int(np.searchsorted(s.sigma, s.switch_off_sigma))
    assert np.all(s.u[k:] == 0.0)
    ref = solve_ivp(lambda t, y: [y[1], 1 / y[0] ** 3 - y[0]], (s.sigma[k], s.T), s.x[k, :2],
                    method="DOP853", rtol=1e-12, atol=1e-12, t_eval=s.sigma[k:])
    assert np.max(np.abs(ref.y.T - s.x[k:, :2])) < 1e-8


@pytest.mark.parametrize("which", ["oc_unbounded", "oc_bounded"])
def test_export_reproduces_state(which, request):
    s = request.getfixturevalue(which)
    p = export_control(s)
    assert p.kind == ("oc-bounded" if s.bounded else "oc-unbounded")
    assert p.dtheta(0.0) == 0.0 and p.dtheta(p.T) == 0.0
    assert p.theta(p.T) == pytest.approx(s.x[-1, 2], abs=1e-8)
    assert check_protocol(p) == []
    tr = integrate_ermakov(p, h=s.T / 20000)
    # Hermite interpolation of the Ermakov run onto the shooting nodes
    b = CubicHermiteSpline(tr.sigma, tr.b, tr.bdot)(s.sigma)
    bdot = np.interp(s.sigma, tr.sigma, tr.bdot)
    assert np.max(np.abs(b - s.x[:, 0])) < 1e-6
    assert np.max(np.abs(bdot - s.x[:, 1])) < 1e-5
    assert abs(tr.final_b - s.x[-1, 0]) < 1e-6 and abs(tr.final_bdot - s.x[-1, 1]) < 1e-6


def test_bounded_export_angle(oc_bounded):
    p = export_control(oc_bounded)
    assert abs(p.theta(p.T) - 1.5708) < 1e-3


def test_solution_json(oc_bounded):
    d = oc_bounded.to_dict(every=100)
    assert set(d) >= {"T", "lambda0", "defect", "terminal", "bounded", "switch_off_sigma", "samples"}
    rows = np.array(d["samples"])
    assert rows.shape[1] == 5 and rows[-1, 0] == oc_bounded.T


def test_hamiltonian_formula():
    x = np.array([[1.2, 0.3, 0.5]])
    lam = np.array([[0.1, -0.4, 0.7]])
    u = np.array([0.6])
    H = pmp_hamiltonian(x, lam, u, 1.0)
    assert H[0] == pytest.approx(1 + 0.1 * 0.3 - 0.4 * (1 / 1.2**3 + (0.36 - 1) * 1.2) + 0.7 * 0.6)


def test_fixed_duration_residual_below_reference():
    # at the reference duration the best reachable defect is below the residual of (1.0765, 0.0842, 1.5650)
    sol = shoot(HALF_PI, False, fix_T=2.2825)
    assert sol.defect <= 0.013
