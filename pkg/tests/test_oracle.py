import math

import numpy as np
import pytest
from scipy.linalg import expm

from trap_rotation.core import ConstantRateProtocol, effective_w2
from trap_rotation.ermakov import excitation_energy, final_energy, integrate_ermakov
from trap_rotation.oracle import (Grid, GridTooCoarseError, LeakageError, WaveState, build_mode,
                                  coherent_evolution_check, coherent_state, ground_state, hermite_functions,
                                  measure, phase_integral, propagate, squeezed_coherent_state)

SQ3 = math.sqrt(3)


def test_ground_state():
    psi = ground_state()
    obs = measure(psi)
    assert abs(psi.norm - 1) < 1e-12
    assert obs.energy == pytest.approx(0.5, abs=1e-12)
    assert obs.width_s * obs.width_p == pytest.approx(0.5, abs=1e-12)
    assert psi.fidelity(psi) == pytest.approx(1.0, abs=1e-12)


def test_excited_mode_energy():
    assert measure(build_mode(2, 1.0, 0.0)).energy == pytest.approx(2.5, abs=1e-10)


def test_stretched_mode():
    psi = build_mode(0, SQ3, 0.0)
    obs = measure(psi, w2=0.7)
    ref = measure(ground_state())
    assert obs.width_s == pytest.approx(SQ3 * ref.width_s, rel=1e-12)
    assert obs.energy == pytest.approx(0.25 * (3 * 0.7 + 1 / 3), rel=1e-10)


def test_moving_mode_energy_matches_formula():
    b, bdot, w2 = 1.3, 0.4, 0.6
    obs = measure(build_mode(1, b, bdot), w2)
    assert obs.energy == pytest.approx(excitation_energy(b, bdot, w2, 1), rel=1e-10)


def test_hermite_orthonormal():
    g = Grid()
    H = hermite_functions(30, g.s)
    G = H @ H.T * g.ds
    assert np.max(np.abs(G - np.eye(31))) < 1e-12


def test_unresolved_mode_rejected():
    with pytest.raises(GridTooCoarseError):
        build_mode(0, 4.0, 0.0, Grid(512, 12.0))
    with pytest.raises(GridTooCoarseError):
        build_mode(0, 1.0, 0.0, Grid(16, 24.0))


def test_stationary_eigenstate():
    p = ConstantRateProtocol(0.0, 3.0, 0.0)
    psi0 = build_mode(1, 1.0, 0.0)
    tr = propagate(psi0, p, record_every=500)
    assert np.ptp(tr.energy) < 1e-8 and tr.energy[0] == pytest.approx(1.5, abs=1e-10)
    drift = np.max(np.abs(np.abs(tr.final.psi) ** 2 - np.abs(psi0.psi) ** 2))
    assert drift < 1e-6
    assert np.ptp(tr.norm) < 1e-10


def test_bangbang_is_excitation_free(bangbang_protocol):
    tr = propagate(ground_state(), bangbang_protocol)
    assert tr.energy[-1] - 0.5 < 1e-4
    assert np.max(np.abs(tr.norm - 1)) < 1e-10


def test_inverse_design_matches_ermakov(inverse_025):
    p = inverse_025.protocol()
    tr = propagate(ground_state(), p, record_every=50)
    erm = integrate_ermakov(p)
    assert abs(tr.energy[-1] - final_energy(erm, p)) <= max(0.01 * final_energy(erm, p), 1e-4)
    # along the whole trajectory
    b = np.interp(tr.sigma, erm.sigma, erm.b)
    v = np.interp(tr.sigma, erm.sigma, erm.bdot)
    E = excitation_energy(b, v, effective_w2(p)(tr.sigma))
    assert np.max(np.abs(E - tr.energy) / np.maximum(np.abs(E), 0.5)) < 0.005


def test_below_critical_excitation_matches():
    from trap_rotation.inverse import optimize_rotation
    d = optimize_rotation(math.pi / 2, 2.4)
    p = d.protocol()
    tr = propagate(ground_state(), p)
    e_erm = final_energy(integrate_ermakov(p), p)
    assert e_erm - 0.5 > 1e-3
    assert abs(tr.energy[-1] - e_erm) <= max(0.01 * e_erm, 1e-4)


def test_grid_convergence(inverse_025):
    p = inverse_025.protocol()
    e1 = propagate(ground_state(Grid(2048)), p, record_every=10**9).energy[-1]
    e2 = propagate(ground_state(Grid(4096)), p, record_every=10**9).energy[-1]
    assert abs(e1 - e2) < 1e-6


def test_squeezed_widths(squeeze_design):
    tr = propagate(ground_state(), squeeze_design.protocol())
    assert tr.width_s[-1] / tr.width_s[0] == pytest.approx(SQ3, rel=0.01)
    assert tr.width_p[-1] / tr.width_p[0] == pytest.approx(1 / SQ3, rel=0.01)
    assert tr.width_s[-1] * tr.width_p[-1] == pytest.approx(0.5, rel=0.01)


def test_squeezed_vacuum(squeeze_design):
    rep = coherent_evolution_check(0.0, squeeze_design.protocol(), SQ3)
    assert rep.fidelity >= 0.999
    assert rep.width_s == pytest.approx(SQ3 / math.sqrt(2), rel=1e-3)


def test_trivial_coherent_rotation():
    T = 2.0
    p = ConstantRateProtocol(0.0, T, 0.0)
    assert phase_integral(p) == pytest.approx(T, rel=1e-12)
    rep = coherent_evolution_check(1.0, p, 1.0)
    assert rep.alpha_tilde == pytest.approx(np.exp(-1j * T), abs=1e-12)
    assert rep.fidelity >= 1 - 1e-9


def test_squeezed_coherent_state(squeeze_design):
    rep = coherent_evolution_check(1.0, squeeze_design.protocol(), SQ3)
    assert rep.r == pytest.approx(-math.log(SQ3))
    assert rep.fidelity >= 0.999


def test_squeezed_target_matches_fock_construction():
    # S(r) D(alpha)|0> built from ladder operators in a truncated Fock space
    n = 80
    a = np.diag(np.sqrt(np.arange(1, n)), 1)
    ad = a.T
    alpha = 0.6 - 0.8j
    gamma = SQ3
    r = -math.log(gamma)
    D = expm(alpha * ad - np.conj(alpha) * a)
    S = expm(0.5 * r * (a @ a - ad @ ad))
    vac = np.zeros(n)
    vac[0] = 1
    c = S @ D @ vac
    g = Grid()
    psi = WaveState(g, c @ hermite_functions(n - 1, g.s))
    target = squeezed_coherent_state(alpha, gamma, g)
    assert abs(psi.norm - 1) < 1e-8
    assert psi.fidelity(target) > 1 - 1e-9


def test_coherent_state_moments():
    alpha = 1.2 + 0.5j
    obs = measure(coherent_state(alpha))
    assert obs.mean_s == pytest.approx(math.sqrt(2) * alpha.real, abs=1e-10)
    assert obs.mean_p == pytest.approx(math.sqrt(2) * alpha.imag, abs=1e-10)
    assert obs.energy == pytest.approx(abs(alpha) ** 2 + 0.5, abs=1e-10)


def test_leakage_detected():
    g = Grid(512, 14.0)
    psi = ground_state(g)
    with pytest.raises(LeakageError):
        # a strongly anti-confining rate pushes the packet off the grid
        propagate(psi, ConstantRateProtocol(3.0, 3.0), record_every=50)


def test_snapshot_and_csv(tmp_path, bangbang_protocol):
    tr = propagate(ground_state(Grid(256, 16.0)), bangbang_protocol, record_every=200)
    path = tmp_path / "psi.bin"
    tr.final.write_snapshot(path)
    raw = path.read_bytes()
    assert len(raw) == 16 + 16 * 256
    back = WaveState.read_snapshot(path)
    assert np.array_equal(back.psi, tr.final.psi) and back.grid == tr.final.grid
    csv_path = tmp_path / "traj.csv"
    tr.write_csv(csv_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "sigma,energy,width_s,width_p,norm" and len(lines) == tr.sigma.size + 1
