"""Ermakov scaling factor and Lewis-Riesenfeld excitation energy.

In sigma units the scaling factor obeys ``b'' + w2(sigma) b = k / b^3`` with
``k = 1`` for a rotating trap of constant frequency (``k = Omega0^2`` in the
general invariant family).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np

from .core import AngleProtocol, DomainError, IntegrationError, effective_w2, piecewise_grid, stage_abscissae

COLLAPSE_GUARD = 1e-6
DEFAULT_STEPS = 20000
REFINE_TOL = 1e-9
MAX_STEPS = 20000 * 2**6


class CollapseError(IntegrationError):
    """The scaling factor fell below the collapse guard."""


@numba.njit(cache=True)
def _rk4_ermakov(w_start, w_mid, w_end, hs, b0, v0, k, guard):
    n = w_mid.size
    b = np.empty(n + 1)
    v = np.empty(n + 1)
    b[0] = b0
    v[0] = v0
    for i in range(n):
        h = hs[i]
        x = b[i]
        y = v[i]
        k1x = y
        k1y = -w_start[i] * x + k / x**3
        x2 = x + 0.5 * h * k1x
        y2 = y + 0.5 * h * k1y
        k2x = y2
        k2y = -w_mid[i] * x2 + k / x2**3
        x3 = x + 0.5 * h * k2x
        y3 = y + 0.5 * h * k2y
        k3x = y3
        k3y = -w_mid[i] * x3 + k / x3**3
        x4 = x + h * k3x
        y4 = y + h * k3y
        k4x = y4
        k4y = -w_end[i] * x4 + k / x4**3
        b[i + 1] = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v[i + 1] = y + h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        if not (b[i + 1] > guard) or not np.isfinite(v[i + 1]):
            return b, v, i + 1
    return b, v, -1


@dataclass
class BTrajectory:
    """Sampled scaling factor along a protocol."""

    sigma: np.ndarray
    b: np.ndarray
    bdot: np.ndarray
    w2: np.ndarray = field(repr=False)
    k: float = 1.0

    @property
    def final_b(self) -> float:
        return float(self.b[-1])

    @property
    def final_bdot(self) -> float:
        return float(self.bdot[-1])


def _solve(w2_inner: Callable, T: float, n: int, breakpoints: Sequence[float], b0: float, bdot0: float,
           k: float) -> BTrajectory:
    grid = piecewise_grid(T, n, breakpoints)
    start, mid, end = stage_abscissae(grid, breakpoints)
    ws = np.ascontiguousarray(w2_inner(start), dtype=float)
    wm = np.ascontiguousarray(w2_inner(mid), dtype=float)
    we = np.ascontiguousarray(w2_inner(end), dtype=float)
    b, v, fail = _rk4_ermakov(ws, wm, we, np.diff(grid), float(b0), float(bdot0), float(k), COLLAPSE_GUARD)
    if fail >= 0:
        if not np.isfinite(b[fail]) or not np.isfinite(v[fail]):
            raise IntegrationError(f"non-finite Ermakov state at sigma={grid[fail]:.6g}")
        raise CollapseError(f"scaling factor collapsed (b={b[fail]:.3g}) at sigma={grid[fail]:.6g}")
    w2 = np.concatenate([ws[:1], we])
    return BTrajectory(grid, b, v, w2, k)


def solve_ermakov(w2_inner: Callable, T: float, b0: float = 1.0, bdot0: float = 0.0, k: float = 1.0,
                  n_steps: int | None = None, breakpoints: Sequence[float] = ()) -> BTrajectory:
    """Integrate ``b'' + w2 b = k / b^3`` for an arbitrary frequency profile.

    ``w2_inner`` must be vectorized. With ``n_steps=None`` the step count starts
    at 20000 and doubles until the terminal state changes by less than 1e-9.
    """
    if n_steps is not None:
        return _solve(w2_inner, T, int(n_steps), breakpoints, b0, bdot0, k)
    n = DEFAULT_STEPS
    prev = _solve(w2_inner, T, n, breakpoints, b0, bdot0, k)
    while n < MAX_STEPS:
        n *= 2
        cur = _solve(w2_inner, T, n, breakpoints, b0, bdot0, k)
        delta = max(abs(cur.final_b - prev.final_b), abs(cur.final_bdot - prev.final_bdot))
        prev = cur
        if delta < REFINE_TOL:
            break
    return prev


def integrate_ermakov(p: AngleProtocol, b0: float = 1.0, bdot0: float = 0.0, h: float | None = None) -> BTrajectory:
    """Scaling factor along a rotation protocol (bare trap frequency = 1).

    ``h`` fixes the maximal step (the grid is uniform between breakpoints); by
    default the step is refined automatically. Raises :class:`CollapseError` if b drops below 1e-6.
    """
    if b0 <= 0:
        raise DomainError("b0 must be positive")
    w2 = effective_w2(p)
    n = None if h is None else max(1, int(np.ceil(p.T / h - 1e-9)))
    tr = solve_ermakov(w2.inner, p.T, b0, bdot0, 1.0, n, p.breakpoints)
    # physical values at the nodes (trap at rest at the end points)
    tr.w2 = w2(tr.sigma)
    return tr


def excitation_energy(b, bdot, w2, n: int = 0):
    """Energy of the state that started in mode ``n``, in units of hbar*omega0."""
    b = np.asarray(b, dtype=float)
    if np.any(b <= 0):
        raise DomainError("b must be positive")
    return (2 * n + 1) / 4.0 * (np.asarray(bdot) ** 2 + np.asarray(w2) * b**2 + 1.0 / b**2)


def final_defect(tr: BTrajectory, b_target: float = 1.0) -> float:
    """``(b(T) - b_target)^2 + bdot(T)^2``."""
    return (tr.final_b - b_target) ** 2 + tr.final_bdot**2


def final_energy(tr: BTrajectory, p: AngleProtocol | None = None, n: int = 0) -> float:
    """Energy right after the rotation, in the trap at rest (physical w2 at T)."""
    w2_final = 1.0 if p is None else float(effective_w2(p)(p.T))
    return float(excitation_energy(tr.final_b, tr.final_bdot, w2_final, n))


@dataclass
class ExcitationReport:
    energy_n: np.ndarray = field(repr=False)
    n: int
    excess_final: float
    defect: float
    b_error: float
    bdot_final: float


def excitation_report(tr: BTrajectory, p: AngleProtocol | None = None, n: int = 0,
                      b_target: float = 1.0) -> ExcitationReport:
    energy = excitation_energy(tr.b, tr.bdot, tr.w2, n)
    excess = final_energy(tr, p, n) - (n + 0.5)
    return ExcitationReport(energy, n, excess, final_defect(tr, b_target), tr.final_b - b_target, tr.final_bdot)


def pinney_invariant(tr: BTrajectory, u: np.ndarray, udot: np.ndarray) -> np.ndarray:
    """``(bdot u - b udot)^2 + k (u / b)^2`` for a solution ``u`` of ``u'' + w2 u = 0``."""
    return (tr.bdot * u - tr.b * udot) ** 2 + tr.k * (u / tr.b) ** 2


def write_csv(tr: BTrajectory, path, every: int = 1) -> None:
    """Columns sigma, b, bdot, w2, energy_n0 (12 significant digits)."""
    energy = excitation_energy(tr.b, tr.bdot, tr.w2, 0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sigma", "b", "bdot", "w2", "energy_n0"])
        for row in zip(tr.sigma[::every], tr.b[::every], tr.bdot[::every], tr.w2[::every], energy[::every]):
            w.writerow([f"{x:.12g}" for x in row])
