"""Smooth inverse engineering with a quintic angle ansatz.

The two free coefficients ``(a4, a5)`` are chosen by the simplex minimizer so
that the final state is excitation free (``gamma = 1``) or squeezed
(``b(T) = gamma``).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import DomainError, IntegrationError, PolynomialProtocol, poly_coefficients, stage_abscissae
from .ermakov import COLLAPSE_GUARD, DEFAULT_STEPS, _rk4_ermakov, excitation_report, integrate_ermakov
from .simplex import simplex_minimize

EXCESS_TOL = 1e-6
T_MAX = 10 * math.pi


@dataclass
class PolyDesign:
    a4: float
    a5: float
    theta_f: float
    T: float
    gamma: float
    achieved_cost: float
    converged: bool
    excess: float
    b_final: float = float("nan")
    bdot_final: float = float("nan")
    n_iter: int = 0
    coeffs: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.coeffs = poly_coefficients(self.a4, self.a5, self.theta_f)

    @property
    def b_error(self) -> float:
        return self.b_final - self.gamma

    def protocol(self) -> PolynomialProtocol:
        return PolynomialProtocol(self.a4, self.a5, self.theta_f, self.T)


def poly_protocol(a4: float, a5: float, theta_f: float, T: float) -> PolynomialProtocol:
    """Quintic rest-to-rest rotation by ``theta_f`` in time ``T``."""
    return PolynomialProtocol(a4, a5, theta_f, T)


def squeezing_cost(b: float, bdot: float, gamma: float, w2_final: float = 1.0) -> float:
    """``F = bdot^2 + w2 bt^2 + 1/bt^2`` with ``bt = b - gamma + 1``; minimum 2 at the target."""
    bt = b - gamma + 1.0
    if bt <= 0:
        return math.inf
    return bdot**2 + w2_final * bt**2 + 1.0 / bt**2


class _FinalState:
    """Terminal (b, bdot) of the Ermakov equation as a function of (a4, a5) at fixed T.

    Precomputes the powers of sigma/T at the RK4 stage points so one
    evaluation is three small matrix products plus the compiled kernel.
    """

    def __init__(self, theta_f: float, T: float, n_steps: int = DEFAULT_STEPS):
        self.theta_f = theta_f
        self.T = T
        grid = np.linspace(0.0, T, n_steps + 1)
        self.hs = np.diff(grid)
        # rate = (2 a2 x + 3 a3 x^2 + 4 a4 x^3 + 5 a5 x^4) / T
        self.pows = [np.column_stack([k * (s / T) ** (k - 1) for k in range(2, 6)]) / T
                     for s in stage_abscissae(grid)]

    def __call__(self, a4: float, a5: float) -> tuple[float, float]:
        c = poly_coefficients(a4, a5, self.theta_f)[2:]
        ws, wm, we = (1.0 - (P @ c) ** 2 for P in self.pows)
        b, v, fail = _rk4_ermakov(ws, wm, we, self.hs, 1.0, 0.0, 1.0, COLLAPSE_GUARD)
        if fail >= 0:
            raise IntegrationError("scaling factor collapsed")
        return float(b[-1]), float(v[-1])


def _check(theta_f, T, gamma):
    if not T > 0:
        raise DomainError(f"T must be positive, got {T}")
    if not theta_f > 0:
        raise DomainError(f"theta_f must be positive, got {theta_f}")
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma}")


def _design(theta_f, T, gamma, x0, tol, max_iter, squeeze) -> PolyDesign:
    _check(theta_f, T, gamma)
    final = _FinalState(theta_f, T)

    def objective(a):
        try:
            b, v = final(a[0], a[1])
        except IntegrationError:
            return math.inf
        if squeeze:
            return squeezing_cost(b, v, gamma)
        return 0.25 * (v * v + b * b + 1.0 / (b * b))

    res = simplex_minimize(objective, np.asarray(x0, dtype=float), tol=tol, max_iter=max_iter)
    a4, a5 = (float(x) for x in res.x)
    # report from an independent, step-refined integration of the final protocol
    p = PolynomialProtocol(a4, a5, theta_f, T)
    tr = integrate_ermakov(p)
    if squeeze:
        cost = squeezing_cost(tr.final_b, tr.final_bdot, gamma)
        excess = (cost - 2.0) / 4.0
        ok = cost - 2.0 < EXCESS_TOL
    else:
        rep = excitation_report(tr, p, 0)
        cost = rep.excess_final + 0.5
        excess = rep.excess_final
        ok = excess < EXCESS_TOL
    return PolyDesign(a4, a5, theta_f, T, gamma, float(cost), bool(ok), float(excess),
                      tr.final_b, tr.final_bdot, res.n_iter)


def optimize_rotation(theta_f: float, T: float, x0=(0.0, 0.0), tol: float = 1e-10,
                      max_iter: int = 5000) -> PolyDesign:
    """Minimize the final n = 0 energy over (a4, a5).

    ``achieved_cost`` is that energy in units of hbar*omega0; ``converged``
    means the excess over 1/2 is below 1e-6.
    """
    return _design(theta_f, T, 1.0, x0, tol, max_iter, squeeze=False)


def optimize_squeezing(theta_f: float, T: float, gamma: float, x0=(0.0, 0.0), tol: float = 1e-10,
                       max_iter: int = 5000) -> PolyDesign:
    """Minimize the squeezing cost F over (a4, a5); ``converged`` means F - 2 < 1e-6.

    ``excess`` is reported as (F - 2) / 4, the n = 0 excess energy of the
    shifted scaling factor.
    """
    return _design(theta_f, T, gamma, x0, tol, max_iter, squeeze=True)


def _optimize(theta_f, T, gamma, x0):
    if gamma == 1.0:
        return optimize_rotation(theta_f, T, x0)
    return optimize_squeezing(theta_f, T, gamma, x0)


def minimal_time_scan(theta_f: float, gamma: float, T_range: tuple[float, float], n_points: int,
                      warm: bool = True) -> list[PolyDesign]:
    """Optimize on ``n_points`` durations from ``T_range[0]`` to ``T_range[1]``.

    Each point starts from the previous optimum (``warm``) or from (0, 0).
    Scanning from long to short durations follows the excitation-free branch
    down to the critical time. Returns one design per point, in scan order.
    """
    lo, hi = float(min(T_range)), float(max(T_range))
    if n_points <= 0:
        return []
    if not (0 < lo and hi <= T_MAX):
        raise DomainError(f"T range must lie in (0, {T_MAX:.6g}]")
    Ts = np.linspace(T_range[0], T_range[1], n_points) if n_points > 1 else np.array([T_range[0]])
    out = []
    x0 = (0.0, 0.0)
    for T in Ts:
        d = _optimize(theta_f, float(T), gamma, x0)
        out.append(d)
        if warm:
            x0 = (d.a4, d.a5)
    return out


def critical_time(theta_f: float, gamma: float = 1.0, T_hi: float = 4.0, T_lo: float = 1.0,
                  n_points: int = 13, tol: float = 1e-3) -> tuple[float, list[PolyDesign]]:
    """Shortest duration with an excitation-free (or exactly squeezed) design.

    A warm-started scan from ``T_hi`` down to ``T_lo`` brackets the first
    failure; bisection (warm-started from the last success) narrows the
    bracket to ``tol``. Returns the shortest converged T and the scan.
    """
    scan = minimal_time_scan(theta_f, gamma, (T_hi, T_lo), n_points)
    if not scan[0].converged:
        raise DomainError(f"no converged design at T_hi={T_hi}")
    k = next((i for i, d in enumerate(scan) if not d.converged), None)
    if k is None:
        return scan[-1].T, scan
    good, bad = scan[k - 1], scan[k].T
    while good.T - bad > tol:
        mid = 0.5 * (good.T + bad)
        d = _optimize(theta_f, mid, gamma, (good.a4, good.a5))
        if d.converged:
            good = d
        else:
            bad = mid
    return good.T, scan


SCAN_COLUMNS = ["T", "t_f_us", "a4", "a5", "cost", "excess", "b_error", "bdot", "converged"]


def write_scan_csv(rows: list[PolyDesign], path, omega0: float | None = None) -> None:
    """One row per design (12 significant digits); header only for an empty scan."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCAN_COLUMNS)
        for d in rows:
            t_us = d.T / omega0 * 1e6 if omega0 else float("nan")
            vals = [d.T, t_us, d.a4, d.a5, d.achieved_cost, d.excess, d.b_error, d.bdot_final]
            w.writerow([f"{x:.12g}" for x in vals] + [int(d.converged)])
