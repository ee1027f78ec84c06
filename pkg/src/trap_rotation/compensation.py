"""Compensating harmonic term that makes the rotating-frame dynamics prescribed.

Adding ``omega_c^2 s^2 / 2`` to the co-rotating Hamiltonian leaves a net
harmonic coefficient ``Omega^2 = omega_c^2 - dtheta^2``. Choosing
``omega_c^2 = -b''/b + dtheta^2`` makes ``b`` the scaling factor of the
Ermakov equation with ``Omega0 = 0``, for any confining potential U(s).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import AngleProtocol, DomainError, protocol_from_dict
from .ermakov import BTrajectory, solve_ermakov

SCHEDULE_TOL = 1e-9

# smoothstep polynomials on x in [0, 1] with vanishing derivatives at both ends
_SMOOTHSTEP = {
    5: np.polynomial.Polynomial([0, 0, 0, 10, -15, 6]),
    9: np.polynomial.Polynomial([0, 0, 0, 0, 0, 126, -420, 540, -315, 70]),
}


@dataclass
class BSchedule:
    """Prescribed scaling factor b(sigma) on [0, T] with first and second derivatives."""

    T: float
    gamma: float
    b: Callable
    bdot: Callable
    bddot: Callable
    label: str = "custom"

    def validate(self, tol: float = SCHEDULE_TOL, n_check: int = 2001) -> list[str]:
        """Boundary and positivity violations (empty when valid)."""
        problems = []
        ends = np.array([0.0, self.T])
        b, bd, bdd = self.b(ends), self.bdot(ends), self.bddot(ends)
        if abs(b[0] - 1.0) > tol:
            problems.append(f"b(0) = {b[0]:.12g}, expected 1")
        if abs(b[1] - self.gamma) > tol:
            problems.append(f"b(T) = {b[1]:.12g}, expected gamma = {self.gamma:.12g}")
        for name, vals in (("bdot", bd), ("bddot", bdd)):
            for where, v in zip(("0", "T"), vals):
                if abs(v) > tol:
                    problems.append(f"{name}({where}) = {v:.3g}, expected 0")
        s = np.linspace(0.0, self.T, n_check)
        if np.any(self.b(s) <= 0):
            problems.append("b must stay positive")
        return problems


def constant_schedule(T: float) -> BSchedule:
    one = lambda s: np.ones_like(np.asarray(s, dtype=float))
    zero = lambda s: np.zeros_like(np.asarray(s, dtype=float))
    return BSchedule(T, 1.0, one, zero, zero, label="constant")


def smoothstep_schedule(gamma: float, T: float, order: int = 5) -> BSchedule:
    """``b = 1 + (gamma - 1) S(sigma / T)`` with the quintic (default) or ninth-order smoothstep.

    Both orders meet value, slope and curvature conditions at both ends; the
    ninth-order one also has vanishing third and fourth derivatives.
    """
    if order not in _SMOOTHSTEP:
        raise DomainError(f"smoothstep order must be 5 or 9, got {order}")
    if not gamma > 0 or not T > 0:
        raise DomainError("gamma and T must be positive")
    S = _SMOOTHSTEP[order]
    dS, ddS = S.deriv(), S.deriv(2)
    g = gamma - 1.0
    return BSchedule(
        T, gamma,
        lambda s: 1.0 + g * S(np.asarray(s, dtype=float) / T),
        lambda s: g * dS(np.asarray(s, dtype=float) / T) / T,
        lambda s: g * ddS(np.asarray(s, dtype=float) / T) / T**2,
        label=f"smoothstep{order}",
    )


@dataclass
class CompensationPlan:
    theta: AngleProtocol
    schedule: BSchedule

    @property
    def gamma(self) -> float:
        return self.schedule.gamma

    def omega_c2(self, sigma):
        """Compensating coefficient ``-b''/b + dtheta^2`` (may be negative)."""
        s = np.asarray(sigma, dtype=float)
        return -self.schedule.bddot(s) / self.schedule.b(s) + self.theta.dtheta(s) ** 2

    def net_w2(self, sigma):
        """``Omega^2 = omega_c^2 - dtheta^2 = -b''/b``."""
        s = np.asarray(sigma, dtype=float)
        return -self.schedule.bddot(s) / self.schedule.b(s)

    def verify(self, n_steps: int | None = None) -> tuple[BTrajectory, float]:
        """Integrate ``b'' + Omega^2 b = 0`` and return it with the sup-norm gap to the schedule."""
        tr = solve_ermakov(self.net_w2, self.theta.T, 1.0, 0.0, k=0.0, n_steps=n_steps)
        gap = float(np.max(np.abs(tr.b - self.schedule.b(tr.sigma))))
        return tr, gap

    def samples(self, n: int = 2001) -> np.ndarray:
        s = np.linspace(0.0, self.theta.T, n)
        return np.column_stack([s, self.omega_c2(s), self.schedule.b(s)])

    def to_dict(self, n: int = 2001) -> dict:
        """Plan JSON: reference protocol, gamma and rows [sigma, omega_c2, b].

        Valid for an arbitrary confining potential, which never enters the
        compensating term.
        """
        return {
            "theta_ref": self.theta.to_dict(),
            "gamma": self.gamma,
            "schedule": self.schedule.label,
            "potential": "arbitrary",
            "samples": self.samples(n).tolist(),
        }

    def write_json(self, path, n: int = 2001) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(n), fh, indent=1)


def trivial_compensation(theta: AngleProtocol) -> CompensationPlan:
    """``omega_c^2 = dtheta^2``: the rotating-frame Hamiltonian becomes time independent."""
    if not theta.smooth:
        raise DomainError("trivial compensation needs a protocol with continuous dtheta")
    return CompensationPlan(theta, constant_schedule(theta.T))


def scheduled_compensation(theta: AngleProtocol, b_schedule: BSchedule | None = None,
                           gamma: float = 1.0) -> CompensationPlan:
    """Compensation that drives the scaling factor along ``b_schedule`` (default quintic smoothstep)."""
    if b_schedule is None:
        b_schedule = smoothstep_schedule(gamma, theta.T)
    if abs(b_schedule.T - theta.T) > 1e-12 * theta.T:
        raise DomainError("schedule and protocol durations differ")
    if abs(b_schedule.gamma - gamma) > SCHEDULE_TOL:
        raise DomainError(f"schedule ends at {b_schedule.gamma}, expected gamma = {gamma}")
    problems = b_schedule.validate()
    if problems:
        raise DomainError("invalid b schedule: " + "; ".join(problems))
    return CompensationPlan(theta, b_schedule)


def plan_from_dict(d: dict) -> CompensationPlan:
    """Rebuild a plan written by :meth:`CompensationPlan.to_dict` (smoothstep or constant schedules)."""
    try:
        theta = protocol_from_dict(d["theta_ref"])
        gamma = float(d["gamma"])
        label = d.get("schedule", "smoothstep5")
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"malformed plan record: {exc}") from exc
    if label == "constant":
        return trivial_compensation(theta)
    if not label.startswith("smoothstep"):
        raise DomainError(f"cannot rebuild schedule {label!r}")
    order = int(label[len("smoothstep"):])
    return scheduled_compensation(theta, smoothstep_schedule(gamma, theta.T, order), gamma)
