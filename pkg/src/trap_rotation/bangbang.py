"""One-step constant-rate rotation with closed-form scaling factor."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConstantRateProtocol, DomainError


@dataclass(frozen=True)
class BangBangDesign:
    theta_f: float
    c: float
    omega1: float
    T: float
    f: float


def design_bangbang(theta_f: float) -> BangBangDesign:
    """Shortest constant-rate rotation returning b to (1, 0).

    The rotation lasts half a period of the softened trap, ``T = pi / omega1``,
    with ``omega1^2 = 1 - c^2`` and ``c T = theta_f``.
    """
    if not theta_f > 0 or not math.isfinite(theta_f):
        raise DomainError(f"theta_f must be positive and finite, got {theta_f}")
    c = theta_f / math.hypot(math.pi, theta_f)
    f = math.sqrt(1.0 + (theta_f / math.pi) ** 2)
    omega1 = math.sqrt(1.0 - c * c)
    return BangBangDesign(theta_f=theta_f, c=c, omega1=omega1, T=math.pi * f, f=f)


def analytic_b(d: BangBangDesign, sigma):
    """Closed-form ``(b, bdot)`` during the constant-rate phase."""
    s = np.asarray(sigma, dtype=float)
    if np.any(s < -1e-12 * d.T) or np.any(s > d.T * (1 + 1e-12)):
        raise DomainError(f"sigma outside [0, {d.T}]")
    w1 = d.omega1
    amp = (1.0 - w1**2) / w1**2
    sn, cs = np.sin(w1 * s), np.cos(w1 * s)
    b = np.sqrt(amp * sn**2 + 1.0)
    bdot = sn * cs * (1.0 - w1**2) / (w1 * b)
    return b, bdot


def as_protocol(d: BangBangDesign) -> ConstantRateProtocol:
    return ConstantRateProtocol(d.c, d.T, d.theta_f)
