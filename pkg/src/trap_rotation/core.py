"""Dimensionless model of a rotating one-dimensional harmonic trap.

All design work happens in the rescaled time ``sigma = omega0 * t`` with the
bare trap frequency set to one. Physical units only appear in
:class:`TrapConfig` and the conversion helpers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

PROTOCOL_KINDS = ("bangbang", "oc-unbounded", "oc-bounded", "polynomial", "compensated", "sampled")


class DomainError(ValueError):
    """Argument outside the domain where an operation is defined."""


class IntegrationError(RuntimeError):
    """A numerical integration produced NaN/Inf or left its admissible region."""


@dataclass(frozen=True)
class TrapConfig:
    """Physical parameters of the trap.

    ``mass`` is carried only for dimensional wavefunctions; no design routine
    reads it.
    """

    omega0: float
    theta_f: float = math.pi / 2
    mass: float = 1.0

    def __post_init__(self):
        if not self.omega0 > 0:
            raise DomainError(f"omega0 must be positive, got {self.omega0}")
        if not self.theta_f > 0:
            raise DomainError(f"theta_f must be positive, got {self.theta_f}")
        if not self.mass > 0:
            raise DomainError(f"mass must be positive, got {self.mass}")

    @classmethod
    def from_hz(cls, omega0_hz: float, theta_f: float = math.pi / 2, mass: float = 1.0) -> "TrapConfig":
        return cls(2 * math.pi * omega0_hz, theta_f, mass)


def to_dimensionless(config: TrapConfig, t_f: float) -> float:
    """Duration in sigma units, ``T = omega0 * t_f``."""
    if not t_f > 0:
        raise DomainError(f"t_f must be positive, got {t_f}")
    return config.omega0 * t_f


def to_seconds(config: TrapConfig, T: float) -> float:
    """Inverse of :func:`to_dimensionless`."""
    if not T > 0:
        raise DomainError(f"T must be positive, got {T}")
    return T / config.omega0


# --------------------------------------------------------------------------
# protocols
# --------------------------------------------------------------------------


class AngleProtocol:
    """Rotation schedule theta(sigma) on [0, T].

    Subclasses provide ``_theta``, ``_dtheta`` and ``_ddtheta`` acting on
    arrays already checked to lie in [0, T]. Kinds with jumps in the angular
    velocity list them in ``breakpoints``; at a breakpoint the public
    ``dtheta`` returns the physical value (zero at the ends, the trap is at
    rest) and integrators sample one-sided limits via :func:`stage_abscissae`.
    """

    kind: str = "sampled"
    smooth: bool = True

    def __init__(self, T: float, theta_f: float, breakpoints: Sequence[float] = ()):
        if not T > 0:
            raise DomainError(f"protocol duration must be positive, got {T}")
        self.T = float(T)
        self.theta_f = float(theta_f)
        self.breakpoints = tuple(sorted(float(b) for b in breakpoints))

    def _check(self, sigma):
        s = np.asarray(sigma, dtype=float)
        slack = 1e-12 * self.T
        if np.any(s < -slack) or np.any(s > self.T + slack):
            raise DomainError(f"sigma outside [0, {self.T}]")
        return np.clip(s, 0.0, self.T)

    def theta(self, sigma):
        return self._theta(self._check(sigma))

    def dtheta(self, sigma):
        return self._dtheta(self._check(sigma))

    def ddtheta(self, sigma):
        return self._ddtheta(self._check(sigma))

    def params(self) -> dict:
        return {}

    def angle_integral(self) -> float:
        """Quadrature of dtheta over [0, T] (Gauss-Legendre on each smooth piece)."""
        edges = sorted({0.0, self.T, *[b for b in self.breakpoints if 0 < b < self.T]})
        nodes, weights = np.polynomial.legendre.leggauss(64)
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            # sub-panels keep sampled protocols (piecewise cubic) well resolved
            panels = np.linspace(a, b, 257)
            mid = 0.5 * (panels[1:] + panels[:-1])[:, None]
            half = 0.5 * np.diff(panels)[:, None]
            s = mid + half * nodes[None, :]
            total += float(np.sum(half * weights[None, :] * self._dtheta(s)))
        return total

    def sample(self, n: int = 2001) -> np.ndarray:
        """Rows ``[sigma, theta, dtheta]`` on a uniform grid."""
        s = np.linspace(0.0, self.T, n)
        return np.column_stack([s, self.theta(s), self.dtheta(s)])

    def to_dict(self, n_samples: int | None = None) -> dict:
        out = {"kind": self.kind, "T": self.T, "theta_f": self.theta_f, "params": self.params()}
        if n_samples:
            out["samples"] = self.sample(n_samples).tolist()
        return out


class ConstantRateProtocol(AngleProtocol):
    """Constant angular velocity ``c`` on (0, T), at rest outside."""

    kind = "bangbang"
    smooth = False

    def __init__(self, c: float, T: float, theta_f: float | None = None):
        super().__init__(T, c * T if theta_f is None else theta_f, breakpoints=(0.0, T))
        self.c = float(c)

    def _theta(self, s):
        return self.c * s

    def _dtheta(self, s):
        return np.where((s > 0) & (s < self.T), self.c, 0.0)

    def _ddtheta(self, s):
        return np.zeros_like(s)

    def params(self):
        return {"c": self.c}


def poly_coefficients(a4: float, a5: float, theta_f: float) -> np.ndarray:
    """Coefficients a0..a5 of the quintic ansatz meeting rest-to-rest conditions."""
    return np.array([
        0.0,
        0.0,
        a4 + 2 * a5 + 3 * theta_f,
        -2 * a4 - 3 * a5 - 2 * theta_f,
        a4,
        a5,
    ])


class PolynomialProtocol(AngleProtocol):
    """theta(sigma) = sum_n a_n (sigma/T)^n with a0..a3 fixed by the boundary conditions."""

    kind = "polynomial"

    def __init__(self, a4: float, a5: float, theta_f: float, T: float):
        super().__init__(T, theta_f)
        self.a4 = float(a4)
        self.a5 = float(a5)
        self.coeffs = poly_coefficients(a4, a5, theta_f)
        c = self.coeffs
        self._p = np.polynomial.Polynomial(c)
        self._dp = self._p.deriv()
        self._ddp = self._dp.deriv()

    def _theta(self, s):
        return self._p(s / self.T)

    def _dtheta(self, s):
        return self._dp(s / self.T) / self.T

    def _ddtheta(self, s):
        return self._ddp(s / self.T) / self.T**2

    def params(self):
        return {"a4": self.a4, "a5": self.a5}


class SampledProtocol(AngleProtocol):
    """Protocol defined by samples of the angular velocity.

    The rate is interpolated with a cubic spline on each piece between
    breakpoints, and theta is the spline's exact antiderivative, so
    ``theta(T)`` and the integrated rate agree by construction. A jump at an
    interior breakpoint is encoded by two samples at the same sigma (left
    value first). ``rest_at_ends`` forces the physical rate to zero at
    sigma = 0 and sigma = T.
    """

    smooth = False

    def __init__(self, sigma, dtheta, theta_f: float | None = None, kind: str = "sampled",
                 breakpoints: Sequence[float] = (), rest_at_ends: bool = True, extra: dict | None = None):
        sigma = np.asarray(sigma, dtype=float)
        dtheta = np.asarray(dtheta, dtype=float)
        if sigma.ndim != 1 or sigma.shape != dtheta.shape or sigma.size < 2:
            raise DomainError("sigma and dtheta must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(sigma) < 0) or sigma[0] != 0.0:
            raise DomainError("samples must start at sigma = 0 and be non-decreasing")
        T = float(sigma[-1])
        interior = [b for b in breakpoints if 0 < b < T]
        # duplicated abscissae mark jumps too
        dup = sigma[1:][np.diff(sigma) == 0]
        interior = sorted(set(interior) | set(float(d) for d in dup))
        if kind not in PROTOCOL_KINDS:
            raise DomainError(f"unknown protocol kind {kind!r}")
        self.kind = kind
        self.rest_at_ends = rest_at_ends
        self.extra = dict(extra or {})
        self._sigma = sigma
        self._rate = dtheta
        edges = [0.0, *interior, T]
        self._edges = np.array(edges)
        self._pieces = []
        self._offsets = [0.0]
        for a, b in zip(edges[:-1], edges[1:]):
            lo = np.searchsorted(sigma, a, side="right") - 1 if a > 0 else 0
            hi = np.searchsorted(sigma, b, side="left")
            xs, ys = sigma[lo:hi + 1], dtheta[lo:hi + 1]
            if xs.size < 2:
                raise DomainError(f"piece [{a}, {b}] has fewer than two samples")
            spline = CubicSpline(xs, ys) if xs.size >= 4 else CubicSpline(xs, ys, bc_type="natural")
            anti = spline.antiderivative()
            self._pieces.append((spline, anti, float(anti(a))))
            self._offsets.append(self._offsets[-1] + float(anti(b) - anti(a)))
        achieved = self._offsets[-1]
        bps = [0.0, *interior, T] if rest_at_ends else interior
        super().__init__(T, achieved if theta_f is None else theta_f, breakpoints=bps)

    def _piece_index(self, s):
        # right-continuous: a point exactly on an interior edge belongs to the later piece
        idx = np.searchsorted(self._edges, s, side="right") - 1
        return np.clip(idx, 0, len(self._pieces) - 1)

    def _eval(self, s, which):
        s = np.asarray(s, dtype=float)
        idx = self._piece_index(s)
        out = np.empty_like(s)
        for i, (spline, anti, a0) in enumerate(self._pieces):
            m = idx == i
            if not np.any(m):
                continue
            if which == 0:
                out[m] = self._offsets[i] + anti(s[m]) - a0
            elif which == 1:
                out[m] = spline(s[m])
            else:
                out[m] = spline(s[m], 1)
        return out

    def _theta(self, s):
        return self._eval(s, 0)

    def _dtheta(self, s):
        r = self._eval(s, 1)
        if self.rest_at_ends:
            r = np.where((s > 0) & (s < self.T), r, 0.0)
        return r

    def _ddtheta(self, s):
        return self._eval(s, 2)

    def params(self):
        return {"breakpoints": [b for b in self.breakpoints if 0 < b < self.T],
                "rest_at_ends": self.rest_at_ends, **self.extra}

    def to_dict(self, n_samples: int | None = None) -> dict:
        out = {"kind": self.kind, "T": self.T, "theta_f": self.theta_f, "params": self.params()}
        # keep the defining samples so a reload reproduces the same spline
        s = self._sigma
        out["samples"] = np.column_stack([s, self._theta(s), self._rate]).tolist()
        return out


def protocol_from_dict(d: dict) -> AngleProtocol:
    """Rebuild a protocol from its JSON form (see ``AngleProtocol.to_dict``)."""
    try:
        kind = d["kind"]
        T = float(d["T"])
        theta_f = float(d["theta_f"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"malformed protocol record: {exc}") from exc
    params = d.get("params") or {}
    if kind == "bangbang" and "c" in params:
        return ConstantRateProtocol(float(params["c"]), T, theta_f)
    if kind == "polynomial" and {"a4", "a5"} <= set(params):
        return PolynomialProtocol(float(params["a4"]), float(params["a5"]), theta_f, T)
    samples = d.get("samples")
    if not samples:
        raise DomainError(f"protocol of kind {kind!r} needs params or samples")
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] < 3:
        raise DomainError("samples must be rows of [sigma, theta, dtheta]")
    if abs(arr[-1, 0] - T) > 1e-12 * max(1.0, T):
        raise DomainError(f"last sample at sigma={arr[-1, 0]} does not match T={T}")
    extra = {k: v for k, v in params.items() if k not in ("breakpoints", "rest_at_ends")}
    return SampledProtocol(arr[:, 0], arr[:, 2], theta_f=theta_f, kind=kind,
                           breakpoints=params.get("breakpoints", ()),
                           rest_at_ends=bool(params.get("rest_at_ends", True)), extra=extra)


def check_protocol(p: AngleProtocol, tol: float = 1e-8) -> list[str]:
    """Return the list of violated protocol constraints (empty when valid)."""
    problems = []
    th0 = float(p.theta(0.0))
    thT = float(p.theta(p.T))
    if abs(th0) > tol:
        problems.append(f"theta(0) = {th0:.6g}, expected 0")
    if abs(thT - p.theta_f) > tol:
        problems.append(f"theta(T) = {thT:.10g} differs from theta_f = {p.theta_f:.10g}")
    integral = p.angle_integral()
    if abs(integral - p.theta_f) > tol:
        problems.append(f"integral of dtheta = {integral:.10g} differs from theta_f = {p.theta_f:.10g}")
    if p.smooth:
        for s in (0.0, p.T):
            r = float(p.dtheta(s))
            if abs(r) > tol:
                problems.append(f"dtheta({s:g}) = {r:.3g}, trap not at rest")
    return problems


class EffectiveFrequencySq:
    """w2(sigma) = 1 - dtheta(sigma)^2 in units of omega0^2; may be negative."""

    def __init__(self, protocol: AngleProtocol):
        self.protocol = protocol

    def __call__(self, sigma):
        return 1.0 - self.protocol.dtheta(sigma) ** 2

    def inner(self, sigma):
        """Same as calling, but at declared breakpoints use the limit from inside [0, T]."""
        return 1.0 - self.protocol._dtheta(np.asarray(sigma, dtype=float)) ** 2


def effective_w2(p: AngleProtocol) -> EffectiveFrequencySq:
    return EffectiveFrequencySq(p)


# --------------------------------------------------------------------------
# fixed-step RK4
# --------------------------------------------------------------------------


def uniform_grid(span: tuple[float, float], h: float) -> np.ndarray:
    """Uniform grid covering ``span`` with step at most ``h``."""
    s0, s1 = map(float, span)
    if not h > 0:
        raise DomainError(f"step must be positive, got {h}")
    if not s1 > s0:
        raise DomainError(f"empty span {span}")
    n = max(1, math.ceil((s1 - s0) / h - 1e-9))
    return np.linspace(s0, s1, n + 1)


def piecewise_grid(T: float, n: int, breakpoints: Sequence[float] = ()) -> np.ndarray:
    """Grid on [0, T] with about ``n`` steps, uniform between interior breakpoints.

    Each piece gets ``ceil(length / (T / n))`` steps so every breakpoint is a node.
    """
    h = T / n
    edges = [0.0, *sorted(b for b in breakpoints if 0 < b < T), T]
    parts = [np.array([0.0])]
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a <= 0:
            continue
        m = max(1, math.ceil((b - a) / h - 1e-9))
        parts.append(np.linspace(a, b, m + 1)[1:])
    return np.concatenate(parts)


def stage_abscissae(grid: np.ndarray, breakpoints: Sequence[float] = ()):
    """Start, midpoint and end abscissae of every RK4 step on ``grid``.

    Stage points that sit on a declared breakpoint are moved one ulp into the
    step, so a piecewise vector field is sampled on the correct side of its
    jump. Breakpoints inside the grid range must coincide with grid nodes.
    """
    start = grid[:-1].copy()
    end = grid[1:].copy()
    mid = 0.5 * (start + end)
    scale = max(1.0, abs(grid[-1] - grid[0]))
    for b in breakpoints:
        if b < grid[0] - 1e-12 * scale or b > grid[-1] + 1e-12 * scale:
            continue
        k = int(np.argmin(np.abs(grid - b)))
        if abs(grid[k] - b) > 1e-9 * scale:
            raise DomainError(f"breakpoint {b} is not aligned with the integration grid")
        if k < len(start):
            start[k] = np.nextafter(grid[k], grid[k + 1])
        if k > 0:
            end[k - 1] = np.nextafter(grid[k], grid[k - 1])
    return start, mid, end


@dataclass
class ODETrajectory:
    sigma: np.ndarray
    y: np.ndarray = field(repr=False)

    @property
    def final(self) -> np.ndarray:
        return self.y[-1]


def integrate_ode(rhs: Callable[[float, np.ndarray], np.ndarray], y0, span: tuple[float, float],
                  h: float, breakpoints: Sequence[float] = ()) -> ODETrajectory:
    """Classical fourth-order Runge-Kutta on a uniform grid.

    Args:
        rhs: vector field ``f(sigma, y)``.
        y0: initial state.
        span: ``(sigma0, sigma1)``.
        h: maximal step; the actual step divides the span evenly.
        breakpoints: discontinuities of ``rhs`` in sigma; must fall on grid nodes.

    Raises:
        IntegrationError: the state became NaN or infinite.
    """
    grid = uniform_grid(span, h)
    start, mid, end = stage_abscissae(grid, breakpoints)
    y = np.array(y0, dtype=float)
    out = np.empty((grid.size, y.size))
    out[0] = y
    for k in range(grid.size - 1):
        dt = grid[k + 1] - grid[k]
        k1 = np.asarray(rhs(start[k], y), dtype=float)
        k2 = np.asarray(rhs(mid[k], y + 0.5 * dt * k1), dtype=float)
        k3 = np.asarray(rhs(mid[k], y + 0.5 * dt * k2), dtype=float)
        k4 = np.asarray(rhs(end[k], y + dt * k3), dtype=float)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"non-finite state at sigma={grid[k + 1]:.6g}: {y}")
        out[k + 1] = y
    return ODETrajectory(grid, out)
