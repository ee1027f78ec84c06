"""Time-optimal rotation by Pontryagin's maximum principle and shooting.

State ``x = (b, b', angle)`` and costates ``l = (l1, l2, l3)`` evolve in sigma
units::

    x1' = x2,  x2' = 1/x1^3 + (u^2 - 1) x1,  x3' = u
    l1' = (3/x1^4 - (u^2 - 1)) l2,  l2' = -l1,  l3' = 0

with the control minimizing the PMP Hamiltonian, ``u = -l3 / (2 l2 x1)``,
optionally clipped to [0, 1]. The x-trajectory depends on the costates only
through their direction, so every shot normalizes ``l(0)`` to unit length.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.stats import qmc

from .core import DomainError, IntegrationError, SampledProtocol
from .simplex import simplex_minimize

log = logging.getLogger(__name__)

COLLAPSE_GUARD = 1e-6
SINGULAR_EPS = 1e-12
PENALTY = 1e3
MAX_EVENTS = 256

LAMBDA_BOX = 5.0
T_BOX = (0.5, 20.0)


class ShootingError(IntegrationError):
    """No shooting start produced a usable trajectory."""

    def __init__(self, message: str, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


# --------------------------------------------------------------------------
# control law and vector field
# --------------------------------------------------------------------------


def control_law(l2: float, l3: float, x1: float, bounded: bool) -> tuple[float, bool]:
    """Hamiltonian-minimizing control and a singular-arc flag.

    Where ``l2 * x1`` vanishes the unbounded law is undefined; the control is
    then set to zero and the flag raised.
    """
    den = 2.0 * l2 * x1
    if abs(den) < SINGULAR_EPS:
        return 0.0, True
    u = -l3 / den
    if bounded:
        u = min(max(u, 0.0), 1.0)
    return u, False


def pmp_rhs(state, bounded: bool, control_off: bool = False) -> np.ndarray:
    """Derivative of ``(x1, x2, x3, l1, l2, l3)`` with the active control law substituted."""
    x1, x2, x3, l1, l2, l3 = map(float, state)
    if x1 <= COLLAPSE_GUARD:
        raise IntegrationError(f"x1 = {x1:.3g} below the collapse guard")
    u = 0.0 if control_off else control_law(l2, l3, x1, bounded)[0]
    a = u * u - 1.0
    return np.array([x2, 1.0 / x1**3 + a * x1, u, (3.0 / x1**4 - a) * l2, -l1, 0.0])


def pmp_hamiltonian(x, lam, u, lam0: float = 1.0):
    """``lam0 + l1 x2 + l2 (1/x1^3 + (u^2-1) x1) + l3 u`` (vectorized over rows)."""
    x = np.atleast_2d(x)
    lam = np.atleast_2d(lam)
    x1, x2 = x[:, 0], x[:, 1]
    return lam0 + lam[:, 0] * x2 + lam[:, 1] * (1 / x1**3 + (u**2 - 1) * x1) + lam[:, 2] * u


@numba.njit(cache=True)
def _law(l2, l3, x1, bounded, mode):
    # mode = sign of l2*x1 on the current arc; a stage that strays across the
    # switching surface keeps the arc's saturated value (bounded law only)
    den = 2.0 * l2 * x1
    if bounded and mode != 0 and den * mode <= 0.0:
        den = mode * SINGULAR_EPS * 0.5
    if abs(den) < SINGULAR_EPS and not (bounded and mode != 0):
        return 0.0, True
    u = -l3 / den
    if bounded:
        if u < 0.0:
            u = 0.0
        elif u > 1.0:
            u = 1.0
    return u, False


@numba.njit(cache=True)
def _f(x1, x2, l1, l2, l3, bounded, off, mode):
    u = 0.0
    sing = False
    if not off:
        u, sing = _law(l2, l3, x1, bounded, mode)
    a = u * u - 1.0
    return x2, 1.0 / x1**3 + a * x1, u, (3.0 / x1**4 - a) * l2, -l1, sing


@numba.njit(cache=True)
def _step(x1, x2, x3, l1, l2, l3, h, bounded, off, mode):
    a1, b1, c1, d1, e1, s1 = _f(x1, x2, l1, l2, l3, bounded, off, mode)
    a2, b2, c2, d2, e2, s2 = _f(x1 + 0.5 * h * a1, x2 + 0.5 * h * b1, l1 + 0.5 * h * d1, l2 + 0.5 * h * e1, l3, bounded, off, mode)
    a3, b3, c3, d3, e3, s3 = _f(x1 + 0.5 * h * a2, x2 + 0.5 * h * b2, l1 + 0.5 * h * d2, l2 + 0.5 * h * e2, l3, bounded, off, mode)
    a4, b4, c4, d4, e4, s4 = _f(x1 + h * a3, x2 + h * b3, l1 + h * d3, l2 + h * e3, l3, bounded, off, mode)
    return (x1 + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4),
            x2 + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4),
            x3 + h / 6.0 * (c1 + 2 * c2 + 2 * c3 + c4),
            l1 + h / 6.0 * (d1 + 2 * d2 + 2 * d3 + d4),
            l2 + h / 6.0 * (e1 + 2 * e2 + 2 * e3 + e4),
            s1 or s2 or s3 or s4)


@numba.njit(cache=True)
def _saturated(l2, l3, x1, mode):
    # 1 if the bounded law sits at its upper limit
    den = 2.0 * l2 * x1
    if mode == 0 or den * mode <= 0.0:
        return 0
    return 1 if -l3 / den >= 1.0 else 0


@numba.njit(cache=True)
def _locate(x1, x2, x3, l1, l2, l3, dt, bounded, off, mode, which, theta_f):
    # bisection for the sub-step length at which the event function vanishes;
    # which = 1: angle reaches theta_f, which = 2: l2 changes sign,
    # which = 3: the bounded law enters or leaves its upper limit (a kink)
    sat0 = _saturated(l2, l3, x1, mode)
    lo = 0.0
    hi = dt
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        y1, y2, y3, m1, m2, _s = _step(x1, x2, x3, l1, l2, l3, mid, bounded, off, mode)
        if which == 1:
            crossed = y3 >= theta_f
        elif which == 2:
            crossed = m2 * mode <= 0.0
        else:
            crossed = m2 * mode > 0.0 and _saturated(m2, l3, y1, mode) != sat0
        if crossed:
            hi = mid
        else:
            lo = mid
    return hi


@numba.njit(cache=True)
def _shoot(l10, l20, l30, T, theta_f, bounded, n, record):
    """RK4 shot with event location. Returns (sigma, state, u_left, u_right, event, m, status, singular).

    Nodes are the uniform grid ``k T / n`` plus the located events; ``event``
    is 1 at the bounded switch-off, 2 where the bounded control jumps (l2
    changes sign), 3 where it enters or leaves saturation at u = 1. ``state`` rows are (x1, x2, x3, l1, l2). status: 0 ok,
    1 collapse, 2 non-finite. Without ``record`` only the final node is kept.
    """
    h = T / n
    cap = n + 1 + MAX_EVENTS if record else 1
    sig = np.zeros(cap)
    st = np.zeros((cap, 5))
    ul = np.zeros(cap)
    ur = np.zeros(cap)
    ev = np.zeros(cap, dtype=np.int64)
    x1, x2, x3, l1, l2, l3 = 1.0, 0.0, 0.0, l10, l20, l30
    mode = 0
    if bounded:
        mode = 1 if l2 > 0 else (-1 if l2 < 0 else 0)
    off = False
    if bounded and theta_f <= 0.0:
        off = True
    singular = False
    sigma = 0.0
    m = 0
    u0 = 0.0
    if not off:
        u0, _s = _law(l2, l3, x1, bounded, mode)
    if record:
        st[0, 0] = x1
        st[0, 1] = x2
        st[0, 2] = x3
        st[0, 3] = l1
        st[0, 4] = l2
        ul[0] = u0
        ur[0] = u0
    m = 1
    j = 1
    n_events = 0
    while j <= n:
        target = T if j == n else j * h
        dt = target - sigma
        y1, y2, y3, m1, m2, s = _step(x1, x2, x3, l1, l2, l3, dt, bounded, off, mode)
        which = 0
        if bounded and not off and n_events < MAX_EVENTS:
            best = dt
            if y3 >= theta_f:
                t = _locate(x1, x2, x3, l1, l2, l3, dt, bounded, off, mode, 1, theta_f)
                if t <= best:
                    best, which = t, 1
            if mode != 0 and m2 * mode <= 0.0:
                t = _locate(x1, x2, x3, l1, l2, l3, dt, bounded, off, mode, 2, theta_f)
                if t < best or which == 0:
                    best, which = t, 2
            elif mode != 0 and _saturated(m2, l3, y1, mode) != _saturated(l2, l3, x1, mode):
                t = _locate(x1, x2, x3, l1, l2, l3, dt, bounded, off, mode, 3, theta_f)
                if t < best or which == 0:
                    best, which = t, 3
            if which:
                dt = best
                y1, y2, y3, m1, m2, s = _step(x1, x2, x3, l1, l2, l3, dt, bounded, off, mode)
        singular = singular or s
        if not (np.isfinite(y1) and np.isfinite(y2) and np.isfinite(y3) and np.isfinite(m1) and np.isfinite(m2)):
            return sig[:m], st[:m], ul[:m], ur[:m], ev[:m], m, 2, singular
        if y1 <= COLLAPSE_GUARD:
            return sig[:m], st[:m], ul[:m], ur[:m], ev[:m], m, 1, singular
        u_left = 0.0
        if not off:
            u_left, _s = _law(m2, l3, y1, bounded, mode)
        x1, x2, x3, l1, l2 = y1, y2, y3, m1, m2
        sigma = sigma + dt
        if which == 1:
            off = True
            n_events += 1
        elif which == 2:
            mode = -mode
            n_events += 1
        elif which == 3:
            n_events += 1
        else:
            sigma = target
            j += 1
        u_right = 0.0
        if not off:
            u_right, _s = _law(l2, l3, x1, bounded, mode)
        k = m if record else 0
        sig[k] = sigma
        st[k, 0] = x1
        st[k, 1] = x2
        st[k, 2] = x3
        st[k, 3] = l1
        st[k, 4] = l2
        ul[k] = u_left
        ur[k] = u_right
        ev[k] = which
        if record:
            m += 1
    if not record:
        m = 1
    return sig[:m], st[:m], ul[:m], ur[:m], ev[:m], m, 0, singular


def _unit(lam):
    lam = np.asarray(lam, dtype=float)
    nrm = float(np.linalg.norm(lam))
    if nrm == 0.0 or not math.isfinite(nrm):
        raise DomainError("costate vector must be finite and non-zero")
    return lam / nrm


def terminal_defect(x, theta_f: float) -> float:
    return float((x[0] - 1.0) ** 2 + x[1] ** 2 + (x[2] - theta_f) ** 2)


# --------------------------------------------------------------------------
# solutions
# --------------------------------------------------------------------------


@dataclass
class OCSolution:
    """PMP trajectory on its integration nodes.

    ``u`` holds the control used on the step leaving each node; ``u_left``
    the limit arriving at it. They differ only at located events
    (``events``: 1 switch-off, 2 control jump).
    """

    theta_f: float
    T: float
    lambda0: np.ndarray
    bounded: bool
    sigma: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    costates: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    u_left: np.ndarray = field(repr=False)
    events: np.ndarray = field(repr=False)
    terminal: np.ndarray
    defect: float
    switch_off_sigma: float | None
    singular: bool = False
    n_starts: int = 0
    seed: int | None = None

    @property
    def jump_sigmas(self) -> list[float]:
        return [float(s) for s in self.sigma[(self.events == 1) | (self.events == 2)]]

    @property
    def event_sigmas(self) -> list[float]:
        return [float(s) for s in self.sigma[self.events > 0]]

    def hamiltonian(self, lam0: float | None = None) -> np.ndarray:
        """PMP Hamiltonian along the trajectory.

        ``lam0`` defaults to the value that makes H vanish at sigma = 0 (the
        free-final-time transversality condition) for the normalized costates.
        """
        lam = np.column_stack([self.costates, np.full(self.sigma.size, self.lambda0[2])])
        if lam0 is None:
            lam0 = -float(pmp_hamiltonian(self.x[:1], lam[:1], self.u[:1], 0.0)[0])
        return pmp_hamiltonian(self.x, lam, self.u, lam0)

    def to_dict(self, every: int = 1) -> dict:
        rows = np.column_stack([self.sigma, self.u, self.x])
        keep = np.zeros(self.sigma.size, dtype=bool)
        keep[::every] = True
        keep[-1] = True
        keep |= self.events > 0
        return {
            "T": self.T,
            "theta_f": self.theta_f,
            "lambda0": self.lambda0.tolist(),
            "defect": self.defect,
            "terminal": self.terminal.tolist(),
            "bounded": self.bounded,
            "switch_off_sigma": self.switch_off_sigma,
            "singular_arc": self.singular,
            "seed": self.seed,
            "samples": rows[keep].tolist(),
        }


def run_shot(lam, T: float, theta_f: float, bounded: bool, n_steps: int = 20000) -> OCSolution:
    """Integrate one PMP trajectory from ``x(0) = (1, 0, 0)``.

    For the bounded law the control is switched off where the accumulated
    angle reaches ``theta_f``; that point and every jump of the clipped
    control are located inside their step and become integration nodes.
    """
    if not T > 0:
        raise DomainError(f"T must be positive, got {T}")
    lam = _unit(lam)
    sig, st, ul, ur, ev, m, status, singular = _shoot(lam[0], lam[1], lam[2], float(T), float(theta_f),
                                                       bool(bounded), int(n_steps), True)
    if status:
        what = "collapsed" if status == 1 else "diverged"
        raise IntegrationError(f"PMP trajectory {what} at sigma={sig[-1]:.6g} (lambda={lam}, T={T})")
    switch = np.flatnonzero(ev == 1)
    term = st[-1, :3].copy()
    return OCSolution(
        theta_f=float(theta_f), T=float(T), lambda0=lam, bounded=bool(bounded), sigma=sig.copy(),
        x=st[:, :3].copy(), costates=st[:, 3:5].copy(), u=ur.copy(), u_left=ul.copy(), events=ev.copy(),
        terminal=term, defect=terminal_defect(term, theta_f),
        switch_off_sigma=float(sig[switch[0]]) if switch.size else None, singular=bool(singular),
    )


def _objective(theta_f, bounded, n_steps, fix_T=None, T_max=None):
    def f(p):
        lam = p[:3]
        T = fix_T if fix_T is not None else p[3]
        if not T > 0 or (T_max is not None and T > T_max):
            return PENALTY
        nrm = math.sqrt(float(lam @ lam))
        if nrm == 0.0 or not math.isfinite(nrm):
            return PENALTY
        _, st, _, _, _, _, status, _ = _shoot(lam[0] / nrm, lam[1] / nrm, lam[2] / nrm, float(T), theta_f,
                                              bounded, n_steps, False)
        if status:
            return PENALTY
        return terminal_defect(st[-1], theta_f)

    return f


def shoot(theta_f: float, bounded: bool, guess=None, n_starts: int = 50, seed: int = 0,
          fix_T: float | None = None, n_steps: int = 20000, screen_steps: int = 2000, n_polish: int = 3,
          tie_tol: float = 1e-10, max_iter: int = 5000) -> OCSolution:
    """Shooting over ``(l1(0), l2(0), l3, T)`` minimizing the terminal defect.

    Starting points are ``guess`` (if given) plus ``n_starts`` scrambled-Sobol
    points in ``|l_i| <= 5``, ``T in [0.5, 20]``. Each start is minimized with
    the simplex method on a coarse grid (``screen_steps``); the ``n_polish``
    best are re-minimized at ``n_steps``. Among polished results with defect
    below ``tie_tol`` the shortest duration wins, otherwise the lowest defect.
    Durations are kept inside ``(0, 20]``. With ``fix_T`` only the costates are
    searched.

    The defect need not reach zero; the best point found is returned as is.
    """
    if not theta_f > 0:
        raise DomainError(f"theta_f must be positive, got {theta_f}")
    dim = 3 if fix_T is not None else 4
    lo = np.array([-LAMBDA_BOX] * 3 + [T_BOX[0]])[:dim]
    hi = np.array([LAMBDA_BOX] * 3 + [T_BOX[1]])[:dim]
    starts = []
    if n_starts:
        with warnings.catch_warnings():
            # balance warning for counts that are not powers of two
            warnings.simplefilter("ignore", UserWarning)
            starts = list(qmc.scale(qmc.Sobol(dim, scramble=True, seed=seed).random(n_starts), lo, hi))
    if guess is not None:
        g = np.asarray(guess, dtype=float)[:dim]
        starts.insert(0, g)
    if not starts:
        raise DomainError("no starting points")
    T_max = None if fix_T is not None else T_BOX[1]

    coarse = _objective(theta_f, bounded, screen_steps, fix_T, T_max)
    screened = []
    diagnostics = []
    for x0 in starts:
        if coarse(x0) >= PENALTY:
            diagnostics.append({"start": np.asarray(x0).tolist(), "status": "start collapses"})
            continue
        r = simplex_minimize(coarse, x0, max_iter=max_iter)
        screened.append((r.fun, r.x))
    if not screened:
        raise ShootingError("every shooting start collapsed or diverged", diagnostics)
    screened.sort(key=lambda t: t[0])
    log.debug("screening best defects: %s", [f"{d:.3e}" for d, _ in screened[:n_polish]])

    fine = _objective(theta_f, bounded, n_steps, fix_T, T_max)
    polished = []
    for d0, x0 in screened[:n_polish]:
        r = simplex_minimize(fine, x0, max_iter=max_iter)
        x = r.x if r.fun <= fine(x0) else x0
        polished.append((min(r.fun, fine(x0)), x))

    def key(item):
        d, x = item
        T = fix_T if fix_T is not None else x[3]
        return (0, T) if d <= tie_tol else (1, d)

    polished.sort(key=key)
    _, best = polished[0]
    T = fix_T if fix_T is not None else float(best[3])
    sol = run_shot(best[:3], T, theta_f, bounded, n_steps)
    sol.n_starts = len(starts)
    sol.seed = seed
    return sol


def export_control(sol: OCSolution) -> SampledProtocol:
    """Angle protocol with rate ``u(sigma)``, at rest before 0 and after T.

    Located events (control jumps, the bounded switch-off and the kinks
    where the bounded law saturates) become interior breakpoints, so the
    rate spline never straddles a non-smooth point. The protocol's ``theta_f`` is the angle actually reached;
    the design target goes into the parameters.
    """
    sigma, u = [], []
    for k in range(sol.sigma.size):
        if sol.events[k] > 0:
            sigma.append(sol.sigma[k])
            u.append(sol.u_left[k])
        sigma.append(sol.sigma[k])
        u.append(sol.u[k])
    extra = {"target_theta_f": sol.theta_f, "defect": sol.defect}
    if sol.switch_off_sigma is not None:
        extra["switch_off_sigma"] = sol.switch_off_sigma
    kind = "oc-bounded" if sol.bounded else "oc-unbounded"
    return SampledProtocol(np.array(sigma), np.array(u), theta_f=None, kind=kind,
                           breakpoints=sol.event_sigmas, rest_at_ends=True, extra=extra)
