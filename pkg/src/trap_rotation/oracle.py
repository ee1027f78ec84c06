"""Split-step Schroedinger propagation in the co-rotating frame.

Units: hbar = m = omega0 = 1, so lengths are in oscillator lengths and
energies in hbar*omega0. The Hamiltonian is ``p^2/2 + w2(sigma) s^2/2`` with
``w2 = 1 - dtheta^2``. Nothing here reuses the Ermakov machinery except
where a check explicitly compares against it.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .core import AngleProtocol, DomainError, IntegrationError, effective_w2
from .ermakov import integrate_ermakov

DEFAULT_N = 2048
DEFAULT_L = 24.0
NORM_TOL = 1e-10
EDGE_TOL = 1e-8
MODE_TOL = 1e-8
EDGE_POINTS = 4


class GridTooCoarseError(DomainError):
    """The grid cannot represent the requested state."""


class LeakageError(IntegrationError):
    """Amplitude reached the edges of the grid."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid ``s_j = -L/2 + j L / N``."""

    N: int = DEFAULT_N
    L: float = DEFAULT_L

    def __post_init__(self):
        if self.N < 16 or self.N % 2:
            raise DomainError("N must be an even integer >= 16")
        if not self.L > 0:
            raise DomainError("L must be positive")

    @property
    def ds(self) -> float:
        return self.L / self.N

    @property
    def s(self) -> np.ndarray:
        return -0.5 * self.L + self.ds * np.arange(self.N)

    @property
    def p(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.N, d=self.ds)


@dataclass
class WaveState:
    grid: Grid
    psi: np.ndarray = field(repr=False)

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.grid.ds)

    def edge_amplitude(self) -> float:
        a = np.abs(self.psi)
        return float(max(a[:EDGE_POINTS].max(), a[-EDGE_POINTS:].max()))

    def overlap(self, other: "WaveState") -> complex:
        return complex(np.sum(np.conj(other.psi) * self.psi) * self.grid.ds)

    def fidelity(self, target: "WaveState") -> float:
        """``|<target|psi>|^2``."""
        return abs(self.overlap(target)) ** 2

    def write_snapshot(self, path) -> None:
        """Binary layout (little-endian): int64 N, float64 L, then N pairs (re, im) of float64."""
        with open(path, "wb") as fh:
            fh.write(struct.pack("<qd", self.grid.N, self.grid.L))
            inter = np.empty(2 * self.grid.N, dtype="<f8")
            inter[0::2] = self.psi.real
            inter[1::2] = self.psi.imag
            fh.write(inter.tobytes())

    @classmethod
    def read_snapshot(cls, path) -> "WaveState":
        with open(path, "rb") as fh:
            N, L = struct.unpack("<qd", fh.read(16))
            data = np.frombuffer(fh.read(), dtype="<f8")
        if data.size != 2 * N:
            raise DomainError(f"snapshot holds {data.size} doubles, expected {2 * N}")
        return cls(Grid(int(N), float(L)), data[0::2] + 1j * data[1::2])


def hermite_functions(n_max: int, x: np.ndarray) -> np.ndarray:
    """Normalized oscillator eigenfunctions ``Phi_0..Phi_n_max`` by the stable three-term recurrence."""
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1, x.size))
    out[0] = np.pi**-0.25 * np.exp(-0.5 * x**2)
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(2, n_max + 1):
        out[n] = math.sqrt(2.0 / n) * x * out[n - 1] - math.sqrt((n - 1) / n) * out[n - 2]
    return out


def _resolved(state: WaveState, what: str) -> WaveState:
    err = abs(state.norm - 1.0)
    if err > MODE_TOL or state.edge_amplitude() > EDGE_TOL:
        raise GridTooCoarseError(f"{what} not resolved on N={state.grid.N}, L={state.grid.L} (norm error {err:.2g})")
    return state


def build_mode(n: int, b: float, bdot: float, grid: Grid | None = None, phase: float = 0.0) -> WaveState:
    """Invariant mode ``exp(i bdot s^2 / (2b)) b^(-1/2) Phi_n(s/b)`` times ``exp(i phase)``."""
    if n < 0:
        raise DomainError("mode index must be >= 0")
    if not b > 0:
        raise DomainError("b must be positive")
    grid = grid or Grid()
    s = grid.s
    phi = hermite_functions(n, s / b)[n] / math.sqrt(b)
    psi = phi * np.exp(1j * (bdot * s**2 / (2 * b) + phase))
    return _resolved(WaveState(grid, psi.astype(complex)), f"mode n={n}, b={b:.3g}")


def ground_state(grid: Grid | None = None) -> WaveState:
    return build_mode(0, 1.0, 0.0, grid)


def coherent_state(alpha: complex, grid: Grid | None = None, scale: float = 1.0) -> WaveState:
    """``scale^(-1/2) <s/scale|alpha>`` with the oscillator coherent state ``|alpha>``."""
    grid = grid or Grid()
    x = grid.s / scale
    a = complex(alpha)
    log = -0.5 * x**2 + math.sqrt(2.0) * a * x - 0.5 * a * a - 0.5 * abs(a) ** 2
    psi = np.pi**-0.25 * np.exp(log) / math.sqrt(scale)
    return _resolved(WaveState(grid, psi), f"coherent state alpha={a:.3g}")


def squeezed_coherent_state(alpha_tilde: complex, gamma: float, grid: Grid | None = None) -> WaveState:
    """``S(r) D(alpha_tilde)|0>`` with ``r = -ln gamma``: a coherent state stretched by gamma in s."""
    return coherent_state(alpha_tilde, grid, scale=gamma)


@dataclass
class Observables:
    energy: float
    mean_s: float
    mean_p: float
    width_s: float
    width_p: float
    norm: float


def measure(state: WaveState, w2: float = 1.0) -> Observables:
    """Energy in a trap of squared frequency ``w2`` and the position/momentum widths.

    Position moments by quadrature on the grid, momentum moments spectrally.
    """
    g = state.grid
    rho = np.abs(state.psi) ** 2 * g.ds
    norm = float(rho.sum())
    s = g.s
    ms = float(np.sum(rho * s)) / norm
    s2 = float(np.sum(rho * s**2)) / norm
    phik = np.fft.fft(state.psi)
    pk = np.abs(phik) ** 2
    pk /= pk.sum()
    p = g.p
    mp = float(np.sum(pk * p))
    p2 = float(np.sum(pk * p**2))
    energy = 0.5 * p2 + 0.5 * w2 * s2
    return Observables(energy, ms, mp, math.sqrt(max(s2 - ms**2, 0.0)), math.sqrt(max(p2 - mp**2, 0.0)), norm)


@dataclass
class WaveTrajectory:
    sigma: np.ndarray
    energy: np.ndarray
    width_s: np.ndarray
    width_p: np.ndarray
    norm: np.ndarray
    final: WaveState = field(repr=False)
    dt: float = 0.0
    snapshots: list = field(default_factory=list, repr=False)

    def write_csv(self, path) -> None:
        """Columns sigma, energy, width_s, width_p, norm (12 significant digits)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sigma", "energy", "width_s", "width_p", "norm"])
            for row in zip(self.sigma, self.energy, self.width_s, self.width_p, self.norm):
                w.writerow([f"{x:.12g}" for x in row])


def default_dt(w2_max_abs: float) -> float:
    return 0.001 / max(1.0, w2_max_abs)


def _segment_grid(T: float, breakpoints, dt: float) -> np.ndarray:
    edges = sorted({0.0, T, *[b for b in breakpoints if 0 < b < T]})
    parts = [np.array([0.0])]
    for a, b in zip(edges[:-1], edges[1:]):
        m = max(1, math.ceil((b - a) / dt - 1e-9))
        parts.append(np.linspace(a, b, m + 1)[1:])
    return np.concatenate(parts)


def propagate(psi0: WaveState, p: AngleProtocol, dt: float | None = None, record_every: int = 100,
              keep_snapshots: bool = False) -> WaveTrajectory:
    """Strang splitting (half potential, kinetic, half potential) over [0, T].

    Steps are uniform inside each smooth piece of the protocol and never
    straddle a breakpoint; ``w2`` is taken at each step's midpoint. The
    default ``dt`` is ``0.001 / max(1, max|w2|)``. Observables are recorded
    every ``record_every`` steps and at T, with ``w2`` the physical value at
    that time. Raises :class:`LeakageError` when the edge amplitude exceeds
    1e-8 and :class:`IntegrationError` when the norm drifts by more than 1e-10.
    """
    w2 = effective_w2(p)
    probe = np.linspace(0.0, p.T, 4001)
    w2_max = float(np.max(np.abs(w2.inner(probe))))
    if dt is None:
        dt = default_dt(w2_max)
    if not dt > 0:
        raise DomainError("dt must be positive")
    nodes = _segment_grid(p.T, p.breakpoints, dt)
    steps = np.diff(nodes)
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    w2_mid = w2.inner(mids)
    g = psi0.grid
    s2 = g.s**2
    kin = 0.5 * g.p**2
    psi = psi0.psi.astype(complex).copy()
    norm0 = psi0.norm

    rec_s, rec_e, rec_ws, rec_wp, rec_n, snaps = [], [], [], [], [], []

    def record(sig, psi):
        st = WaveState(g, psi)
        if st.edge_amplitude() > EDGE_TOL:
            raise LeakageError(f"edge amplitude {st.edge_amplitude():.2g} at sigma={sig:.6g}")
        obs = measure(st, float(w2(sig)))
        if abs(obs.norm - norm0) > NORM_TOL:
            raise IntegrationError(f"norm drifted by {obs.norm - norm0:.2g} at sigma={sig:.6g}")
        rec_s.append(sig)
        rec_e.append(obs.energy)
        rec_ws.append(obs.width_s)
        rec_wp.append(obs.width_p)
        rec_n.append(obs.norm)
        if keep_snapshots:
            snaps.append(WaveState(g, psi.copy()))

    record(0.0, psi)
    # cache phase factors for runs of equal step length (most protocols)
    last_h = None
    for i, (h, wm) in enumerate(zip(steps, w2_mid)):
        if h != last_h:
            kprop = np.exp(-1j * kin * h)
            last_h = h
        half = np.exp(-0.25j * wm * s2 * h)
        psi = half * np.fft.ifft(kprop * np.fft.fft(half * psi))
        if (i + 1) % record_every == 0 or i == steps.size - 1:
            record(float(nodes[i + 1]), psi)
    return WaveTrajectory(np.array(rec_s), np.array(rec_e), np.array(rec_ws), np.array(rec_wp),
                          np.array(rec_n), WaveState(g, psi), float(dt), snaps)


def phase_integral(p: AngleProtocol) -> float:
    """``g = int_0^T dsigma / b^2`` by Simpson's rule on the Ermakov trajectory."""
    tr = integrate_ermakov(p)
    return float(simpson(1.0 / tr.b**2, x=tr.sigma))


@dataclass
class CoherentReport:
    alpha: complex
    alpha_tilde: complex
    gamma: float
    r: float
    g: float
    fidelity: float
    width_s: float
    width_p: float
    final: WaveState = field(repr=False)


def coherent_evolution_check(alpha: complex, p: AngleProtocol, gamma: float, grid: Grid | None = None,
                             dt: float | None = None) -> CoherentReport:
    """Propagate ``|alpha>`` through ``p`` and compare with ``S(r) D(alpha e^(-i g))|0>``, ``r = -ln gamma``."""
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    grid = grid or Grid()
    g = phase_integral(p)
    alpha_t = complex(alpha) * np.exp(-1j * g)
    traj = propagate(coherent_state(alpha, grid), p, dt, record_every=10**9)
    target = squeezed_coherent_state(alpha_t, gamma, grid)
    obs = measure(traj.final)
    return CoherentReport(complex(alpha), alpha_t, gamma, -math.log(gamma), g, traj.final.fidelity(target),
                          obs.width_s, obs.width_p, traj.final)
