"""Nelder-Mead downhill simplex minimizer."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# reflection, expansion, contraction, shrink
ALPHA, GAMMA, RHO, SIGMA = 1.0, 2.0, 0.5, 0.5


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    converged: bool
    n_iter: int
    n_eval: int


def simplex_minimize(f: Callable[[np.ndarray], float], x0, tol: float = 1e-10, max_iter: int = 5000,
                     step: float | None = None) -> SimplexResult:
    """Minimize ``f`` without derivatives.

    The initial simplex puts one vertex at ``x0`` and the others along the
    coordinate axes at distance ``step`` (default ``0.1 * max(1, |x0|)``).
    Iteration stops once every vertex lies within ``tol`` of the best one.
    Exhausting ``max_iter`` returns the best vertex with ``converged=False``.
    Non-finite objective values are treated as +inf.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = x0.size
    if step is None:
        step = 0.1 * max(1.0, float(np.linalg.norm(x0)))

    n_eval = 0

    def fx(x):
        nonlocal n_eval
        n_eval += 1
        v = float(f(x))
        return v if np.isfinite(v) else np.inf

    f0 = fx(x0)
    if not np.isfinite(f0):
        raise ValueError("objective is not finite at the start point")

    pts = np.empty((n + 1, n))
    vals = np.empty(n + 1)
    pts[0], vals[0] = x0, f0
    for i in range(n):
        p = x0.copy()
        p[i] += step
        pts[i + 1], vals[i + 1] = p, fx(p)

    converged = False
    it = 0
    while it < max_iter:
        order = np.argsort(vals, kind="stable")
        pts, vals = pts[order], vals[order]
        if np.max(np.linalg.norm(pts[1:] - pts[0], axis=1)) <= tol:
            converged = True
            break
        it += 1

        centroid = pts[:-1].mean(axis=0)
        worst = pts[-1]
        xr = centroid + ALPHA * (centroid - worst)
        fr = fx(xr)
        if vals[0] <= fr < vals[-2]:
            pts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[0]:
            xe = centroid + GAMMA * (xr - centroid)
            fe = fx(xe)
            if fe < fr:
                pts[-1], vals[-1] = xe, fe
            else:
                pts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[-1]:
            xc = centroid + RHO * (xr - centroid)
            fc = fx(xc)
            if fc <= fr:
                pts[-1], vals[-1] = xc, fc
                continue
        else:
            xc = centroid + RHO * (worst - centroid)
            fc = fx(xc)
            if fc < vals[-1]:
                pts[-1], vals[-1] = xc, fc
                continue
        # shrink towards the best vertex
        for i in range(1, n + 1):
            pts[i] = pts[0] + SIGMA * (pts[i] - pts[0])
            vals[i] = fx(pts[i])

    best = int(np.argmin(vals))
    return SimplexResult(pts[best].copy(), float(vals[best]), converged, it, n_eval)
