"""Bounded scalar maximization: coarse grid, golden-section refinement, root polish."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy.optimize import brentq

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f: Callable[[float], float], a: float, b: float, tol: float = 1e-8,
                       max_iter: int = 500) -> tuple[float, float]:
    """Maximize a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def _safe(f):
    def g(x):
        try:
            v = f(x)
        except (FloatingPointError, np.linalg.LinAlgError, ZeroDivisionError, ValueError):
            return -np.inf
        return v if np.isfinite(v) else -np.inf
    return g


def maximize_bounded(f: Callable[[float], float], lo: float, hi: float, *,
                     grad: Callable[[float], float] | None = None, n_grid: int = 100,
                     tol: float = 1e-8) -> tuple[float, float, int]:
    """Global-ish maximization of ``f`` on ``[lo, hi]``.

    Evaluates ``f`` on an ``n_grid`` point grid, refines the best bracket by
    golden section to ``tol`` and, when ``grad`` is given, polishes the
    stationary point by bracketed root finding on the derivative.

    Returns ``(x, f(x), evaluations)``.
    """
    fs = _safe(f)
    grid = np.linspace(lo, hi, n_grid)
    vals = np.array([fs(x) for x in grid])
    if not np.any(np.isfinite(vals)):
        raise FloatingPointError("objective is not finite anywhere on the grid")
    i = int(np.argmax(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, n_grid - 1)]
    x, fx = golden_section_max(fs, a, b, tol=tol)
    evals = n_grid + int(math.log(tol / max(b - a, tol)) / math.log(INV_PHI)) + 2
    if vals[i] > fx:
        x, fx = grid[i], vals[i]
    if grad is not None:
        x, fx, extra = _polish(fs, grad, x, fx, lo, hi, tol)
        evals += extra
    return float(x), float(fx), evals


def _polish(f, grad, x, fx, lo, hi, tol):
    step = max(10 * tol, 1e-7)
    a, b = max(lo, x - step), min(hi, x + step)
    try:
        ga, gb = grad(a), grad(b)
    except (FloatingPointError, np.linalg.LinAlgError):
        return x, fx, 0
    if not (np.isfinite(ga) and np.isfinite(gb)) or ga * gb > 0:
        return x, fx, 2
    root = brentq(grad, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    fr = f(root)
    if fr >= fx - 1e-12 * max(1.0, abs(fx)):
        return root, fr, 3
    return x, fx, 3


def maximize_local(f, x0: float, lo: float, hi: float, *, grad=None, width: float = 0.1,
                   tol: float = 1e-8) -> tuple[float, float]:
    """Golden-section search restricted to ``[x0 - width, x0 + width]``."""
    fs = _safe(f)
    a, b = max(lo, x0 - width), min(hi, x0 + width)
    x, fx = golden_section_max(fs, a, b, tol=tol)
    f0 = fs(x0)
    if f0 > fx:
        x, fx = x0, f0
    if grad is not None:
        x, fx, _ = _polish(fs, grad, x, fx, lo, hi, tol)
    return float(x), float(fx)
