"""Independent reference implementations used as test oracles.

Nothing here imports the package under test.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def laplace_det(rows):
    """Determinant by cofactor expansion along the first row (exact for Fractions)."""
    n = len(rows)
    if n == 0:
        return 1
    if n == 1:
        return rows[0][0]
    total = 0
    for j in range(n):
        minor = [r[:j] + r[j + 1:] for r in rows[1:]]
        sign = -1 if j % 2 else 1
        total += sign * rows[0][j] * laplace_det(minor)
    return total


def laplace_adjugate(rows):
    """Adjugate from explicit cofactors, as nested lists."""
    n = len(rows)
    if n == 1:
        return [[1]]
    adj = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [r[:j] + r[j + 1:] for k, r in enumerate(rows) if k != i]
            adj[j][i] = (-1) ** (i + j) * laplace_det(minor)
    return adj


def exact_adjugate(a: np.ndarray) -> np.ndarray:
    """Adjugate of a float matrix computed in exact rational arithmetic."""
    rows = [[Fraction(float(v)) for v in r] for r in np.asarray(a, dtype=float)]
    return np.array([[float(v) for v in r] for r in laplace_adjugate(rows)])


def exact_det(a: np.ndarray) -> float:
    rows = [[Fraction(float(v)) for v in r] for r in np.asarray(a, dtype=float)]
    return float(laplace_det(rows))


def direct_window_average(g: np.ndarray, h: float, lags: int) -> np.ndarray:
    """Trapezoidal average of samples ``g[k - lags .. k]`` / (lags h), zero before the start.

    Straight per-sample quadrature, O(N * lags); no recursion.
    """
    N = g.shape[0]
    out = np.empty_like(g)
    T = lags * h
    for k in range(N):
        lo = max(0, k - lags)
        seg = g[lo:k + 1]
        if seg.shape[0] < 2:
            out[k] = 0.0
            continue
        out[k] = h * (0.5 * seg[0] + seg[1:-1].sum(axis=0) + 0.5 * seg[-1]) / T
    return out


def oscillator_transition(omega: float, t: float) -> np.ndarray:
    c, s = np.cos(omega * t), np.sin(omega * t)
    return np.array([[c, s / omega], [-omega * s, c]])


def first_order_lowpass_step(k: float, t: np.ndarray) -> np.ndarray:
    """Unit-step response of 1/(k s + 1)."""
    return 1.0 - np.exp(-t / k)


def first_order_lowpass_sine(k: float, w: float, t: np.ndarray) -> np.ndarray:
    """Response of 1/(k s + 1) to sin(w t) from rest: steady state plus transient."""
    g = 1.0 / np.sqrt(1.0 + (k * w) ** 2)
    ph = -np.arctan(k * w)
    steady = g * np.sin(w * t + ph)
    return steady - g * np.sin(ph) * np.exp(-t / k)
