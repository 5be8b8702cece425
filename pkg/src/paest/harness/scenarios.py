"""Plant models that produce measured regression streams.

Each linear scenario is one joint LTI system whose state stacks the plant
and every filter bank the parametrisation needs. Exogenous signals
(reference, disturbance, measurement noise) are evaluated exactly at the
RK4 stage times, so the measured regressor, regressand and the true
perturbation satisfy ``z = phi^T theta + w`` to round-off on the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..gpebo import AffineSystem
from ..regext import LreStream
from ..sigproc import HeldNoise, NoiseSpec, RationalFilter, SignalTrace, TimeGrid, rk4_lti_matrices


@dataclass(frozen=True)
class Harmonic:
    """``offset + sum_i amp_i sin(freq_i t + phase_i)``; freq in rad/s."""

    amplitudes: tuple = ()
    frequencies: tuple = ()
    phases: tuple = ()
    offset: float = 0.0

    def __post_init__(self):
        amps = tuple(float(a) for a in self.amplitudes)
        freqs = tuple(float(w) for w in self.frequencies)
        phases = tuple(float(p) for p in self.phases) or (0.0,) * len(amps)
        if not len(amps) == len(freqs) == len(phases):
            raise ValueError("amplitudes, frequencies and phases must have equal length")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "phases", phases)

    def __call__(self, t):
        if isinstance(t, float):
            return self.offset + sum(a * math.sin(w * t + p)
                                     for a, w, p in zip(self.amplitudes, self.frequencies, self.phases))
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, float(self.offset))
        for a, w, p in zip(self.amplitudes, self.frequencies, self.phases):
            out += a * np.sin(w * t + p)
        return out


@dataclass
class Exogenous:
    """Deterministic harmonics plus optional held band-limited noise."""

    harmonic: Harmonic = field(default_factory=Harmonic)
    noise: HeldNoise | None = None

    def __call__(self, t):
        v = self.harmonic(t)
        if self.noise is not None:
            v = v + self.noise(t)
        return v


def make_exogenous(harmonic: Harmonic, noise: NoiseSpec | None, t0: float, t_end: float) -> Exogenous:
    held = None
    if noise is not None and noise.power > 0:
        held = HeldNoise.generate(noise, t0, t_end)
    return Exogenous(harmonic, held)


@dataclass
class LinearScenario:
    """Joint LTI model ``s' = A s + B e`` with linear read-outs.

    ``phi = Cphi s + Dphi e``, ``z = Cz s + Dz e``, ``w = Cw s + Dw e``.
    `inputs` lists the exogenous signals making up ``e``.
    """

    A: np.ndarray
    B: np.ndarray
    Cphi: np.ndarray
    Dphi: np.ndarray
    Cz: np.ndarray
    Dz: np.ndarray
    Cw: np.ndarray
    Dw: np.ndarray
    theta: np.ndarray
    inputs: Sequence[Callable]

    def exogenous(self, t: np.ndarray) -> np.ndarray:
        return np.column_stack([np.broadcast_to(np.asarray(f(t), dtype=float), t.shape)
                                for f in self.inputs])

    def states(self, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
        """Joint state and exogenous samples on the grid (zero initial state)."""
        h = grid.h
        t = grid.times
        e = self.exogenous(t)
        em = self.exogenous(t[:-1] + 0.5 * h)
        P, Q0, Qm, Q1 = rk4_lti_matrices(self.A, self.B, h)
        forcing = e[:-1] @ Q0.T + em @ Qm.T + e[1:] @ Q1.T
        s = np.zeros((grid.n_steps, self.A.shape[0]))
        x = s[0].copy()
        for k in range(grid.n_steps - 1):
            x = P @ x + forcing[k]
            s[k + 1] = x
        return s, e

    def simulate(self, grid: TimeGrid) -> LreStream:
        s, e = self.states(grid)
        phi = s @ self.Cphi.T + e @ self.Dphi.T
        z = s @ self.Cz + e @ self.Dz
        w = s @ self.Cw + e @ self.Dw
        return LreStream(SignalTrace(grid, phi), SignalTrace(grid, z), self.theta, SignalTrace(grid, w))


def first_order_plant(a: float, b: float, k: float, reference: Callable, disturbance: Callable,
                      noise: Callable, feedback_gain: float = 0.0) -> LinearScenario:
    """``x' = a x + b u + f``, ``y = x + eta`` with ``phi = [F[y], F[u]]``, ``F = 1/(ks+1)``.

    ``u = r - K y``; with ``K = 0`` the input is pure feedforward. The
    regressand is ``s/(ks+1)[y]`` and ``theta = [a, b]``. State order is
    ``[x, F[y], F[u], F[f], F[eta]]``, exogenous order ``[r, f, eta]``.
    """
    if not k > 0:
        raise ValueError(f"filter time constant must be positive, got {k}")
    K = feedback_gain
    c = 1.0 / k
    A = np.array([
        [a - b * K, 0, 0, 0, 0],
        [c, -c, 0, 0, 0],
        [-K * c, 0, -c, 0, 0],
        [0, 0, 0, -c, 0],
        [0, 0, 0, 0, -c],
    ], dtype=float)
    B = np.array([
        [b, 1, -b * K],
        [0, 0, c],
        [c, 0, -K * c],
        [0, c, 0],
        [0, 0, c],
    ], dtype=float)
    Cphi = np.array([[0, 1, 0, 0, 0], [0, 0, 1, 0, 0]], dtype=float)
    Dphi = np.zeros((2, 3))
    Cz = np.array([c, -c, 0, 0, 0])
    Dz = np.array([0, 0, c])
    Cw = np.array([0, 0, 0, 1, -c - a])
    Dw = np.array([0, 0, c])
    return LinearScenario(A, B, Cphi, Dphi, Cz, Dz, Cw, Dw, np.array([a, b], dtype=float),
                          [reference, disturbance, noise])


def _companion(den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    f = RationalFilter([1.0], den)
    return f.A, f.B


def closed_loop_plant(num, den, delta, reference: Callable, disturbance: Callable,
                      noise: Callable) -> LinearScenario:
    """``y = Z/R[u] + f``, ``y_meas = y + eta`` with order-p filter bank ``1/delta``.

    `den` lists the monic ``R`` in descending powers (leading 1 included),
    `num` the ``p`` coefficients of ``Z`` (degree p-1, leading zeros
    allowed). ``phi = [-lambda/delta[y_meas], lambda/delta[u]]`` with
    ``lambda = [s^(p-1) .. 1]``, ``z = s^p/delta[y_meas]`` and
    ``theta = [a_(p-1) .. a_0, b_(p-1) .. b_0]``. Exogenous order is
    ``[u, f, eta]``.
    """
    den = np.asarray(den, dtype=float)
    delta = np.asarray(delta, dtype=float)
    p = den.size - 1
    if den[0] != 1.0 or delta.size != p + 1 or delta[0] != 1.0:
        raise ValueError("R and delta must be monic of equal degree")
    num = np.asarray(num, dtype=float)
    if num.size > p:
        raise ValueError(f"Z must have at most {p} coefficients for a strictly proper plant")
    bz = np.concatenate([np.zeros(p - num.size), num])
    Ap, Bp = _companion(den)
    # controllable form output weights: state i carries s^(p-1-i)/R[u]
    Cp = bz
    Ad, Bd = _companion(delta)
    d = delta[1:]
    a = den[1:]
    Z = np.zeros((p, p))
    A = np.block([
        [Ap, Z, Z, Z],
        [np.outer(Bd, Cp), Ad, Z, Z],
        [Z, Z, Ad, Z],
        [Z, Z, Z, Ad],
    ])
    col = lambda v: v.reshape(p, 1)
    zc = np.zeros((p, 1))
    B = np.block([
        [col(Bp), zc, zc],
        [zc, col(Bd), col(Bd)],
        [col(Bd), zc, zc],
        [zc, col(Bd), col(Bd)],
    ])
    zr = np.zeros(p)
    Cphi = np.vstack([np.hstack([Z, -np.eye(p), Z, Z]), np.hstack([Z, Z, np.eye(p), Z])])
    Dphi = np.zeros((2 * p, 3))
    # s^p/delta[v] = v - d . zeta_v and y_meas = Cp x + f + eta
    Cz = np.concatenate([Cp, -d, zr, zr])
    Dz = np.array([0.0, 1.0, 1.0])
    # R/delta[v] = v + (a - d) . zeta_v applied to v = f + eta
    Cw = np.concatenate([zr, zr, zr, a - d])
    Dw = np.array([0.0, 1.0, 1.0])
    theta = np.concatenate([a, bz])
    return LinearScenario(A, B, Cphi, Dphi, Cz, Dz, Cw, Dw, theta, [reference, disturbance, noise])


def harmonic_oscillator(omega: float, xi0, u: Callable, noise: Callable,
                        phi_cap: float = 1e6) -> AffineSystem:
    """``x1' = x2``, ``x2' = -omega^2 x1 + u``, ``y = x1`` with output noise."""
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    A0 = np.array([[0.0, 1.0], [-omega * omega, 0.0]])
    C0 = np.array([1.0, 0.0])
    return AffineSystem(
        A=lambda _u, _t: A0,
        b=lambda u_, _t: np.array([0.0, u_]),
        C=lambda _u, _t: C0,
        u=u,
        x0=np.asarray(xi0, dtype=float),
        noise=noise,
        phi_cap=phi_cap,
    )
