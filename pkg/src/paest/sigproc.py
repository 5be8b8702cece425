"""Sampled signals, fixed-step filtering, reproducible noise and the
windowed excitation / correlation diagnostics.

All continuous-time dynamics in the package are discretised with the
classical fourth-order Runge-Kutta scheme on a uniform grid. Windowed
averages use the trapezoidal rule on the same grid.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .matcore import DimensionError

log = logging.getLogger(__name__)

# Philox4x64-10 counter-based generator, via numpy
NOISE_BIT_GENERATOR = "Philox"


class RangeError(ValueError):
    """A requested time or window lies outside the sampled grid."""


class FilterError(ValueError):
    """A transfer function failed its stability checks."""


def rk4_step(f: Callable, t: float, x, h: float):
    """One classical Runge-Kutta step of ``x' = f(t, x)``."""
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_lti_matrices(A: np.ndarray, B: np.ndarray, h: float):
    """Matrices of one RK4 step of ``x' = A x + B u``.

    Returns ``(P, Q0, Qm, Q1)`` such that the RK4 update with input samples
    ``u0, um, u1`` at the start, midpoint and end of the step equals
    ``P x + Q0 u0 + Qm um + Q1 u1`` exactly (the scheme is linear).
    """
    n, m = B.shape

    def step(x, u0, um, u1):
        k1 = A @ x + B @ u0
        k2 = A @ (x + 0.5 * h * k1) + B @ um
        k3 = A @ (x + 0.5 * h * k2) + B @ um
        k4 = A @ (x + h * k3) + B @ u1
        return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    zx, zu, eu = np.zeros((n, m)), np.zeros((m, m)), np.eye(m)
    P = step(np.eye(n), np.zeros((m, n)), np.zeros((m, n)), np.zeros((m, n)))
    Q0 = step(zx, eu, zu, zu)
    Qm = step(zx, zu, eu, zu)
    Q1 = step(zx, zu, zu, eu)
    return P, Q0, Qm, Q1


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0 + k*h`` for ``k = 0 .. n_steps-1``."""

    t0: float
    h: float
    n_steps: int

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"grid step must be positive, got {self.h}")
        if self.n_steps < 1:
            raise ValueError(f"grid needs at least one sample, got {self.n_steps}")

    @classmethod
    def from_horizon(cls, t0: float, h: float, horizon: float) -> "TimeGrid":
        """Grid covering ``[t0, horizon]`` inclusive."""
        return cls(t0, h, int(round((horizon - t0) / h)) + 1)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.n_steps)

    @property
    def t_end(self) -> float:
        return self.t0 + self.h * (self.n_steps - 1)

    def index(self, t: float) -> int:
        """Index of grid sample `t`; raises RangeError off the grid."""
        k = int(round((t - self.t0) / self.h))
        if k < 0 or k >= self.n_steps or abs(self.t0 + k * self.h - t) > 1e-6 * self.h + 1e-12:
            raise RangeError(f"t={t} is not a sample of the grid [{self.t0}, {self.t_end}]")
        return k

    def steps(self, duration: float) -> int:
        return int(round(duration / self.h))


@dataclass(frozen=True, eq=False)
class SignalTrace:
    """Vector signal sampled on a TimeGrid; ``samples`` has shape (n_steps, dim)."""

    grid: TimeGrid
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] != self.grid.n_steps:
            raise DimensionError(
                f"expected {self.grid.n_steps} samples, got array of shape {s.shape}"
            )
        if not np.all(np.isfinite(s)):
            raise ValueError("trace contains non-finite samples")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def component(self, i: int) -> "SignalTrace":
        return SignalTrace(self.grid, self.samples[:, i])

    @classmethod
    def from_function(cls, grid: TimeGrid, fn: Callable) -> "SignalTrace":
        """Sample a vectorised ``fn(t)`` on the grid."""
        return cls(grid, np.asarray(fn(grid.times), dtype=float).T)

    def to_csv(self, path) -> None:
        write_csv(path, ["t"] + [f"x{i + 1}" for i in range(self.dim)],
                  np.column_stack([self.times, self.samples]))

    @classmethod
    def from_csv(cls, path) -> "SignalTrace":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        if not header or header[0] != "t":
            raise ValueError(f"{path}: first column must be 't'")
        t = body[:, 0]
        h = (t[-1] - t[0]) / (len(t) - 1) if len(t) > 1 else 1.0
        if len(t) > 1 and not np.allclose(np.diff(t), h, rtol=1e-9, atol=1e-12):
            raise ValueError(f"{path}: time column is not uniformly spaced")
        return cls(TimeGrid(float(t[0]), float(h), len(t)), body[:, 1:])


def format_float(x: float) -> str:
    return repr(float(x)) if math.isfinite(x) else str(x)


def write_csv(path, header: list[str], rows: np.ndarray) -> None:
    """Write a numeric table at full double precision, atomically."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.atleast_2d(rows):
            w.writerow([format_float(v) for v in row])
    tmp.replace(path)


class RationalFilter:
    """Stable SISO transfer function ``num(s)/den(s)`` in controllable form.

    Coefficients are in descending powers of ``s``. The denominator is made
    monic. Construction rejects non-Hurwitz denominators and numerators with
    right half-plane zeros; zeros on the imaginary axis (e.g. ``s/(ks+1)``)
    are accepted and listed in ``axis_zeros``.
    """

    def __init__(self, num, den):
        num = np.trim_zeros(np.atleast_1d(np.asarray(num, dtype=float)), "f")
        den = np.trim_zeros(np.atleast_1d(np.asarray(den, dtype=float)), "f")
        if den.size == 0:
            raise FilterError("denominator is identically zero")
        if num.size > den.size:
            raise FilterError("improper transfer function: deg(num) > deg(den)")
        num = num / den[0]
        den = den / den[0]
        poles = np.roots(den)
        if np.any(poles.real >= 0):
            raise FilterError(f"denominator is not Hurwitz, poles {poles}")
        zeros = np.roots(num) if num.size > 1 else np.array([])
        if np.any(zeros.real > 1e-12):
            raise FilterError(f"filter is not minimum phase, zeros {zeros}")
        self.axis_zeros = zeros[np.abs(zeros.real) <= 1e-12]
        if self.axis_zeros.size:
            log.info("filter has zeros on the imaginary axis: %s", self.axis_zeros)
        self.num = num
        self.den = den
        p = den.size - 1
        b = np.concatenate([np.zeros(p + 1 - num.size), num])
        self.A = np.zeros((p, p))
        if p:
            self.A[0, :] = -den[1:]
            self.A[1:, :-1] = np.eye(p - 1)
        self.B = np.zeros(p)
        if p:
            self.B[0] = 1.0
        self.D = float(b[0])
        self.C = b[1:] - b[0] * den[1:]
        self.state = np.zeros(p)
        self._h = None

    @property
    def order(self) -> int:
        return self.A.shape[0]

    def __repr__(self):
        return f"RationalFilter(num={self.num.tolist()}, den={self.den.tolist()})"

    def copy(self) -> "RationalFilter":
        return RationalFilter(self.num, self.den)

    def reset(self) -> None:
        self.state = np.zeros(self.order)

    def _matrices(self, h: float):
        if self._h != h:
            P, Q0, Qm, Q1 = rk4_lti_matrices(self.A, self.B[:, None], h)
            self._mats = (P, Q0[:, 0], Qm[:, 0], Q1[:, 0])
            self._h = h
        return self._mats

    def output(self, u: float) -> float:
        return float(self.C @ self.state) + self.D * u

    def step(self, u0: float, u1: float, h: float, um: float | None = None) -> float:
        """Advance the realisation over one step and return the new output.

        The input at the step midpoint defaults to ``(u0 + u1) / 2``.
        """
        P, Q0, Qm, Q1 = self._matrices(h)
        if um is None:
            um = 0.5 * (u0 + u1)
        self.state = P @ self.state + Q0 * u0 + Qm * um + Q1 * u1
        return self.output(u1)

    def response(self, omega: float) -> complex:
        """Frequency response at ``s = j*omega``."""
        s = 1j * omega
        return complex(np.polyval(self.num, s) / np.polyval(self.den, s))


def filter_apply(f: RationalFilter, x: SignalTrace) -> SignalTrace:
    """Filter a scalar trace from zero initial state.

    Midpoint input samples are the average of neighbouring grid samples.
    The filter instance is left untouched.
    """
    if x.dim != 1:
        raise DimensionError(f"filter_apply needs a scalar trace, got dim {x.dim}")
    u = x.samples[:, 0]
    h = x.grid.h
    y = np.empty_like(u)
    if f.order == 0:
        return SignalTrace(x.grid, f.D * u)
    P, Q0, Qm, Q1 = f.copy()._matrices(h)
    # fold the midpoint average into the endpoint gains
    G0 = Q0 + 0.5 * Qm
    G1 = Q1 + 0.5 * Qm
    state = np.zeros(f.order)
    states = np.empty((u.size, f.order))
    states[0] = state
    for k in range(u.size - 1):
        state = P @ state + G0 * u[k] + G1 * u[k + 1]
        states[k + 1] = state
    y = states @ f.C + f.D * u
    return SignalTrace(x.grid, y)


@dataclass(frozen=True)
class NoiseSpec:
    """Band-limited white noise: held Gaussian values with variance power/sample_time."""

    power: float
    sample_time: float
    seed: int

    def __post_init__(self):
        if self.power < 0:
            raise ValueError(f"noise power must be >= 0, got {self.power}")
        if not self.sample_time > 0:
            raise ValueError(f"noise sample time must be > 0, got {self.sample_time}")


@dataclass
class HeldNoise:
    """Piecewise-constant noise signal, right-continuous at hold boundaries."""

    spec: NoiseSpec
    t0: float
    values: np.ndarray = field(repr=False)

    @classmethod
    def generate(cls, spec: NoiseSpec, t0: float, t_end: float) -> "HeldNoise":
        count = int(math.floor((t_end - t0) / spec.sample_time + 1e-9)) + 2
        if spec.power == 0:
            return cls(spec, t0, np.zeros(count))
        rng = np.random.Generator(np.random.Philox(spec.seed))
        sigma = math.sqrt(spec.power / spec.sample_time)
        return cls(spec, t0, sigma * rng.standard_normal(count))

    def _idx(self, t):
        k = np.floor((np.asarray(t) - self.t0) / self.spec.sample_time + 1e-9).astype(int)
        return np.clip(k, 0, self.values.size - 1)

    def __call__(self, t):
        if isinstance(t, float):
            k = math.floor((t - self.t0) / self.spec.sample_time + 1e-9)
            return float(self.values[min(max(k, 0), self.values.size - 1)])
        return self.values[self._idx(t)]


def band_limited_noise(spec: NoiseSpec, grid: TimeGrid) -> SignalTrace:
    """Sample seeded band-limited white noise on `grid`."""
    noise = HeldNoise.generate(spec, grid.t0, grid.t_end)
    return SignalTrace(grid, noise(grid.times))


def _window_slice(grid: TimeGrid, t: float, window: float) -> tuple[int, int]:
    if not window > 0:
        raise RangeError(f"window must be positive, got {window}")
    k1 = grid.index(t)
    k0 = max(0, k1 - grid.steps(window))
    return k0, k1


def _windowed_mean_product(f: np.ndarray, g: np.ndarray, h: float, window: float) -> np.ndarray:
    prod = np.einsum("ki,kj->kij", f, g)
    if prod.shape[0] < 2:
        return np.zeros(prod.shape[1:])
    return np.trapezoid(prod, dx=h, axis=0) / window


def empirical_autocovariance(x: SignalTrace, t: float, window: float) -> np.ndarray:
    """``(1/window) * integral of x x^T`` over ``[max(t0, t-window), t]``."""
    k0, k1 = _window_slice(x.grid, t, window)
    s = x.samples[k0:k1 + 1]
    out = _windowed_mean_product(s, s, x.grid.h, window)
    return 0.5 * (out + out.T)


def cross_correlation(f: SignalTrace, g: SignalTrace, t: float, window: float) -> np.ndarray:
    """``(1/window) * integral of f g^T`` over ``[max(t0, t-window), t]``.

    Decay towards zero as the window grows indicates independence; a
    non-zero limit is the dependence constant.
    """
    if f.grid != g.grid:
        raise DimensionError("cross_correlation needs traces on a common grid")
    k0, k1 = _window_slice(f.grid, t, window)
    return _windowed_mean_product(f.samples[k0:k1 + 1], g.samples[k0:k1 + 1], f.grid.h, window)


def _sliding_means(prod: np.ndarray, h: float, window: float) -> np.ndarray:
    n = int(round(window / h))
    # cumulative trapezoid with a leading zero
    cum = np.zeros_like(prod)
    cum[1:] = np.cumsum(0.5 * h * (prod[1:] + prod[:-1]), axis=0)
    return (cum[n:] - cum[:-n]) / window


def sliding_window_means(x: SignalTrace, window: float) -> np.ndarray:
    """Trapezoidal window averages of ``x x^T`` for every full window.

    Row ``s`` covers ``[t_s, t_s + window]``; shape (n_windows, dim, dim).
    """
    s = x.samples
    return _sliding_means(np.einsum("ki,kj->kij", s, s), x.grid.h, window)


def sliding_cross_correlation(f: SignalTrace, g: SignalTrace, window: float) -> np.ndarray:
    """Window averages of ``f g^T`` for every full window, shape (n_windows, df, dg)."""
    if f.grid != g.grid:
        raise DimensionError("sliding_cross_correlation needs traces on a common grid")
    return _sliding_means(np.einsum("ki,kj->kij", f.samples, g.samples), f.grid.h, window)


def correlation_decay(f: SignalTrace, g: SignalTrace, window: float, factor: int = 4) -> tuple[float, float]:
    """RMS norm of the windowed cross-correlation at `window` and ``factor * window``.

    The RMS is taken over every window position in the record. For
    independent signals it falls with the window (like ``1/T`` for
    disjoint harmonics, ``1/sqrt(T)`` for white noise); for dependent ones
    it levels off at the dependence constant.
    """
    span = f.grid.t_end - f.grid.t0
    if span < factor * window + f.grid.h:
        raise RangeError(f"record of length {span} is shorter than {factor}*window")
    out = []
    for T in (window, factor * window):
        c = sliding_cross_correlation(f, g, T)
        out.append(float(np.sqrt(np.mean(np.sum(c * c, axis=(1, 2))))))
    return out[0], out[1]


def pe_bounds(x: SignalTrace, window: float) -> tuple[float, float]:
    """Empirical excitation bounds over all sliding windows of the trace.

    Returns ``(alpha_lower, alpha_upper)``: the smallest and largest
    eigenvalues seen across every window average. ``alpha_lower > 0``
    certifies excitation at this window length on the sampled record.
    """
    if not window > 0:
        raise RangeError(f"window must be positive, got {window}")
    duration = x.grid.t_end - x.grid.t0
    if duration < 2 * window - 1e-9:
        raise RangeError(f"trace of length {duration} is shorter than 2*window={2 * window}")
    means = sliding_window_means(x, window)
    eig = np.linalg.eigvalsh(0.5 * (means + np.swapaxes(means, 1, 2)))
    lower = float(eig[:, 0].min())
    upper = float(eig[:, -1].max())
    # round-off can push a singular average slightly negative
    return max(lower, 0.0), upper
