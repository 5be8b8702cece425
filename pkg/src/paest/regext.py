"""Linear regression streams and the sliding-window regressor extension.

A stream carries a measured regressor ``phi`` (n-vector) and regressand
``z`` (scalar) related by ``z = phi^T theta + w``. The window extension
turns it into ``Y = Phi theta + W`` where ``Y`` and ``Phi`` are running
averages of ``phi z`` and ``phi phi^T`` over the last ``T`` seconds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .matcore import DimensionError
from .sigproc import RationalFilter, SignalTrace, cross_correlation, filter_apply

log = logging.getLogger(__name__)

LRE_IDENTITY_TOL = 1e-9


class ConfigurationError(ValueError):
    """Inconsistent window, grid or dimension settings."""


class DiagnosticUnavailable(RuntimeError):
    """A diagnostic needs ground-truth data the stream does not carry."""


@dataclass(frozen=True, eq=False)
class LreStream:
    """Measured regression ``z(t) = phi(t)^T theta + w(t)`` on a common grid.

    `theta` and `w` are optional ground truth used only by diagnostics and
    error metrics. When both are given the identity is checked sample by
    sample.
    """

    phi: SignalTrace
    z: SignalTrace
    theta: np.ndarray | None = None
    w: SignalTrace | None = None

    def __post_init__(self):
        if self.z.dim != 1:
            raise DimensionError(f"regressand must be scalar, got dim {self.z.dim}")
        if self.phi.grid != self.z.grid:
            raise DimensionError("regressor and regressand are on different grids")
        if self.w is not None and self.w.grid != self.phi.grid:
            raise DimensionError("perturbation trace is on a different grid")
        if self.theta is not None:
            theta = np.asarray(self.theta, dtype=float).reshape(-1)
            if theta.size != self.n:
                raise DimensionError(f"theta has length {theta.size}, regressor has dim {self.n}")
            object.__setattr__(self, "theta", theta)
            if self.w is not None:
                resid = self.z.samples[:, 0] - self.phi.samples @ theta - self.w.samples[:, 0]
                worst = float(np.max(np.abs(resid)))
                if worst > LRE_IDENTITY_TOL:
                    raise ValueError(f"z != phi^T theta + w: worst mismatch {worst:.3e}")

    @property
    def n(self) -> int:
        return self.phi.dim

    @property
    def grid(self):
        return self.phi.grid


class WindowState:
    """Running window averages ``Y`` and ``Phi`` of the extension.

    Advances by one grid step per `step` call. The ring buffer holds the
    last ``N + 1`` raw integrand samples, ``N = round(T / h)``; ``T`` is
    snapped to ``N * h``. Each step integrates the window dynamics with the
    delayed integrand as a known forcing. Only grid samples are stored, so
    the half-step forcing is the mean of the two neighbouring samples, and
    the update reduces to a trapezoidal increment. Integrand values before
    ``t0`` are zero.
    """

    def __init__(self, n: int, window: float, h: float, t0: float = 0.0,
                 recompute_every: int = 10**6):
        if n < 1:
            raise ConfigurationError(f"regressor dimension must be >= 1, got {n}")
        if not h > 0:
            raise ConfigurationError(f"step must be positive, got {h}")
        lags = int(round(window / h))
        if lags < 1:
            raise ConfigurationError(f"window {window} is shorter than one step {h}")
        if abs(lags * h - window) > 1e-9 * max(window, 1.0):
            log.warning("window %.12g snapped to %.12g (%d steps of %g)", window, lags * h, lags, h)
            self.snapped = True
        else:
            self.snapped = False
        self.n = n
        self.h = h
        self.lags = lags
        self.window = lags * h
        self.requested_window = window
        self.t0 = t0
        self.recompute_every = recompute_every
        self.Y = np.zeros(n)
        self.Phi = np.zeros((n, n))
        self._gy = np.zeros((lags + 1, n))
        self._gphi = np.zeros((lags + 1, n, n))
        self.k = -1  # index of newest stored sample
        self._scale = h / (2.0 * self.window)

    @property
    def t(self) -> float:
        return self.t0 + self.k * self.h

    def step(self, phi, z: float) -> "WindowState":
        """Push the integrand sample at the next grid time and update Y, Phi."""
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (self.n,):
            raise DimensionError(f"expected regressor of shape ({self.n},), got {phi.shape}")
        gy = phi * z
        gphi = np.outer(phi, phi)
        cap = self.lags + 1
        k_new = self.k + 1
        slot = k_new % cap
        if self.k >= 0:
            prev = self.k % cap
            dy = self._gy[prev] + gy
            dphi = self._gphi[prev] + gphi
            if self.k >= self.lags:
                # delayed segment [t_{k-N}, t_{k+1-N}]; slot holds sample k-N
                nxt = (self.k + 1 - self.lags) % cap
                dy = dy - self._gy[slot] - self._gy[nxt]
                dphi = dphi - self._gphi[slot] - self._gphi[nxt]
            self.Y = self.Y + self._scale * dy
            self.Phi = self.Phi + self._scale * dphi
        self._gy[slot] = gy
        self._gphi[slot] = gphi
        self.k = k_new
        if self.k > 0 and self.k % self.recompute_every == 0:
            self.recompute()
        return self

    def recompute(self) -> None:
        """Rebuild Y and Phi from the buffer, discarding accumulated drift."""
        cap = self.lags + 1
        count = min(self.k + 1, cap)
        order = [(self.k - j) % cap for j in range(count - 1, -1, -1)]
        gy = self._gy[order]
        gphi = self._gphi[order]
        self.Y = np.trapezoid(gy, dx=self.h, axis=0) / self.window
        self.Phi = np.trapezoid(gphi, dx=self.h, axis=0) / self.window


def window_step(state: WindowState, phi, z: float) -> WindowState:
    """Advance `state` by one grid step with the new sample (phi, z)."""
    return state.step(phi, z)


def window_extension(lre: LreStream, window: float, **kw) -> tuple[np.ndarray, np.ndarray]:
    """Run the window extension over a whole stream.

    Returns arrays ``Y`` of shape (n_steps, n) and ``Phi`` of shape
    (n_steps, n, n) holding the state after each sample.
    """
    st = WindowState(lre.n, window, lre.grid.h, lre.grid.t0, **kw)
    phi = lre.phi.samples
    z = lre.z.samples[:, 0]
    Y = np.empty((lre.grid.n_steps, lre.n))
    Phi = np.empty((lre.grid.n_steps, lre.n, lre.n))
    for k in range(lre.grid.n_steps):
        st.step(phi[k], z[k])
        Y[k] = st.Y
        Phi[k] = st.Phi
    return Y, Phi


def extension_matrix(n: int) -> np.ndarray:
    """``D = [I_n; -I_n]``, mapping theta to the extended parameter vector."""
    return np.vstack([np.eye(n), -np.eye(n)])


def extend_regressor(lre: LreStream, f: RationalFilter) -> LreStream:
    """Doubled regression ``z - W[z] = [phi; W[phi]]^T (D theta) + (w - W[w])``.

    Each regressor component is filtered independently by `f` from zero
    initial state.
    """
    grid = lre.grid
    phi_f = np.column_stack([filter_apply(f, lre.phi.component(i)).samples[:, 0]
                             for i in range(lre.n)])
    phi_e = SignalTrace(grid, np.hstack([lre.phi.samples, phi_f]))
    z_e = SignalTrace(grid, lre.z.samples[:, 0] - filter_apply(f, lre.z).samples[:, 0])
    theta_e = None if lre.theta is None else extension_matrix(lre.n) @ lre.theta
    w_e = None
    if lre.w is not None:
        w_e = SignalTrace(grid, lre.w.samples[:, 0] - filter_apply(f, lre.w).samples[:, 0])
    return LreStream(phi_e, z_e, theta_e, w_e)


def perturbation_split(lre: LreStream, ann, t: float, window: float) -> tuple[np.ndarray, np.ndarray]:
    """Split the windowed perturbation ``W(t)`` into its L1 and L2 projections.

    Diagnostic only: needs the stream's ground-truth perturbation trace.
    """
    if lre.w is None:
        raise DiagnosticUnavailable("stream carries no perturbation trace")
    W = cross_correlation(lre.phi, lre.w, t, window)[:, 0]
    W1 = ann.L1 @ (ann.L1.T @ W)
    W2 = ann.L2 @ (ann.L2.T @ W)
    return W1, W2
