"""Perturbation-annihilating estimation laws.

Three laws act on the window-extended regression ``Y = Phi theta + W``:

* law A: ``theta' = -gamma adj(Phi) (Phi theta - Y)``, for regressors whose
  every element is independent of the perturbation;
* law B: first removes the perturbation component along dependent regressor
  directions using a known annihilator ``H`` with ``H^T theta = 0``;
* law C: does the same on the doubled regression built by
  :func:`paest.regext.extend_regressor`, where the annihilator ``He`` exists
  by construction.

Each ``law_*_step`` integrates one RK4 step with ``Y`` and ``Phi`` held.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .matcore import DimensionError, adjugate, determinant, numeric_rank
from .regext import ConfigurationError, LreStream, WindowState, extension_matrix
from .sigproc import empirical_autocovariance, rk4_step, write_csv

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6
RANK_TOL = 1e-6
LAWS = ("A", "B", "C", "GD")


class AssumptionError(RuntimeError):
    """A checkable precondition of an estimation law failed."""


class DivergenceError(RuntimeError):
    """The parameter estimate left the divergence guard."""


def _col(a, rows: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros((rows, 0))
    if a.ndim == 1:
        if a.size % rows:
            raise DimensionError(f"{a.size} entries do not fill a matrix with {rows} rows")
        return a.reshape(rows, -1)
    return a


@dataclass
class AnnihilatorSet:
    """Split of the regressor space into perturbation-free and dependent parts.

    ``L1`` (n x m) spans the directions independent of the perturbation,
    ``L2`` (n x (n-m)) the dependent ones, with ``L1 L1^T + L2 L2^T = I``.
    ``H`` is the annihilator of theta used by law B; ``He`` the annihilator
    of the extension matrix used by law C.
    """

    L1: np.ndarray
    L2: np.ndarray
    H: np.ndarray | None = None
    He: np.ndarray | None = None

    def __post_init__(self):
        self.L1 = _col(self.L1, self._rows())
        n = self.L1.shape[0]
        self.L2 = _col(self.L2, n)
        if self.L2.shape[0] != n:
            raise DimensionError("L1 and L2 have different row counts")
        m = self.L1.shape[1]
        if not 0 < m <= n or self.L2.shape[1] != n - m:
            raise DimensionError(f"need 0 < m <= n and L2 of width n-m; got L1 {self.L1.shape}, L2 {self.L2.shape}")
        resid = self.L1 @ self.L1.T + self.L2 @ self.L2.T - np.eye(n)
        if np.max(np.abs(resid)) > 1e-12:
            raise ValueError("L1 L1^T + L2 L2^T must equal the identity")
        if self.H is not None:
            self.H = _col(self.H, n)
            if self.H.shape != (n, n - m):
                raise DimensionError(f"H must be {n}x{n - m}, got {self.H.shape}")
        if self.He is not None:
            self.He = _col(self.He, 2 * n)
            if self.He.shape != (2 * n, 2 * (n - m)):
                raise DimensionError(f"He must be {2 * n}x{2 * (n - m)}, got {self.He.shape}")
            if np.any(self.He.T @ extension_matrix(n) != 0.0):
                raise ValueError("He^T D must vanish")

    def _rows(self) -> int:
        a = np.asarray(self.L1, dtype=float)
        return a.shape[0]

    @classmethod
    def from_selection(cls, n: int, independent, H=None, He=None) -> "AnnihilatorSet":
        """Coordinate split: `independent` lists 0-based regressor indices."""
        independent = sorted(int(i) for i in independent)
        dependent = [i for i in range(n) if i not in independent]
        eye = np.eye(n)
        return cls(eye[:, independent], eye[:, dependent], H=H, He=He)

    @property
    def n(self) -> int:
        return self.L1.shape[0]

    @property
    def m(self) -> int:
        return self.L1.shape[1]

    @property
    def L1e(self) -> np.ndarray:
        return np.kron(np.eye(2), self.L1)

    @property
    def L2e(self) -> np.ndarray:
        return np.kron(np.eye(2), self.L2)


def build_he(n: int, m: int, E=None) -> np.ndarray:
    """Annihilator ``He = [E; E]`` of ``D = [I; -I]``, shape 2n x 2(n-m).

    `E` defaults to the leading ``2(n-m)`` columns of the identity. Needs
    ``2m >= n``. Returns a 2n x 0 array when ``m == n``.
    """
    if not 0 < m <= n:
        raise ValueError(f"need 0 < m <= n, got n={n}, m={m}")
    k = 2 * (n - m)
    if k > n:
        raise ConfigurationError(f"no annihilator of rank {k} exists for n={n}, m={m}: need 2m >= n")
    if k == 0:
        log.warning("m == n: every regressor element is independent, the doubled scheme is not needed")
        return np.zeros((2 * n, 0))
    E = np.eye(n)[:, :k] if E is None else np.asarray(E, dtype=float).reshape(n, k)
    He = np.vstack([E, E])
    if np.any(He.T @ extension_matrix(n) != 0.0):
        raise AssertionError("He^T D != 0")
    if numeric_rank(He) != k:
        raise ConfigurationError(f"E must have full column rank {k}")
    return He


def _mix(Y, Phi, L2, H, m2_rule: str):
    n = Phi.shape[0]
    adj_phi = adjugate(Phi)
    k = L2.shape[1]
    if k == 0:
        return Y.copy(), 1.0, np.zeros(n), np.zeros((n, n)), adj_phi
    S = H.T @ adj_phi @ L2
    adj_s = adjugate(S)
    # det(S) is the coefficient of W2 inside N, which makes it cancel exactly;
    # "det_adj" is det(adj(S)) = det(S)^(k-1), which only agrees for k = 2
    M2 = determinant(S) if m2_rule == "det" else determinant(adj_s)
    M1 = L2 @ adj_s @ H.T @ adj_phi
    N = M1 @ Y
    return M2 * Y - N, M2, N, M1, adj_phi


def scheme1_transform(Y, Phi, ann: AnnihilatorSet, m2_rule: str = "det"):
    """Mixing that removes the dependent-direction perturbation from ``Y``.

    Returns ``(Upsilon, M2, N, M1)`` with ``Upsilon = M2 Y - N``. When
    ``H^T theta = 0`` this gives ``Upsilon = M2 Phi theta + (M2 I - M1) W1``.
    """
    if ann.H is None:
        raise ConfigurationError("scheme 1 needs the annihilator H")
    Y = np.asarray(Y, dtype=float)
    Phi = np.asarray(Phi, dtype=float)
    if Y.shape != (ann.n,) or Phi.shape != (ann.n, ann.n):
        raise DimensionError(f"expected Y ({ann.n},) and Phi ({ann.n},{ann.n})")
    ups, M2, N, M1, _ = _mix(Y, Phi, ann.L2, ann.H, m2_rule)
    return ups, M2, N, M1


def scheme2_transform(Y, Phi, ann: AnnihilatorSet, m2_rule: str = "det"):
    """Scheme 1 applied to the doubled regression with ``He`` and ``L2e``.

    Returns ``(Upsilon, M2)``. For ``m == n`` this is the identity with
    ``M2 = 1``.
    """
    if ann.He is None:
        raise ConfigurationError("scheme 2 needs the annihilator He")
    n2 = 2 * ann.n
    Y = np.asarray(Y, dtype=float)
    Phi = np.asarray(Phi, dtype=float)
    if Y.shape != (n2,) or Phi.shape != (n2, n2):
        raise DimensionError(f"expected Y ({n2},) and Phi ({n2},{n2})")
    ups, M2, _, _, _ = _mix(Y, Phi, ann.L2e, ann.He, m2_rule)
    return ups, M2


def check_scheme1_rank(Lam, ann: AnnihilatorSet, rel_tol: float = RANK_TOL) -> tuple[bool, int]:
    """rank(H^T adj(Lam) L2) == n - m, evaluated on an estimated Lam."""
    k = ann.n - ann.m
    if k == 0:
        return True, 0
    r = numeric_rank(ann.H.T @ adjugate(Lam) @ ann.L2, rel_tol)
    return r == k, r


def check_scheme2_rank(Lam_e, ann: AnnihilatorSet, rel_tol: float = RANK_TOL) -> tuple[bool, int]:
    """rank(He^T adj(Lam_e) L2e) == 2(n - m) on an estimated Lam_e."""
    k = 2 * (ann.n - ann.m)
    if k == 0:
        return True, 0
    r = numeric_rank(ann.He.T @ adjugate(Lam_e) @ ann.L2e, rel_tol)
    return r == k, r


@dataclass
class EstimatorState:
    """Parameter estimate and gains of one estimation law."""

    theta: np.ndarray
    gamma: float
    law: str = "A"
    ann: AnnihilatorSet | None = None
    window: WindowState | None = None
    unconstrained: bool = False
    m2_rule: str = "det"
    # extended estimate, only for law C with unconstrained=True
    theta_ext: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=float).reshape(-1)
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.law not in LAWS:
            raise ValueError(f"unknown law {self.law!r}, expected one of {LAWS}")
        if self.law in ("B", "C") and self.ann is None:
            raise ConfigurationError(f"law {self.law} needs an AnnihilatorSet")
        if self.law == "C" and self.unconstrained and self.theta_ext is None:
            self.theta_ext = extension_matrix(self.theta.size) @ self.theta

    def guard(self) -> None:
        sq = float(self.theta @ self.theta)
        # NaN fails the comparison too
        if not sq <= DIVERGENCE_LIMIT**2:
            raise DivergenceError(
                f"|theta_hat| exceeded {DIVERGENCE_LIMIT:g}: check excitation and the gamma/T pairing"
            )


def _integrate_linear(x, G, c, gamma, h):
    # x' = -gamma (G x - c) with G, c held over the step
    return rk4_step(lambda _t, v: -gamma * (G @ v - c), 0.0, x, h)


def law_a_step(est: EstimatorState, Y, Phi, h: float) -> np.ndarray:
    """One RK4 step of ``theta' = -gamma adj(Phi) (Phi theta - Y)``."""
    Phi = np.asarray(Phi, dtype=float)
    n = est.theta.size
    if Phi.shape != (n, n) or np.shape(Y) != (n,):
        raise DimensionError(f"expected Y ({n},) and Phi ({n},{n})")
    adj = adjugate(Phi)
    est.theta = _integrate_linear(est.theta, adj @ Phi, adj @ Y, est.gamma, h)
    est.guard()
    return est.theta


def law_b_step(est: EstimatorState, Ups, M2: float, Phi, h: float) -> np.ndarray:
    """One RK4 step of ``theta' = -gamma M2 adj(Phi) (M2 Phi theta - Upsilon)``."""
    Phi = np.asarray(Phi, dtype=float)
    n = est.theta.size
    if Phi.shape != (n, n) or np.shape(Ups) != (n,):
        raise DimensionError(f"expected Upsilon ({n},) and Phi ({n},{n})")
    adj = adjugate(Phi)
    est.theta = _integrate_linear(est.theta, M2 * M2 * (adj @ Phi), M2 * (adj @ Ups), est.gamma, h)
    est.guard()
    return est.theta


def law_c_step(est: EstimatorState, Ups, M2: float, Phi, h: float) -> np.ndarray:
    """One RK4 step of the doubled-regression law.

    The residual is ``M2 Phi (D theta) - Upsilon`` and only the first n rows
    of ``adj(Phi) r`` drive the estimate. With ``unconstrained=True`` a free
    2n-vector replaces ``D theta`` and theta is read from its first block.
    """
    n = est.theta.size
    Phi = np.asarray(Phi, dtype=float)
    if Phi.shape != (2 * n, 2 * n) or np.shape(Ups) != (2 * n,):
        raise DimensionError(f"expected Upsilon ({2 * n},) and Phi ({2 * n},{2 * n})")
    adj = adjugate(Phi)
    if est.unconstrained:
        est.theta_ext = _integrate_linear(est.theta_ext, M2 * M2 * (adj @ Phi), M2 * (adj @ Ups), est.gamma, h)
        est.theta = est.theta_ext[:n].copy()
    else:
        D = extension_matrix(n)
        top = adj[:n]
        est.theta = _integrate_linear(est.theta, M2 * M2 * (top @ Phi @ D), M2 * (top @ Ups), est.gamma, h)
    est.guard()
    return est.theta


@dataclass
class EstimatorRun:
    """Telemetry of one estimator pass over a stream."""

    times: np.ndarray
    theta_hat: np.ndarray
    theta_err: np.ndarray | None
    residual_norm: np.ndarray
    M2: np.ndarray
    warnings: list[str] = field(default_factory=list)
    diverged: bool = False

    @property
    def header(self) -> list[str]:
        n = self.theta_hat.shape[1]
        return (["t"] + [f"theta_hat_{i + 1}" for i in range(n)]
                + [f"theta_err_{i + 1}" for i in range(n)] + ["residual_norm", "M2"])

    def table(self) -> np.ndarray:
        err = self.theta_err if self.theta_err is not None else np.full_like(self.theta_hat, np.nan)
        return np.column_stack([self.times, self.theta_hat, err, self.residual_norm, self.M2])

    def to_csv(self, path) -> None:
        write_csv(path, self.header, self.table())


def check_rank_precondition(lre: LreStream, law: str, ann: AnnihilatorSet, window: float, t: float):
    """Rank condition of law B or C on the empirical autocovariance at `t`.

    `lre` is the stream the law runs on (the doubled one for law C).
    Returns ``(ok, rank, expected)``.
    """
    Lam = empirical_autocovariance(lre.phi, t, window)
    if law == "B":
        ok, r = check_scheme1_rank(Lam, ann)
        return ok, r, ann.n - ann.m
    if law == "C":
        ok, r = check_scheme2_rank(Lam, ann)
        return ok, r, 2 * (ann.n - ann.m)
    return True, 0, 0


def run_estimator(lre: LreStream, law: str, gamma: float, window: float,
                  ann: AnnihilatorSet | None = None, theta0=None,
                  decimation: int = 1, unconstrained: bool = False,
                  m2_rule: str = "det", check_rank: bool = True) -> EstimatorRun:
    """Drive the window extension and one law over a whole stream.

    For law C, `lre` must already be the doubled stream and `theta0`, the
    reported estimate and errors refer to the original n parameters.
    Rank preconditions of laws B and C are checked at ``t0 + 2T`` and at the
    end of the record; a failure raises AssumptionError before estimation
    when the first check is possible, and is recorded as a warning
    otherwise.
    """
    grid = lre.grid
    n_w = lre.n
    n = n_w // 2 if law == "C" else n_w
    theta0 = np.zeros(n) if theta0 is None else np.asarray(theta0, dtype=float)
    theta_true = None
    if lre.theta is not None:
        theta_true = lre.theta[:n] if law == "C" else lre.theta
    warnings: list[str] = []
    ws = WindowState(n_w, window, grid.h, grid.t0)
    if ws.snapped:
        warnings.append(f"window {window} snapped to {ws.window}")
    if check_rank and law in ("B", "C"):
        t_check = grid.t0 + 2 * ws.window
        for label, t in (("t0+2T", t_check), ("end", grid.t_end)):
            if t > grid.t_end + 1e-12:
                warnings.append(f"rank check at {label} skipped: record shorter than 2T")
                continue
            t = grid.t0 + grid.steps(t - grid.t0) * grid.h
            ok, r, k = check_rank_precondition(lre, law, ann, ws.window, t)
            if not ok:
                msg = f"law {law} rank precondition failed at {label} (t={t:g}): rank {r}, expected {k}"
                if label == "t0+2T":
                    raise AssumptionError(msg)
                warnings.append(msg)
    est = EstimatorState(theta0, gamma, law, ann, ws, unconstrained=unconstrained, m2_rule=m2_rule)
    phi = lre.phi.samples
    z = lre.z.samples[:, 0]
    h = grid.h
    D = extension_matrix(n) if law == "C" else None
    idx = list(range(0, grid.n_steps, decimation))
    if idx[-1] != grid.n_steps - 1:
        idx.append(grid.n_steps - 1)
    emit = np.zeros(grid.n_steps, dtype=bool)
    emit[idx] = True
    out_t, out_th, out_res, out_m2 = [], [], [], []
    diverged = False
    for k in range(grid.n_steps):
        ws.step(phi[k], z[k])
        if law == "A":
            M2 = 1.0
            resid = ws.Phi @ est.theta - ws.Y
        elif law == "B":
            ups, M2, _, _ = scheme1_transform(ws.Y, ws.Phi, ann, m2_rule)
            resid = M2 * (ws.Phi @ est.theta) - ups
        else:
            ups, M2 = scheme2_transform(ws.Y, ws.Phi, ann, m2_rule)
            th_ext = est.theta_ext if unconstrained else D @ est.theta
            resid = M2 * (ws.Phi @ th_ext) - ups
        if emit[k]:
            out_t.append(grid.t0 + k * h)
            out_th.append(est.theta.copy())
            out_res.append(float(np.linalg.norm(resid)))
            out_m2.append(M2)
        if k == grid.n_steps - 1:
            break
        try:
            if law == "A":
                law_a_step(est, ws.Y, ws.Phi, h)
            elif law == "B":
                law_b_step(est, ups, M2, ws.Phi, h)
            else:
                law_c_step(est, ups, M2, ws.Phi, h)
        except DivergenceError as exc:
            warnings.append(f"diverged at t={grid.t0 + (k + 1) * h:g}: {exc}")
            diverged = True
            break
    th = np.array(out_th)
    err = th - theta_true if theta_true is not None else None
    return EstimatorRun(np.array(out_t), th, err, np.array(out_res), np.array(out_m2),
                        warnings, diverged)
