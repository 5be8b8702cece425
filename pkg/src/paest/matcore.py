"""Small dense linear algebra: determinant, adjugate and numeric rank.

Everything here is sized for the tiny matrices that appear in the
estimation laws (n up to about 12). Inputs are validated for shape and
finiteness; singular inputs are fine, which is the whole reason the laws
use the adjugate instead of the inverse.
"""

from __future__ import annotations

import numpy as np

DEFAULT_RANK_TOL = 1e-9

# relative threshold below which adjugate() avoids det * inv for n >= 5
_ADJ_INV_THRESHOLD = 1e-12


class DimensionError(ValueError):
    """Raised when a matrix has the wrong shape for an operation."""


def as_matrix(a, name: str = "a") -> np.ndarray:
    """Return `a` as a finite 2-D float array, raising on anything else."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError(f"{name} contains non-finite entries")
    return m


def _square(a, name: str = "a") -> np.ndarray:
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    if m.shape[0] == 0:
        raise DimensionError(f"{name} must have at least one row")
    return m


def determinant(a) -> float:
    """Determinant of a square matrix.

    1x1 and 2x2 use closed forms; larger sizes go through LAPACK's
    partially pivoted LU factorisation.
    """
    m = _square(a)
    n = m.shape[0]
    if n == 1:
        return float(m[0, 0])
    if n == 2:
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
    # an exactly zero pivot returns 0 correctly but warns on the internal log
    with np.errstate(divide="ignore"):
        return float(np.linalg.det(m))


def _minors(m: np.ndarray) -> np.ndarray:
    """Stack of all (n-1)x(n-1) minors, shape (n, n, n-1, n-1)."""
    n = m.shape[0]
    keep = np.array([[j for j in range(n) if j != i] for i in range(n)])
    # rows keep[i], cols keep[j]
    return m[keep[:, None, :, None], keep[None, :, None, :]]


def _cofactor_adjugate(m: np.ndarray) -> np.ndarray:
    n = m.shape[0]
    with np.errstate(divide="ignore"):
        dets = np.linalg.det(_minors(m))
    signs = (-1.0) ** np.add.outer(np.arange(n), np.arange(n))
    return (signs * dets).T


def adjugate(a) -> np.ndarray:
    """Classical adjugate (transposed cofactor matrix).

    Satisfies ``a @ adjugate(a) == determinant(a) * I`` for singular `a`
    too. By convention the adjugate of a 1x1 matrix is ``[[1.0]]``.
    """
    m = _square(a)
    n = m.shape[0]
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])
    if n <= 4:
        return _cofactor_adjugate(m)
    det = np.linalg.det(m)
    scale = np.max(np.abs(m))
    if abs(det) > _ADJ_INV_THRESHOLD * scale**n:
        return det * np.linalg.inv(m)
    return _cofactor_adjugate(m)


def numeric_rank(a, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of singular values above ``rel_tol * sigma_max``.

    Returns 0 for the zero matrix and for matrices with an empty dimension.
    """
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    m = as_matrix(a)
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s[0]))
