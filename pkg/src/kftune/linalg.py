"""Small symmetric-matrix helpers shared by the filter and the estimators."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return the symmetric part (a + a.T)/2."""
    return 0.5 * (a + a.T)


def spd_solve(a: np.ndarray, b: np.ndarray, warnings: list | None = None,
              context: str = "") -> np.ndarray:
    """Solve a @ x = b for symmetric positive-definite a.

    Uses a Cholesky factorization. If the factorization fails, a ridge of
    1e-12 * trace(a)/dim is added and the solve retried once; the event is
    appended to `warnings` when a list is supplied. A second failure raises
    numpy.linalg.LinAlgError.
    """
    a = symmetrize(np.asarray(a, dtype=float))
    try:
        c, low = cho_factor(a, check_finite=False)
        return cho_solve((c, low), b, check_finite=False)
    except np.linalg.LinAlgError:
        dim = a.shape[0]
        ridge = 1e-12 * max(abs(np.trace(a)), np.finfo(float).tiny) / dim
        if warnings is not None:
            warnings.append(f"spd_solve: ridge {ridge:.3e} added ({context})")
        a_r = a + ridge * np.eye(dim)
        try:
            c, low = cho_factor(a_r, check_finite=False)
            return cho_solve((c, low), b, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                f"matrix not positive definite even after ridge ({context})") from exc


def floor_eigenvalues(a: np.ndarray, rel_floor: float = 1e-10) -> tuple[np.ndarray, bool]:
    """Clip the eigenvalues of a symmetric matrix from below.

    The floor is rel_floor * |trace|, with an absolute fallback when the
    trace itself is ~0. Returns (repaired matrix, whether clipping occurred).
    """
    a = symmetrize(np.asarray(a, dtype=float))
    floor = rel_floor * max(abs(np.trace(a)), np.finfo(float).tiny)
    w, v = np.linalg.eigh(a)
    if w[0] >= floor:
        return a, False
    w = np.maximum(w, floor)
    return symmetrize((v * w) @ v.T), True


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix (negative rounding clipped at 0).

    Works for singular matrices (e.g. an all-zero noise covariance), unlike
    a plain Cholesky factorization.
    """
    a = symmetrize(np.asarray(a, dtype=float))
    if not np.any(a):
        return np.zeros_like(a)
    w, v = np.linalg.eigh(a)
    if w[0] < -1e-10 * max(abs(np.trace(a)), 1.0):
        raise ValueError("matrix is not positive semi-definite")
    return (v * np.sqrt(np.maximum(w, 0.0))) @ v.T


def min_eigenvalue(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(a))[0])


def require_psd(a: np.ndarray, name: str, tol: float = 1e-10) -> np.ndarray:
    """Validate symmetry and positive semi-definiteness of a user-supplied matrix."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.max(np.abs(a - a.T)) > tol * max(1.0, np.max(np.abs(a))):
        raise ValueError(f"{name} is not symmetric")
    scale = max(abs(np.trace(a)), 1.0)
    if min_eigenvalue(a) < -tol * scale:
        raise ValueError(f"{name} is not positive semi-definite")
    return symmetrize(a)
