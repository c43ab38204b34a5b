"""Minimal dense linear algebra: validated vectors/matrices and norms.

Vectors and matrices are plain ``numpy`` float64 arrays; ``as_vec`` and
``as_mat`` coerce and validate (finite entries, sane shapes).  The one
non-trivial routine is ``spectral_norm``, a deterministic power iteration
with a documented start vector.
"""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceError

# Start vectors whose image is shorter than this are treated as lying in the
# null space of M^T M.
_NULL_SPACE_EPS = 1e-30


def as_vec(values) -> np.ndarray:
    """Coerce to a 1-d float64 array and validate finiteness."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ValueError("vector must be one-dimensional with length >= 1")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    return v


def as_mat(values) -> np.ndarray:
    """Coerce to a 2-d float64 array and validate finiteness."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError("matrix must be two-dimensional with positive shape")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return m


def matvec(m, v) -> np.ndarray:
    """Matrix-vector product with dimension checking."""
    m = as_mat(m)
    v = as_vec(v)
    if m.shape[1] != v.shape[0]:
        raise ValueError(
            f"dimension mismatch in matvec: matrix is {m.shape[0]}x{m.shape[1]}, "
            f"vector has length {v.shape[0]}"
        )
    return m @ v


def frobenius_norm(m) -> float:
    """Square root of the sum of squared entries."""
    m = as_mat(m)
    return float(np.sqrt(np.sum(m * m)))


def _start_vector(m: np.ndarray) -> np.ndarray:
    """Deterministic power-iteration start: normalized all-ones vector.

    Falls back to canonical basis vectors (in order) when the candidate lies
    in the null space of M^T M, so a nonzero matrix always gets a usable
    start.
    """
    n = m.shape[1]
    v = np.full(n, 1.0 / np.sqrt(n))
    if np.linalg.norm(m @ v) >= _NULL_SPACE_EPS:
        return v
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        if np.linalg.norm(m @ e) >= _NULL_SPACE_EPS:
            return e
    raise ValueError("matrix is numerically zero; spectral norm start undefined")


def spectral_norm(m, tol: float = 1e-12, max_iter: int = 10000) -> float:
    """Largest singular value via power iteration on M^T M.

    Deterministic: starts from the normalized all-ones vector.  Stops when
    the estimate's relative change drops below ``tol``.  Raises
    ``ConvergenceError`` (carrying the last estimate) if ``max_iter`` is
    exhausted first.
    """
    m = as_mat(m)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not np.any(m):
        raise ValueError("spectral_norm requires a nonzero matrix")

    v = _start_vector(m)
    sigma_prev = -1.0
    for _ in range(max_iter):
        u = m @ v
        nu = np.linalg.norm(u)
        if nu < _NULL_SPACE_EPS:
            # Iterate collapsed; the dominant singular value along this
            # trajectory is numerically zero.
            return 0.0
        u /= nu
        w = m.T @ u
        nw = np.linalg.norm(w)
        if nw < _NULL_SPACE_EPS:
            return 0.0
        v = w / nw
        sigma = np.linalg.norm(m @ v)
        if abs(sigma - sigma_prev) <= tol * max(sigma, _NULL_SPACE_EPS):
            return float(sigma)
        sigma_prev = sigma
    raise ConvergenceError(
        f"power iteration did not converge within {max_iter} iterations",
        last_estimate=float(sigma_prev),
    )
