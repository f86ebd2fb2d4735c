"""Special functions and small Hermitian linear algebra.

Everything here is a pure function; the heavy lifting is delegated to
scipy's Cephes/LAPACK bindings, with input validation and error mapping
matching the conventions of the rest of the package.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg
import scipy.special

from .errors import SingularMatrixError

__all__ = ["bessel_j0", "chi2_cdf", "chi2_quantile", "hermitian_solve"]


def bessel_j0(x: float) -> float:
    """Bessel function of the first kind, order zero.

    Raises ValueError for non-finite input.
    """
    if not math.isfinite(x):
        raise ValueError(f"bessel_j0 requires a finite argument, got {x!r}")
    return float(scipy.special.j0(x))


def chi2_cdf(x: float, dof: int) -> float:
    """CDF of the chi-squared distribution with `dof` degrees of freedom.

    Computed through the regularized lower incomplete gamma function,
    which stays accurate for the large degree-of-freedom values used by
    the detector (dof of a few hundred).
    """
    if dof <= 0:
        raise ValueError(f"dof must be a positive integer, got {dof}")
    if not math.isfinite(x) or x < 0.0:
        raise ValueError(f"chi2_cdf requires x >= 0, got {x!r}")
    # gammainc is the *regularized* lower incomplete gamma, already in [0, 1].
    value = float(scipy.special.gammainc(0.5 * dof, 0.5 * x))
    return min(1.0, max(0.0, value))


def chi2_quantile(p: float, dof: int) -> float:
    """Inverse of :func:`chi2_cdf` in its first argument.

    Valid for p strictly inside (0, 1).
    """
    if dof <= 0:
        raise ValueError(f"dof must be a positive integer, got {dof}")
    if not (0.0 < p < 1.0):
        raise ValueError(f"chi2_quantile requires 0 < p < 1, got {p!r}")
    return float(2.0 * scipy.special.gammaincinv(0.5 * dof, p))


def hermitian_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a @ x = b`` for Hermitian positive definite `a`.

    Uses a Cholesky factorization; a factorization failure (matrix not
    positive definite) raises :class:`SingularMatrixError`.  `b` may be a
    vector or a matrix of right-hand sides.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"dimension mismatch: a is {a.shape}, b is {b.shape}")
    scale = np.max(np.abs(a))
    if scale > 0 and np.max(np.abs(a - a.conj().T)) > 1e-8 * scale:
        raise ValueError("matrix is not Hermitian")
    try:
        factor = scipy.linalg.cho_factor(a, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"Cholesky factorization failed: {exc}") from exc
    return scipy.linalg.cho_solve(factor, b)
