"""Dense small-matrix analysis kernel.

Perron root, Z-sign-pattern and M-matrix tests, nonnegative-inverse solves,
and irreducibility of a nonzero pattern. All matrices here are small (the
models have at most a handful of compartments), so everything uses full
dense decompositions; robustness beats speed at these sizes.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

# Absolute threshold below which a matrix entry counts as structurally zero.
# Entries are model parameters, not noisy data, so this is generous.
ZERO_TOL = 1e-14

# Condition estimate above which a linear system is reported singular.
COND_LIMIT = 1e12


class NonSquareError(ValueError):
    """Matrix argument is not square."""


class SingularMatrixError(ValueError):
    """Linear solve rejected; carries the condition estimate."""

    def __init__(self, cond: float):
        super().__init__(f"matrix numerically singular (condition estimate {cond:.3e})")
        self.cond = cond


@dataclass(frozen=True)
class SignPatternReport:
    """Sign-pattern and M-matrix summary of a square matrix.

    is_nonsingular_M implies is_Z_pattern and min_real_eig > 0; when the
    Z pattern holds, is_nonsingular_M is equivalent to inverse_nonneg.
    """
    is_Z_pattern: bool
    is_nonsingular_M: bool
    inverse_nonneg: bool
    min_real_eig: float


def _require_square(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NonSquareError(f"expected square matrix, got shape {A.shape}")
    return A


def spectral_radius(A: np.ndarray) -> float:
    """Perron root of a nonnegative square matrix.

    For A >= 0 the spectral radius is itself an eigenvalue (the dominant
    nonnegative one), so we return the largest real part of the spectrum,
    clipped at zero to absorb roundoff on nilpotent patterns.
    """
    A = _require_square(A)
    if A.size and A.min() < -ZERO_TOL:
        raise ValueError("spectral_radius requires a nonnegative matrix")
    if A.size == 0:
        return 0.0
    eigs = np.linalg.eigvals(A)
    return max(float(np.max(eigs.real)), 0.0)


def z_pattern_check(A: np.ndarray) -> bool:
    """True iff every off-diagonal entry is <= 0 (up to ZERO_TOL)."""
    A = _require_square(A)
    off = A - np.diag(np.diag(A))
    return bool(np.all(off <= ZERO_TOL))


def m_matrix_report(A: np.ndarray) -> SignPatternReport:
    """Z-pattern flag, spectral abscissa from below, inverse nonnegativity.

    A nonsingular M-matrix is a Z-pattern matrix whose eigenvalues all have
    positive real part; equivalently its inverse is entrywise nonnegative.
    Both characterizations are computed so callers can cross-check them.
    """
    A = _require_square(A)
    is_z = z_pattern_check(A)
    eigs = np.linalg.eigvals(A)
    min_re = float(np.min(eigs.real)) if A.size else 0.0
    inverse_nonneg = False
    try:
        inv = np.linalg.inv(A)
        inverse_nonneg = bool(np.all(inv >= -1e-10 * (1.0 + np.max(np.abs(inv)))))
    except np.linalg.LinAlgError:
        pass
    is_m = is_z and min_re > ZERO_TOL
    return SignPatternReport(is_Z_pattern=is_z, is_nonsingular_M=is_m,
                             inverse_nonneg=inverse_nonneg, min_real_eig=min_re)


def condition_estimate(A: np.ndarray) -> float:
    """1-norm condition estimate via LU."""
    A = _require_square(A)
    try:
        with warnings.catch_warnings():
            # an exactly singular pivot is a valid outcome here, not a bug
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(A)
    except (scipy.linalg.LinAlgError, ValueError):
        return np.inf
    anorm = np.linalg.norm(A, 1)
    rcond = scipy.linalg.lapack.dgecon(lu, anorm)[0]
    return np.inf if rcond == 0.0 else 1.0 / rcond


def solve_linear(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve Ax = b, refusing near-singular systems.

    The residual is required to satisfy ||Ax - b||_inf <= 1e-9 (1 + ||b||_inf);
    one step of iterative refinement keeps that bound easy to meet.
    """
    A = _require_square(A)
    b = np.asarray(b, dtype=float)
    cond = condition_estimate(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatrixError(cond)
    lu, piv = scipy.linalg.lu_factor(A)
    x = scipy.linalg.lu_solve((lu, piv), b)
    x = x + scipy.linalg.lu_solve((lu, piv), b - A @ x)
    resid = np.max(np.abs(A @ x - b)) if b.size else 0.0
    bound = 1e-9 * (1.0 + (np.max(np.abs(b)) if b.size else 0.0))
    if resid > bound:
        raise SingularMatrixError(cond)
    return x


def is_irreducible(pattern: np.ndarray) -> bool:
    """True iff the nonzero pattern is irreducible.

    Equivalent formulations: the digraph with an edge j -> i whenever
    pattern[i, j] is nonzero is strongly connected; no simultaneous row and
    column permutation brings the matrix to block-triangular form.
    """
    P = _require_square(np.asarray(pattern))
    n = P.shape[0]
    if n == 1:
        return True
    adj = (np.abs(P.astype(float)) > ZERO_TOL).astype(np.int8)
    np.fill_diagonal(adj, 0)
    ncomp, _ = connected_components(csr_matrix(adj), directed=True, connection="strong")
    return ncomp == 1


def eigen_spectrum(A: np.ndarray) -> np.ndarray:
    """All eigenvalues of a square matrix, as complex values."""
    A = _require_square(A)
    return np.linalg.eigvals(A)
