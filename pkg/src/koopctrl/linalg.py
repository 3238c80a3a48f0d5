"""Dense linear algebra primitives used by every other module.

All routines work on plain float64 numpy arrays in row-major order and
validate finiteness on entry. Symmetric inputs are explicitly symmetrized
((M + M^T)/2) before factorization so round-off asymmetry never leaks into
downstream definiteness margins.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import DimensionMismatchError, NonFiniteError, NotSymmetricError

#: Default relative singular-value cutoff for the pseudoinverse. Data
#: matrices from long trajectories are tall and can be near-rank-deficient;
#: a relative cutoff keeps the result scale invariant.
DEFAULT_PINV_RTOL = 1e-10

_SYM_TOL = 1e-10


def check_finite(m, name="matrix"):
    """Return ``m`` as a float64 array, raising :class:`NonFiniteError` if it
    contains NaN or Inf."""
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise NonFiniteError(f"{name} contains NaN or Inf entries")
    return m


def pinv(m, rtol=DEFAULT_PINV_RTOL):
    """Moore-Penrose pseudoinverse via SVD with a relative cutoff.

    Singular values below ``rtol * sigma_max`` are treated as exact zeros.
    """
    m = check_finite(m)
    if m.ndim != 2:
        raise DimensionMismatchError("pinv expects a 2-D matrix")
    if rtol <= 0:
        raise ValueError("rtol must be positive")
    if m.size == 0:
        return np.zeros((m.shape[1], m.shape[0]))
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((m.shape[1], m.shape[0]))
    inv = np.zeros_like(s)
    keep = s > rtol * s[0]
    inv[keep] = 1.0 / s[keep]
    return (vt.T * inv) @ u.T


class SymEig(NamedTuple):
    """Eigendecomposition of a symmetric matrix.

    ``values`` ascend; ``vectors`` columns are the matching orthonormal
    eigenvectors, so ``vectors @ diag(values) @ vectors.T`` reconstructs the
    symmetrized input.
    """

    values: np.ndarray
    vectors: np.ndarray


def sym_eig(m):
    """Eigendecomposition of a symmetric matrix, ascending eigenvalues."""
    m = check_finite(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetricError(f"expected a square matrix, got shape {m.shape}")
    scale = 1.0 + np.linalg.norm(m)
    if np.linalg.norm(m - m.T) > _SYM_TOL * scale:
        raise NotSymmetricError("matrix is not symmetric within tolerance")
    sym = 0.5 * (m + m.T)
    values, vectors = np.linalg.eigh(sym)
    return SymEig(values, vectors)


def min_eig(m):
    """Smallest eigenvalue of the symmetrized input."""
    return float(sym_eig(m).values[0])


def max_eig(m):
    """Largest eigenvalue of the symmetrized input."""
    return float(sym_eig(m).values[-1])


def kron(a, b):
    """Kronecker product with finiteness validation."""
    a = check_finite(a, "kron left operand")
    b = check_finite(b, "kron right operand")
    return np.kron(a, b)


def is_pos_def(m, shift=0.0):
    """Cholesky-based test for ``M - shift*I`` being positive definite."""
    m = check_finite(m)
    sym = 0.5 * (m + m.T)
    if shift:
        sym = sym - shift * np.eye(sym.shape[0])
    try:
        np.linalg.cholesky(sym)
    except np.linalg.LinAlgError:
        return False
    return True


def solve_spd(m, b):
    """Solve ``M x = b`` for symmetric positive definite ``M`` via Cholesky."""
    m = check_finite(m)
    b = check_finite(b, "right-hand side")
    sym = 0.5 * (m + m.T)
    factor = scipy.linalg.cho_factor(sym, lower=True, check_finite=False)
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def mat_to_json(m):
    """Serialize a 2-D matrix as ``{"rows", "cols", "data"}`` (row-major)."""
    m = check_finite(m)
    if m.ndim != 2:
        raise DimensionMismatchError("matrix JSON schema covers 2-D matrices only")
    return {"rows": int(m.shape[0]), "cols": int(m.shape[1]),
            "data": [float(v) for v in m.reshape(-1)]}


def mat_from_json(obj):
    """Inverse of :func:`mat_to_json`, with shape/finiteness validation."""
    rows, cols = int(obj["rows"]), int(obj["cols"])
    data = np.asarray(obj["data"], dtype=float)
    if data.size != rows * cols:
        raise DimensionMismatchError(
            f"matrix JSON declares {rows}x{cols} but carries {data.size} entries")
    return check_finite(data.reshape(rows, cols), "matrix JSON data")
