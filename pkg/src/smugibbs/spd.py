"""Dense symmetric/SPD kernels: Cholesky, log-determinant, 2x2 Schur blocks.

All matrices are plain float ndarrays.  Symmetry is kept exact by always
writing the lower triangle and mirroring it, never by averaging.
"""

import numpy as np
from dataclasses import dataclass

from .errors import NotPositiveDefiniteError


def mirror_lower(m: np.ndarray) -> np.ndarray:
    """Return a copy of ``m`` with the strict lower triangle mirrored up."""
    m = np.array(m, dtype=float)
    il, jl = np.tril_indices(m.shape[0], -1)
    m[jl, il] = m[il, jl]
    return m


def cholesky_lower(m: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of an SPD matrix.

    Raises NotPositiveDefiniteError when any pivot is <= 0, which inside a
    sampler signals a bug or corrupted state rather than a user error.
    """
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc


def is_spd(m: np.ndarray) -> bool:
    try:
        cholesky_lower(m)
        return True
    except NotPositiveDefiniteError:
        return False


def log_det(m: np.ndarray) -> float:
    """log det of an SPD matrix via its Cholesky diagonal."""
    return 2.0 * float(np.sum(np.log(np.diag(cholesky_lower(m)))))


def spd_inverse(m: np.ndarray) -> np.ndarray:
    """Inverse of an SPD matrix, symmetrized exactly."""
    l = cholesky_lower(m)
    inv = np.linalg.inv(l)
    return mirror_lower(inv.T @ inv)


def extremal_eigenvalues(m: np.ndarray) -> tuple[float, float]:
    """(min, max) eigenvalues of a symmetric matrix."""
    w = np.linalg.eigvalsh(m)
    return float(w[0]), float(w[-1])


@dataclass(frozen=True)
class BlockDecomposition:
    """2x2 free block of a precision matrix for one vertex pair.

    ``a = omega[e, e] - b`` is the Schur complement of the remaining
    vertices; ``a = L diag(d1, d2) L^T`` with unit lower-triangular L.
    """

    e: tuple[int, int]
    a: np.ndarray
    b: np.ndarray
    d1: float
    d2: float
    l21: float


def schur_block(omega: np.ndarray, e: tuple[int, int]) -> BlockDecomposition:
    """Decompose the (i, j) block of SPD ``omega``.

    Returns the Schur complement A of the other vertices, the coupling term
    B, and the (d1, d2, l21) factorization of A.  Indices are 0-based and
    may come in either order; the first index maps to A[0, 0].
    """
    i, j = e
    p = omega.shape[0]
    if i == j or not (0 <= i < p and 0 <= j < p):
        raise ValueError(f"invalid vertex pair {e} for p={p}")
    rest = np.array([k for k in range(p) if k != i and k != j], dtype=np.intp)
    eidx = np.array([i, j], dtype=np.intp)
    if rest.size:
        m_rr = omega[np.ix_(rest, rest)]
        m_re = omega[np.ix_(rest, eidx)]
        try:
            sol = np.linalg.solve(m_rr, m_re)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(str(exc)) from exc
        b = m_re.T @ sol
        b[0, 1] = b[1, 0]
    else:
        b = np.zeros((2, 2))
    a = omega[np.ix_(eidx, eidx)] - b
    d1 = float(a[0, 0])
    if d1 <= 0.0:
        raise NotPositiveDefiniteError(f"Schur block at {e}: d1={d1} <= 0")
    l21 = float(a[1, 0]) / d1
    d2 = float(a[1, 1]) - d1 * l21 * l21
    if d2 <= 0.0:
        raise NotPositiveDefiniteError(f"Schur block at {e}: d2={d2} <= 0")
    return BlockDecomposition(e=(i, j), a=a, b=b, d1=d1, d2=d2, l21=l21)
