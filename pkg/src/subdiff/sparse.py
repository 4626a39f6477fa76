"""CSR matrices and a Jacobi-preconditioned conjugate gradient solver.

Storage and the matrix-vector product are delegated to :mod:`scipy.sparse`;
the solver itself is a plain PCG loop so that the residual contract and the
iteration report stay under our control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidParameter, NonConvergence

__all__ = ["CGReport", "csr_from_triplets", "spmv", "cg_solve", "is_symmetric"]


@dataclass(frozen=True)
class CGReport:
    iterations: int
    residual: float  # final ||b - Ax|| / ||b||, recomputed with one extra product
    converged: bool


def csr_from_triplets(rows, cols, vals, nrows: int, ncols: int) -> sp.csr_matrix:
    """Assemble a CSR matrix; duplicate entries are summed, columns sorted.

    >>> csr_from_triplets([1, 0], [0, 1], [5.0, 7.0], 2, 2).data.tolist()
    [7.0, 5.0]
    """
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    if not (rows.shape == cols.shape == vals.shape):
        raise InvalidParameter("triplet arrays differ in length")
    if rows.size and (rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols):
        raise InvalidParameter(f"triplet index outside {nrows}x{ncols}")
    A = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def spmv(A, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise InvalidParameter(f"dimension mismatch: {A.shape} @ {x.shape}")
    return A @ x


def is_symmetric(A, tol: float = 1e-13) -> bool:
    D = abs(A - A.T)
    return D.nnz == 0 or D.max() <= tol * max(abs(A).max(), 1.0)


def cg_solve(A, b, tol: float = 1e-11, max_iter: int | None = None, x0=None, raise_on_fail: bool = True):
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Parameters
    ----------
    A : sparse matrix
        SPD system matrix with a strictly positive diagonal.
    b : ndarray
        Right-hand side.
    tol : float
        Target relative residual ``||b - A x|| <= tol ||b||``.
    max_iter : int, optional
        Iteration cap, ``10 * len(b)`` by default.
    x0 : ndarray, optional
        Starting guess.

    Returns
    -------
    x : ndarray
    report : CGReport
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise InvalidParameter(f"dimension mismatch: {A.shape} vs rhs {b.shape}")
    if max_iter is None:
        max_iter = 10 * max(n, 1)
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise InvalidParameter("Jacobi preconditioner needs a positive diagonal")
    minv = 1.0 / diag

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), CGReport(0, 0.0, True)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    target = tol * bnorm
    it = 0
    # the recursive residual drifts from b - Ax; restart from the true one
    for _ in range(4):
        r = b - A @ x
        rnorm = np.linalg.norm(r)
        if rnorm <= target or it >= max_iter:
            break
        inner = 0.25 * target
        z = minv * r
        p = z.copy()
        rz = r @ z
        while rnorm > inner and it < max_iter:
            Ap = A @ p
            step = rz / (p @ Ap)
            x += step * p
            r -= step * Ap
            z = minv * r
            rz_new = r @ z
            p *= rz_new / rz
            p += z
            rz = rz_new
            rnorm = np.linalg.norm(r)
            it += 1
    true_res = np.linalg.norm(b - A @ x) / bnorm
    report = CGReport(it, float(true_res), bool(true_res <= tol))
    if not report.converged and raise_on_fail:
        raise NonConvergence(
            f"CG stopped after {it} iterations with relative residual {true_res:.3e} > {tol:.1e}",
            report,
        )
    return x, report
