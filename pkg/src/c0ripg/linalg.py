"""Sparse symmetric storage and SPD direct solves (CHOLMOD through cvxopt)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp
from cvxopt import cholmod, matrix, spmatrix


class NotSPDError(ArithmeticError):
    """Raised when a Cholesky factorization meets a non-positive pivot."""


def assemble_csr(rows, cols, vals, shape) -> sp.csr_matrix:
    """Sum duplicate COO triplets into CSR. Values are never dropped here."""
    A = sp.coo_matrix((np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=shape)
    A = A.tocsr()
    A.sum_duplicates()
    return A


def is_structurally_symmetric(A: sp.spmatrix) -> bool:
    P = sp.csr_matrix(A, copy=True)
    P.data[:] = 1.0
    return (P != P.T).nnz == 0


def symmetry_defect(A: sp.spmatrix) -> float:
    """max |A - A^T| relative to max |A|."""
    A = sp.csr_matrix(A)
    scale = abs(A).max()
    if scale == 0:
        return 0.0
    return abs(A - A.T).max() / scale


def _to_cvxopt(A: sp.spmatrix) -> spmatrix:
    C = sp.tril(sp.csc_matrix(A)).tocoo()
    return spmatrix(matrix(C.data.astype(float)), matrix(C.row.astype(np.int64).reshape(-1, 1), tc="i"),
                    matrix(C.col.astype(np.int64).reshape(-1, 1), tc="i"), size=A.shape)


class CholeskyFactor:
    """Sparse Cholesky factor of a symmetric matrix (lower triangle is read).

    Uses CHOLMOD's fill-reducing ordering. Raises :class:`NotSPDError` on a
    non-positive pivot.
    """

    def __init__(self, A: sp.spmatrix):
        self.A = sp.csr_matrix(A)
        n, m = self.A.shape
        if n != m:
            raise ValueError("matrix must be square")
        self.n = n
        if n == 0:
            self._F = None
            return
        K = _to_cvxopt(self.A)
        self._F = cholmod.symbolic(K)
        try:
            cholmod.numeric(K, self._F)
        except ArithmeticError as exc:
            raise NotSPDError("matrix is not SPD") from exc

    def _solve(self, b: np.ndarray) -> np.ndarray:
        B = matrix(np.asarray(b, dtype=float).reshape(self.n, -1))
        cholmod.solve(self._F, B)
        return np.array(B).reshape(np.shape(b))

    def solve(self, b, rtol: float = 1e-9) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self.n == 0:
            return np.zeros_like(b)
        x = self._solve(b)
        r = b - self.A @ x
        if np.linalg.norm(r) > rtol * np.linalg.norm(b):
            x = x + self._solve(r)
        return x


def cholesky_solve(A: sp.spmatrix, b) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A``."""
    return CholeskyFactor(A).solve(b)


def spd_probe(A) -> bool:
    """True iff a Cholesky factorization of ``A`` succeeds."""
    if not sp.issparse(A):
        A = sp.csr_matrix(np.atleast_2d(np.asarray(A, dtype=float)))
    try:
        CholeskyFactor(A)
    except NotSPDError:
        return False
    return True


def lu_solve(A: sp.spmatrix, b) -> np.ndarray:
    """General sparse solve, used for the nonsymmetric heat system."""
    from scipy.sparse.linalg import splu
    return splu(sp.csc_matrix(A)).solve(np.asarray(b, dtype=float))


def weighted_gram(w: np.ndarray, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Batched ``K[c, i, j] = sum_q w[c, q] A[c, q, i, :] . B[c, q, j, :]``.

    ``A`` and ``B`` have shape (c, q, n, ...) with matching trailing sizes.
    """
    c, q, n = A.shape[:3]
    m = B.shape[2]
    Af = (A.reshape(c, q, n, -1) * w[:, :, None, None]).transpose(0, 2, 1, 3).reshape(c, n, -1)
    Bf = np.ascontiguousarray(B.reshape(c, q, m, -1).transpose(0, 2, 1, 3)).reshape(c, m, -1)
    return Af @ Bf.transpose(0, 2, 1)


def export_coordinate(A: sp.spmatrix, path: str | Path) -> None:
    """Write ``row col value`` lines; entries with |value| < 1e-300 are skipped."""
    C = sp.coo_matrix(A)
    keep = np.abs(C.data) >= 1e-300
    with open(path, "w") as fh:
        for i, j, v in zip(C.row[keep], C.col[keep], C.data[keep]):
            fh.write(f"{i} {j} {v:.17g}\n")
