"""Hermitian positive definite solvers for the L-MMSE system matrix.

The time domain system matrix S = H C H^H + N0 I is cyclically banded:
entry (p, q) can only be non-zero when (p - q) mod MN is a difference of
two delay indices. Reordering rows and columns as 0, n-1, 1, n-2, ...
folds the cyclic corners into the band, after which a banded Cholesky
factorization applies.
"""
import functools
from enum import Enum
from typing import Union

import numpy as np
import scipy.linalg
import scipy.sparse

from otfs.error import SolverError

MatrixLike = Union[np.ndarray, scipy.sparse.spmatrix]


class SolverMode(str, Enum):
    DENSE = "dense"
    BANDED = "banded"


def folded_permutation(n: int) -> np.ndarray:
    """Order 0, n-1, 1, n-2, ... as positions -> original indices.

    Two indices at cyclic distance d end up at most 2d positions apart.
    """
    perm = np.empty(n, dtype=np.int64)
    perm[0::2] = np.arange((n + 1) // 2)
    perm[1::2] = n - 1 - np.arange(n // 2)
    return perm


def bandwidth(S: MatrixLike) -> int:
    """Number of non-zero super-diagonals of a Hermitian matrix."""
    if scipy.sparse.issparse(S):
        coo = S.tocoo()
        rows, cols = coo.row[coo.data != 0], coo.col[coo.data != 0]
    else:
        rows, cols = np.nonzero(S)
    if rows.size == 0:
        return 0
    return int(np.max(np.abs(rows - cols)))


class DenseHermitianSolver:
    """Cholesky factorization S = L L^H of a dense matrix."""

    def __init__(self, S: MatrixLike):
        if scipy.sparse.issparse(S):
            S = S.toarray()
        try:
            self._L = scipy.linalg.cholesky(S, lower=True, check_finite=False)
        except np.linalg.LinAlgError as e:
            raise SolverError(f"System matrix is not positive definite: {e}") from e

    def solve(self, B: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve((self._L, True), B, check_finite=False)

    def quad_diag(self, B: MatrixLike) -> np.ndarray:
        """diag(B^H S^-1 B) as the column norms of L^-1 B."""
        if scipy.sparse.issparse(B):
            B = B.toarray()
        W = scipy.linalg.solve_triangular(self._L, B, lower=True, check_finite=False)
        return np.sum(np.abs(W) ** 2, axis=0)


class BandedHermitianSolver:
    """Banded Cholesky factorization of a folded, cyclically banded matrix."""

    def __init__(self, S: MatrixLike):
        n = S.shape[0]
        self._perm = folded_permutation(n)
        if scipy.sparse.issparse(S):
            folded = S.tocsr()[self._perm][:, self._perm]
        else:
            folded = np.asarray(S)[np.ix_(self._perm, self._perm)]
        self.bandwidth = bandwidth(folded)

        u = self.bandwidth
        # Upper form: ab[u + i - j, j] = S[i, j] for i <= j.
        ab = np.zeros((u + 1, n), dtype=complex)
        for k in range(u + 1):
            ab[u - k, k:] = folded.diagonal(k)
        try:
            self._cb = scipy.linalg.cholesky_banded(ab, lower=False)
        except np.linalg.LinAlgError as e:
            raise SolverError(f"System matrix is not positive definite: {e}") from e

    def solve(self, B: np.ndarray) -> np.ndarray:
        B = np.asarray(B)
        X = scipy.linalg.cho_solve_banded((self._cb, False), B[self._perm])
        out = np.empty_like(X)
        out[self._perm] = X
        return out

    @functools.cached_property
    def _band_inverse(self) -> np.ndarray:
        """Entries of the folded S^-1 inside the band.

        Row k holds the k-th super-diagonal, ``z[k, i] = S^-1[i, i + k]``.
        Takahashi's recurrence on S = U^H U, from the last row up.
        """
        u, n = self.bandwidth, self._cb.shape[1]
        d = np.real(self._cb[u])
        # Unit upper factor W = diag(d)^-1 U in the same storage.
        w = np.zeros((u + 1, n), dtype=complex)
        for k in range(1, u + 1):
            w[k, : n - k] = self._cb[u - k, k:] / d[: n - k]

        z = np.zeros((u + 1, n), dtype=complex)
        a, b = np.meshgrid(np.arange(u), np.arange(u), indexing="ij")
        offset, lower = np.abs(a - b), np.minimum(a, b)
        for i in range(n - 1, -1, -1):
            m = min(u, n - 1 - i)
            w_row = w[1 : m + 1, i]
            if m:
                off, lo = offset[:m, :m], lower[:m, :m]
                block = z[off, i + 1 + lo]
                block = np.where(a[:m, :m] > b[:m, :m], np.conj(block), block)
                z[1 : m + 1, i] = -(w_row @ block)
            z[0, i] = 1.0 / d[i] ** 2 - w_row @ np.conj(z[1 : m + 1, i])
        return z

    def _sparse_quad_diag(self, B: scipy.sparse.spmatrix) -> np.ndarray:
        B = B.tocsc()
        n_cols = B.shape[1]
        counts = np.diff(B.indptr)
        width = int(counts.max(initial=0))
        cols = np.repeat(np.arange(n_cols), counts)
        slots = np.arange(B.nnz) - B.indptr[cols]
        positions = np.zeros((n_cols, width), dtype=np.int64)
        values = np.zeros((n_cols, width), dtype=complex)
        inverse = np.empty_like(self._perm)
        inverse[self._perm] = np.arange(self._perm.shape[0])
        positions[cols, slots] = inverse[B.indices]
        values[cols, slots] = B.data

        z = self._band_inverse
        out = np.zeros(n_cols)
        for s in range(width):
            for t in range(width):
                p, q = positions[:, s], positions[:, t]
                used = (values[:, s] != 0) & (values[:, t] != 0)
                off = np.where(used, np.abs(p - q), 0)
                if np.any(off > self.bandwidth):
                    return self._dense_quad_diag(B.toarray())
                entry = z[off, np.minimum(p, q)]
                entry = np.where(p > q, np.conj(entry), entry)
                out += np.real(np.conj(values[:, s]) * entry * values[:, t])
        return out

    def _dense_quad_diag(self, B: np.ndarray) -> np.ndarray:
        return np.real(np.sum(np.conj(B) * self.solve(B), axis=0))

    def quad_diag(self, B: MatrixLike) -> np.ndarray:
        """diag(B^H S^-1 B). A sparse B only touches S^-1 inside the band."""
        if scipy.sparse.issparse(B):
            return self._sparse_quad_diag(B)
        return self._dense_quad_diag(np.asarray(B))


def make_solver(S: MatrixLike, mode: SolverMode = SolverMode.DENSE):
    if SolverMode(mode) is SolverMode.BANDED:
        return BandedHermitianSolver(S)
    return DenseHermitianSolver(S)
