"""Sparse numerical kernel: CSR matvec, conjugate gradient, correlation, top-k.

Matrices are scipy CSR with 64-bit values; every reduction runs in a fixed
sequential order so results are reproducible bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class SolverError(RuntimeError):
    """Iterative solve broke down (non-finite value or loss of definiteness)."""


@dataclass(frozen=True)
class CgReport:
    iterations: int
    final_relative_residual: float
    converged: bool


def as_csr(matrix) -> sp.csr_matrix:
    """Accept a CSR matrix or any wrapper exposing one via ``.matrix``."""
    if hasattr(matrix, "matrix"):
        matrix = matrix.matrix
    if not sp.issparse(matrix):
        raise TypeError(f"expected a sparse matrix, got {type(matrix).__name__}")
    out = matrix.tocsr()
    if out.dtype != np.float64:
        out = out.astype(np.float64)
    return out


def spmv(matrix, x: np.ndarray) -> np.ndarray:
    """Sparse matrix times dense vector; per-row summation in ascending column
    order."""
    mat = as_csr(matrix)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != mat.shape[1]:
        raise ValueError(
            f"dimension mismatch: matrix is {mat.shape}, vector has {x.shape}")
    return mat @ x


def cg_solve(matrix, b: np.ndarray, tol: float = 1e-8, max_iter: int = 200,
             preconditioner: str | None = None) -> tuple[np.ndarray, CgReport]:
    """Conjugate gradient for a symmetric positive definite system.

    Stops when the relative residual drops to ``tol`` or after ``max_iter``
    iterations, whichever comes first; the iterate is still the Krylov-subspace
    minimizer at that point. ``preconditioner`` may be ``"jacobi"``.

    Returns the solution and a CgReport; the reported residual is recomputed
    from the returned iterate, not the recursion.
    """
    A = as_csr(matrix)
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (n,):
        raise ValueError(f"right-hand side has shape {b.shape}, expected ({n},)")
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side contains non-finite values")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if preconditioner not in (None, "jacobi"):
        raise ValueError(f"unknown preconditioner {preconditioner!r}")

    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros(n), CgReport(iterations=0, final_relative_residual=0.0,
                                     converged=True)
    inv_diag = None
    if preconditioner == "jacobi":
        diag = A.diagonal()
        if np.any(diag <= 0):
            raise SolverError("Jacobi preconditioner needs a positive diagonal")
        inv_diag = 1.0 / diag

    x = np.zeros(n)
    r = b.copy()
    z = r * inv_diag if inv_diag is not None else r.copy()
    p = z.copy()
    rz = float(r @ z)
    iterations = 0
    for it in range(1, max_iter + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if not np.isfinite(pAp) or pAp <= 0.0:
            raise SolverError(f"breakdown at iteration {it}: p'Ap = {pAp}")
        step = rz / pAp
        x += step * p
        r -= step * Ap
        iterations = it
        if float(np.linalg.norm(r)) <= tol * b_norm:
            break
        z = r * inv_diag if inv_diag is not None else r
        rz_new = float(r @ z)
        if not np.isfinite(rz_new):
            raise SolverError(f"breakdown at iteration {it}: r'z = {rz_new}")
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    true_residual = float(np.linalg.norm(b - A @ x)) / b_norm
    if not np.isfinite(true_residual):
        raise SolverError(f"non-finite residual after iteration {iterations}")
    return x, CgReport(iterations=iterations,
                       final_relative_residual=true_residual,
                       converged=true_residual <= tol)


def pearson(x: np.ndarray, y: np.ndarray) -> tuple[float, bool]:
    """Sample Pearson correlation in [-1, 1].

    Returns ``(value, valid)``; a constant input has no defined correlation, so
    the value is the sentinel 0.0 with ``valid=False``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.shape[0] < 2:
        raise ValueError("correlation needs at least two observations")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt(xc @ xc))
    sy = float(np.sqrt(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        return 0.0, False
    r = float(xc @ yc) / (sx * sy)
    return min(1.0, max(-1.0, r)), True


def standardize_columns(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Center and L2-normalize columns so Z[:, i] @ Z[:, j] is the Pearson
    correlation of columns i and j. Constant columns become zero vectors;
    the returned mask is False for them."""
    m = np.asarray(matrix, dtype=np.float64)
    z = m - m.mean(axis=0, keepdims=True)
    norms = np.sqrt(np.einsum("ij,ij->j", z, z))
    valid = norms > 0.0
    safe = np.where(valid, norms, 1.0)
    return z / safe, valid


def top_k(scores: np.ndarray, k: int, excluded=()) -> np.ndarray:
    """Indices of the k largest scores outside ``excluded``, ordered by
    (score desc, index asc). Returns fewer when candidates run out."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise ValueError("scores must be a vector")
    if k < 0:
        raise ValueError("k must be nonnegative")
    idx = np.arange(scores.shape[0], dtype=np.int64)
    excluded = np.asarray(list(excluded) if not isinstance(excluded, np.ndarray)
                          else excluded, dtype=np.int64)
    if excluded.size:
        keep = ~np.isin(idx, excluded)
        idx = idx[keep]
    if idx.size == 0 or k == 0:
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((idx, -scores[idx]))
    return idx[order[:k]]
