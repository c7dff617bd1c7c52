"""Sparse storage and linear solvers.

Matrices are ``scipy.sparse.csr_matrix`` in canonical form (sorted, unique
column indices). Krylov solvers are Jacobi preconditioned. ``solve_mmatrix``
is a direct LU route for M-matrices whose computed solution keeps the sign
of a nonnegative right-hand side exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    method: str = ""


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    return A


def _relres(A, x, b):
    nb = np.linalg.norm(b)
    r = np.linalg.norm(b - A @ x)
    return r / nb if nb > 0 else r


def _jacobi(A):
    d = A.diagonal().copy()
    d[d == 0] = 1.0
    inv = 1.0 / d
    n = A.shape[0]
    return spla.LinearOperator((n, n), matvec=lambda r: inv * r, dtype=float)


def _krylov(method, A, b, tol, max_iter, x0, name, M=None):
    A = as_csr(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    max_iter = 10 * n if max_iter is None else max_iter
    if not np.any(b):
        return np.zeros(n), SolveReport(0, 0.0, True, name)
    M = _jacobi(A) if M is None else M
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    # the recursive residual can drift from the true one; restart a few times
    res = _relres(A, x, b)
    for _ in range(4):
        if res <= tol or count[0] >= max_iter:
            break
        with np.errstate(all="ignore"):
            x_new, _info = method(A, b, x0=x, rtol=tol, atol=0.0, maxiter=max(1, max_iter - count[0]),
                                  M=M, callback=cb)
        if not np.all(np.isfinite(x_new)):
            break
        res_new = _relres(A, x_new, b)
        if not res_new < res:
            break
        x, res = x_new, res_new
    return x, SolveReport(count[0], float(res), bool(res <= tol), name)


def solve_spd(A, b, tol=1e-10, max_iter=None, x0=None):
    """Preconditioned conjugate gradients. Non-convergence is reported, not raised."""
    return _krylov(spla.cg, A, b, tol, max_iter, x0, "cg")


def solve_general(A, b, tol=1e-10, max_iter=None, x0=None):
    """Jacobi-preconditioned BiCGStab for nonsymmetric systems."""
    return _krylov(spla.bicgstab, A, b, tol, max_iter, x0, "bicgstab")


def solve_mmatrix(A, b):
    """Direct solve for an M-matrix, preserving nonnegativity exactly.

    LU with a symmetric fill-reducing ordering and diagonal pivots keeps
    ``L`` and ``U`` sign-structured (nonpositive off-diagonals), so the
    triangular solves only add nonnegative terms when ``b >= 0``.
    """
    A = sp.csc_matrix(A, dtype=float)
    b = np.asarray(b, dtype=float)
    try:
        lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise SolverError(f"LU factorization failed: {exc}",
                          SolveReport(0, float("inf"), False, "lu")) from None
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise SolverError("LU factorization left the diagonal; matrix is not an M-matrix",
                          SolveReport(0, float("inf"), False, "lu"))
    x = lu.solve(b)
    res = _relres(A, x, b)
    return x, SolveReport(1, float(res), bool(np.isfinite(res)), "lu")


def solve_mean_zero_poisson(K, b, weights, tol=1e-10, max_iter=None, compat_tol=1e-10, x0=None):
    """Solve the singular Neumann system ``K x = b`` with zero weighted mean.

    ``K`` must have constants as its kernel. ``b`` must sum to zero
    (relative to ``sum|b|``). The Krylov iteration runs on the
    constants-orthogonal complement; the result is shifted so that
    ``sum(weights * x) == 0``. The constant part of ``x0`` is ignored.
    """
    K = as_csr(K)
    b = np.asarray(b, dtype=float)
    w = np.asarray(weights, dtype=float)
    n = K.shape[0]
    scale = np.abs(b).sum()
    if abs(b.sum()) > compat_tol * max(scale, np.finfo(float).tiny):
        raise SolverError(f"incompatible right-hand side: sum(b)={b.sum():.3e}")
    b = b - b.mean()
    if not np.any(b):
        return np.zeros(n), SolveReport(0, 0.0, True, "cg-mean-zero")

    def project(x):
        return x - x.mean()

    A = spla.LinearOperator((n, n), matvec=lambda x: project(K @ project(x)), dtype=float)
    d = K.diagonal().copy()
    d[d <= 0] = 1.0
    M = spla.LinearOperator((n, n), matvec=lambda r: project(r / d), dtype=float)
    max_iter = 10 * n if max_iter is None else max_iter
    count = [0]

    def cb(_):
        count[0] += 1

    x = np.zeros(n) if x0 is None else project(np.asarray(x0, dtype=float))
    res = 1.0
    nb = np.linalg.norm(b)
    for _ in range(4):
        x, _info = spla.cg(A, b, x0=x, rtol=tol, atol=0.0, maxiter=max(1, max_iter - count[0]), M=M, callback=cb)
        x = project(x)
        res = np.linalg.norm(b - K @ x) / nb
        if res <= tol or count[0] >= max_iter:
            break
    x = x - (w @ x) / w.sum()
    return x, SolveReport(count[0], float(res), bool(res <= tol), "cg-mean-zero")
