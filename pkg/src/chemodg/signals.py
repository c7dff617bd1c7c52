"""One-step solvers for the chemical signals v and w.

Local model: backward Euler (``tau=1``) or elliptic (``tau=0``) P1
equations with lumped mass and a lumped source, so the system is an
M-matrix on meshes whose stiffness matrix has nonpositive off-diagonals.
Nonlocal model: a Neumann Poisson problem driven by the deviation of the
source from its mean, normalised to zero mean.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, InvariantViolation, SolverError
from .fespace import (
    CGField,
    DGField,
    p1_lumped_mass,
    p1_stiffness_matrix,
    project_pih1,
    stiffness_is_z_matrix,
)
from .linalg import solve_mean_zero_poisson, solve_mmatrix, solve_spd

logger = logging.getLogger(__name__)

NEG_TOL = 1e-12
_warned_meshes: set[int] = set()


@dataclass(frozen=True)
class SignalParams:
    tau: int
    decay: float
    exponent: float
    shift: float = 0.0

    def __post_init__(self):
        if self.tau not in (0, 1):
            raise ValueError("tau must be 0 or 1")
        if self.decay < 0 or self.exponent <= 0 or self.shift < 0:
            raise ValueError("need decay >= 0, exponent > 0, shift >= 0")


def source(s, exponent, shift=0.0):
    """``f(s) = (s + shift)**exponent`` for ``s >= 0``."""
    return (np.asarray(s, dtype=float) + shift) ** exponent


def nodal_source(u_prev: DGField, exponent, shift=0.0) -> np.ndarray:
    """Source values at the vertices, from the sign-preserving projection of ``u_prev``."""
    s = project_pih1(u_prev).values
    if s.min() < -NEG_TOL:
        raise DomainError(f"signal source of negative density (min {s.min():.3e})")
    return source(np.maximum(s, 0.0), exponent, shift)


def solve_local(mesh, s_prev, src, decay, tau, dt, *, backend="lu", tol=1e-10, check=True) -> CGField:
    """Solve ``(tau/dt) D (s - s_prev) + K s + decay D s = D src`` for nodal ``s``."""
    D = p1_lumped_mass(mesh)
    K = p1_stiffness_matrix(mesh)
    diag = decay * D
    rhs = D * src
    if tau:
        if s_prev is None:
            raise ValueError("tau=1 needs the previous signal")
        prev = s_prev.values if isinstance(s_prev, CGField) else np.asarray(s_prev, float)
        diag = diag + D / dt
        rhs = rhs + D * prev / dt
    if not (diag > 0).all():
        raise SolverError("elliptic signal equation needs a positive decay rate")
    A = (K + sp.diags(diag)).tocsr()
    if backend == "lu":
        x, report = solve_mmatrix(A, rhs)
    else:
        x, report = solve_spd(A, rhs, tol=tol)
    if not report.converged:
        raise SolverError("signal solve did not converge", report)
    if check and x.min() < -NEG_TOL:
        if stiffness_is_z_matrix(mesh):
            raise InvariantViolation(f"negative signal {x.min():.3e} on a monotone mesh")
        if id(mesh) not in _warned_meshes:
            _warned_meshes.add(id(mesh))
            logger.warning("mesh stiffness has positive off-diagonals; signal went negative (%.3e)", x.min())
    return CGField(mesh, x)


def step_signal_local(u_prev: DGField, s_prev, decay, source_exponent, tau, dt, *,
                      shift=0.0, backend="lu", tol=1e-10) -> CGField:
    mesh = u_prev.mesh
    # on non-monotone meshes a slightly negative previous signal is expected (and was warned about)
    if tau and s_prev is not None and np.min(s_prev.values) < -NEG_TOL and stiffness_is_z_matrix(mesh):
        raise DomainError("previous signal must be nonnegative")
    src = nodal_source(u_prev, source_exponent, shift)
    return solve_local(mesh, s_prev, src, decay, tau, dt, backend=backend, tol=tol)


def solve_nonlocal(mesh, src, *, tol=1e-10) -> CGField:
    """Zero-mean P1 solution of ``K s = D (src - mean src)`` for nodal source values."""
    D = p1_lumped_mass(mesh)
    src = np.asarray(src, dtype=float)
    mean = (D @ src) / D.sum()
    b = D * (src - mean)
    # compatible by construction; sum(b) is rounding only, which the solver projects out
    x, report = solve_mean_zero_poisson(p1_stiffness_matrix(mesh), b, D, tol=tol, compat_tol=np.inf)
    if not report.converged:
        raise SolverError("nonlocal signal solve did not converge", report)
    return CGField(mesh, x)


def step_signal_nonlocal(u_prev: DGField, source_exponent, *, shift=0.0, tol=1e-10) -> CGField:
    """Zero-mean solution of ``-Lap s = f(u) - mean f(u)`` with homogeneous Neumann data."""
    return solve_nonlocal(u_prev.mesh, nodal_source(u_prev, source_exponent, shift), tol=tol)
