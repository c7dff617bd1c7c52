"""Upwind DG (P0) discretization of the cell-density equation.

Each time step solves

    |K| (u_K - u^m_K)/dt + sum_i a_upw(beta_i; u, e_K) + R_K u_K = |K| lam (u^m_K)^rho

with three separately upwinded velocities (self-diffusion written as
transport along ``-grad Pi1 log(u^m + eps)``, chemoattraction and
chemorepulsion) and the logistic/damping sinks lumped into ``R``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, FixedPointError, SolverError
from .fespace import CGField, DGField, element_gradients, project_pi1, reg_log
from .linalg import SolveReport, as_csr, solve_general, solve_mmatrix
from .mesh import Mesh
from .params import ModelParams

logger = logging.getLogger(__name__)

NEG_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class UpwindVelocity:
    """Elementwise-constant transport velocity, one d-vector per element."""

    mesh: Mesh
    vectors: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=float)
        if vec.shape != (self.mesh.num_elements, self.mesh.dim):
            raise ValueError(f"velocity needs shape {(self.mesh.num_elements, self.mesh.dim)}")
        if not np.isfinite(vec).all():
            raise ValueError("velocity has non-finite entries")
        object.__setattr__(self, "vectors", vec)

    @classmethod
    def from_parts(cls, coefficient, gradient, sign=1.0):
        """``sign * coefficient_K * gradient_K``."""
        return cls(gradient.mesh, sign * np.asarray(coefficient)[:, None] * gradient.vectors)


@dataclass(frozen=True)
class CellStepMatrices:
    upwind: sp.csr_matrix
    reaction: np.ndarray  # R_KK, already scaled by |K|
    mass: np.ndarray  # |K|
    rhs: np.ndarray

    def system(self, active=None) -> sp.csr_matrix:
        """Mass plus transport/reaction acting on the columns flagged in ``active``."""
        B = self.upwind + sp.diags(self.reaction)
        if active is not None:
            B = B @ sp.diags(active.astype(float))
        return as_csr(B + sp.diags(self.mass))


def facet_fluxes(mesh: Mesh, beta: UpwindVelocity) -> np.ndarray:
    """``|e| * {beta} . n_e`` on every interior facet."""
    K, L = mesh.interior_elements.T
    avg = 0.5 * (beta.vectors[K] + beta.vectors[L])
    return mesh.interior_measures * np.einsum("ij,ij->i", avg, mesh.interior_normals)


def assemble_upwind(mesh: Mesh, beta: UpwindVelocity) -> sp.csr_matrix:
    """Matrix of the upwind form: row = test element, column = trial element.

    Only interior facets contribute (no-flux boundary). Per facet
    ``e = K|L`` with flux ``q``: ``(K,K) += q+``, ``(K,L) -= q-``,
    ``(L,K) -= q+``, ``(L,L) += q-``.
    """
    q = facet_fluxes(mesh, beta)
    qp = np.maximum(q, 0.0)
    qm = np.maximum(-q, 0.0)
    K, L = mesh.interior_elements.T
    rows = np.concatenate([K, K, L, L])
    cols = np.concatenate([K, L, K, L])
    vals = np.concatenate([qp, -qm, -qp, qm])
    n = mesh.num_elements
    return as_csr(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))


def _nonneg(u: DGField, what):
    if u.values.min() < -NEG_TOL:
        raise DomainError(f"{what} must be nonnegative (min {u.values.min():.3e})")
    return np.maximum(u.values, 0.0)


def log_gradient(u_prev: DGField, eps):
    """Elementwise gradient of the consistent P1 projection of ``log(u + eps)``."""
    return element_gradients(project_pi1(reg_log(u_prev, eps)))


def build_velocities(u_prev: DGField, v_next: CGField, w_next: CGField, params: ModelParams,
                     log_grad=None):
    """Diffusion, attraction and repulsion velocities of the upwind terms."""
    u = _nonneg(u_prev, "u_prev")
    g = log_gradient(u_prev, params.eps) if log_grad is None else log_grad

    def coef(n):
        return (u + 1.0) ** (n - 1.0)

    b1 = UpwindVelocity.from_parts(coef(params.n1), g, -1.0)
    b2 = UpwindVelocity.from_parts(params.chi * coef(params.n2), element_gradients(v_next), 1.0)
    b3 = UpwindVelocity.from_parts(params.xi * coef(params.n3), element_gradients(w_next), -1.0)
    return b1, b2, b3


def cell_step_matrices(u_prev: DGField, v_next: CGField, w_next: CGField,
                       params: ModelParams, dt: float) -> CellStepMatrices:
    if not dt > 0:
        raise ValueError("dt must be positive")
    mesh = u_prev.mesh
    u = _nonneg(u_prev, "u_prev")
    g = log_gradient(u_prev, params.eps)
    betas = build_velocities(u_prev, v_next, w_next, params, log_grad=g)
    A = assemble_upwind(mesh, betas[0])
    for b in betas[1:]:
        A = A + assemble_upwind(mesh, b)
    meas = mesh.element_measures
    # numpy gives 0.0**0.0 == 1, the convention used for k = 1 or gamma = 1 at u = 0
    react = params.mu * u ** (params.k - 1.0)
    if params.c:
        react = react + params.c * u ** (params.gamma - 1.0) * g.norms() ** params.gamma
    rhs = meas * (u / dt + params.lam * u**params.rho)
    return CellStepMatrices(as_csr(A), meas * react, meas / dt, rhs)


def _solve(A, rhs, backend, tol):
    if backend == "lu":
        x, report = solve_mmatrix(A, rhs)
    else:
        x, report = solve_general(A, rhs, tol=tol)
    if not report.converged:
        raise SolverError("cell-density solve did not converge", report)
    return x, report


def step_cell_linear(u_prev, v_next, w_next, params, dt, *, backend="lu", tol=1e-10,
                     matrices=None):
    """One step of the linear scheme. The result is returned unmodified."""
    mats = cell_step_matrices(u_prev, v_next, w_next, params, dt) if matrices is None else matrices
    x, report = _solve(mats.system(), mats.rhs, backend, tol)
    logger.debug("linear cell step: min u = %.3e", x.min())
    return DGField(u_prev.mesh, x), report


def step_cell_truncated(u_prev, v_next, w_next, params, dt, fp_tol=1e-10, fp_max_iter=200, *,
                        method="active-set", backend="lu", tol=1e-10, matrices=None):
    """Solve the scheme with transport and sinks acting on the positive part of the unknown.

    ``method="active-set"``: each iterate solves the linear system with the
    transport/sink columns switched off where the previous iterate is
    negative; a fixed point with a stable sign pattern solves the truncated
    scheme exactly. ``method="picard"``: explicit fixed-point map
    ``u = u^m + dt/|K| (lam |K| (u^m)^rho - B u_hat+)``, which needs ``dt``
    small enough to contract.

    Returns ``(u_next, iterations)``; raises FixedPointError carrying the
    last iterate if ``fp_max_iter`` is exceeded.
    """
    mats = cell_step_matrices(u_prev, v_next, w_next, params, dt) if matrices is None else matrices
    B = None
    if method == "picard":
        B = as_csr(mats.upwind + sp.diags(mats.reaction))
    elif method != "active-set":
        raise ValueError(f"unknown method {method!r}")
    u_hat = np.array(u_prev.values, dtype=float)
    for it in range(1, fp_max_iter + 1):
        if B is None:
            active = u_hat >= 0
            u_new, _ = _solve(mats.system(active), mats.rhs, backend, tol)
        else:
            active = None
            u_new = (mats.rhs - B @ np.maximum(u_hat, 0.0)) / mats.mass
        change = np.abs(u_new - u_hat).max()
        stable = active is None or np.array_equal(u_new >= 0, active)
        if change <= fp_tol * (1.0 + np.abs(u_hat).max()) and stable:
            if u_new.min() < -NEG_TOL:
                raise SolverError(f"truncated step produced negative density {u_new.min():.3e}")
            return DGField(u_prev.mesh, u_new), it
        if not np.isfinite(u_new).all():
            break
        u_hat = u_new
    raise FixedPointError(f"fixed-point iteration did not converge in {fp_max_iter} iterations",
                          last_iterate=u_hat, iterations=fp_max_iter)


# ------------------------------------------------------------ parameter checks


@dataclass(frozen=True)
class ConditionReport:
    name: str
    satisfied: bool
    margin: float
    detail: str = ""
    value: object = None


def _q(x) -> Fraction:
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


def condgamma_threshold(params: ModelParams, dim: int) -> Fraction:
    """``max{1, d/(d+1)(n2+alpha), tau d/(d+1)(n3+beta)}`` in exact arithmetic."""
    r = Fraction(dim, dim + 1)
    return max(
        Fraction(1),
        r * (_q(params.n2) + _q(params.alpha)),
        _q(params.tau) * r * (_q(params.n3) + _q(params.beta)),
    )


def mass_ceiling(params: ModelParams, initial_mass: float, volume: float) -> float:
    """Upper bound on the total mass of the continuous solution (inf if mu = 0 or k <= rho)."""
    if params.mu <= 0 or params.k <= params.rho:
        return float("inf")
    e = params.k - params.rho
    return max(initial_mass, (params.lam / params.mu * volume**e) ** (1.0 / e))


def validate_params(params: ModelParams, dim: int, *, initial_mass=None, volume=None):
    """Advisory checks; never raises. Returns a list of ConditionReport."""
    thr = condgamma_threshold(params, dim)
    g = _q(params.gamma)
    out = [
        ConditionReport(
            "condgamma",
            thr < g <= 2,
            float(min(g - thr, 2 - g)),
            f"{float(thr):.6g} < gamma <= 2 (threshold {thr})",
            thr,
        ),
        ConditionReport("logistic", 1 <= params.rho < params.k, params.k - params.rho,
                        "1 <= rho < k"),
        ConditionReport("gamma_range", 1 <= params.gamma <= 2,
                        min(params.gamma - 1, 2 - params.gamma), "gamma in [1, 2]"),
    ]
    for name in ("chi", "xi", "lam", "mu", "c", "alpha", "beta"):
        val = getattr(params, name)
        out.append(ConditionReport(f"{name}_positive", val > 0, val, f"{name} > 0"))
    if initial_mass is not None and volume is not None:
        ceil = mass_ceiling(params, initial_mass, volume)
        out.append(ConditionReport("mass_ceiling", True, ceil - initial_mass,
                                   "bound on the total cell mass", ceil))
    return out
