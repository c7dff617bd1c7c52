"""P0 (discontinuous) and P1 (continuous) spaces, their operators and projections."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, SolverError
from .linalg import as_csr, solve_spd
from .mesh import Mesh


def _check(values, n, what):
    values = np.asarray(values, dtype=float)
    if values.shape != (n,):
        raise ValueError(f"{what} needs {n} values, got shape {values.shape}")
    if not np.isfinite(values).all():
        raise ValueError(f"{what} has non-finite values")
    return values


@dataclass(frozen=True, eq=False)
class DGField:
    """Piecewise-constant field: one value per element."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check(self.values, self.mesh.num_elements, "DGField"))

    def integral(self) -> float:
        return float(self.mesh.element_measures @ self.values)


@dataclass(frozen=True, eq=False)
class CGField:
    """Continuous piecewise-linear field: one value per vertex."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check(self.values, self.mesh.num_vertices, "CGField"))

    def integral(self) -> float:
        # the vertex rule is exact for P1
        return float(p1_lumped_mass(self.mesh) @ self.values)


@dataclass(frozen=True, eq=False)
class ElementGradientField:
    mesh: Mesh
    vectors: np.ndarray  # (ne, d)

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=1)


def _assemble(mesh, local):
    """Scatter per-element (d+1)x(d+1) blocks into a global CSR matrix."""
    e = mesh.elements
    nloc = e.shape[1]
    rows = np.repeat(e, nloc, axis=1).ravel()
    cols = np.tile(e, (1, nloc)).ravel()
    n = mesh.num_vertices
    return as_csr(sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)))


@lru_cache(maxsize=16)
def p1_mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    d = mesh.dim
    ref = (np.ones((d + 1, d + 1)) + np.eye(d + 1)) / ((d + 1) * (d + 2))
    return _assemble(mesh, mesh.element_measures[:, None, None] * ref)


@lru_cache(maxsize=16)
def p1_lumped_mass(mesh: Mesh) -> np.ndarray:
    """Diagonal of the lumped mass matrix, as a vector.

    Taken as the row sums of the consistent mass matrix, which equal the
    vertex-quadrature weights ``sum |K|/(d+1)`` up to rounding.
    """
    out = np.asarray(p1_mass_matrix(mesh).sum(axis=1)).ravel()
    out.setflags(write=False)
    return out


def p1_stiffness_matrix(mesh: Mesh, coefficient=None) -> sp.csr_matrix:
    """Stiffness matrix of ``-div(a grad .)`` with elementwise-constant ``a`` (default 1)."""
    if coefficient is None:
        return _unit_stiffness(mesh)
    a = coefficient.values if isinstance(coefficient, DGField) else np.asarray(coefficient, float)
    if a.shape != (mesh.num_elements,):
        raise ValueError("coefficient must have one value per element")
    if (a < 0).any():
        raise ValueError("stiffness coefficient must be nonnegative")
    return _stiffness(mesh, a)


def _stiffness(mesh, a):
    g = mesh.barycentric_gradients
    local = np.einsum("eid,ejd->eij", g, g) * (a * mesh.element_measures)[:, None, None]
    return _assemble(mesh, local)


@lru_cache(maxsize=16)
def _unit_stiffness(mesh):
    return _stiffness(mesh, np.ones(mesh.num_elements))


@lru_cache(maxsize=16)
def stiffness_is_z_matrix(mesh: Mesh) -> bool:
    """True if all off-diagonal stiffness entries are <= 0 (discrete maximum principle)."""
    K = _unit_stiffness(mesh).tocoo()
    off = K.row != K.col
    tol = 1e-12 * np.abs(K.diagonal()).max()
    return bool((K.data[off] <= tol).all())


# symmetric rules on the reference simplex: (barycentric points, weights summing to 1)
def _quadrature(dim):
    if dim == 2:
        pts = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        return pts, np.full(3, 1.0 / 3.0)
    a, b = 0.5854101966249685, 0.1381966011250105
    pts = np.full((4, 4), b)
    np.fill_diagonal(pts, a)
    return pts, np.full(4, 0.25)


def quadrature_points(mesh: Mesh):
    """Physical quadrature points (ne, nq, d), barycentric coordinates and weights."""
    lam, w = _quadrature(mesh.dim)
    x = np.einsum("qi,eid->eqd", lam, mesh.vertices[mesh.elements])
    return x, lam, w


def _evaluate(g, mesh):
    x, lam, w = quadrature_points(mesh)
    ne, nq, d = x.shape
    vals = np.asarray(g(x.reshape(-1, d)), dtype=float).reshape(ne, nq)
    return vals, lam, w


def element_average(g, mesh: Mesh) -> DGField:
    """Reduce a pointwise function ``g(points (n, d)) -> (n,)`` to P0 by elementwise quadrature."""
    vals, _, w = _evaluate(g, mesh)
    return DGField(mesh, vals @ w)


def interpolate_p1(g, mesh: Mesh) -> CGField:
    return CGField(mesh, np.asarray(g(mesh.vertices), dtype=float))


def load_vector(g, mesh: Mesh) -> np.ndarray:
    """``b_i = integral of g * phi_i`` for a P0, P1 or pointwise-evaluable ``g``."""
    if isinstance(g, DGField):
        share = np.repeat(g.values * mesh.element_measures / (mesh.dim + 1), mesh.dim + 1)
        return np.bincount(mesh.elements.ravel(), weights=share, minlength=mesh.num_vertices)
    if isinstance(g, CGField):
        return p1_mass_matrix(mesh) @ g.values
    if callable(g):
        vals, lam, w = _evaluate(g, mesh)
        local = np.einsum("eq,q,qi->ei", vals, w, lam) * mesh.element_measures[:, None]
        return np.bincount(mesh.elements.ravel(), weights=local.ravel(), minlength=mesh.num_vertices)
    raise TypeError(f"cannot project object of type {type(g).__name__}")


def _mesh_of(g, mesh):
    if isinstance(g, (DGField, CGField)):
        return g.mesh
    if mesh is None:
        raise TypeError("a mesh is required to project a callable")
    return mesh


def project_pi1(g, mesh: Mesh | None = None, tol=1e-12) -> CGField:
    """L2 projection onto P1 with the consistent mass matrix."""
    mesh = _mesh_of(g, mesh)
    b = load_vector(g, mesh)
    D = p1_lumped_mass(mesh)
    x, report = solve_spd(p1_mass_matrix(mesh), b, tol=tol, x0=b / D)
    if not report.converged:
        raise SolverError("mass-matrix solve did not converge", report)
    return CGField(mesh, x)


def project_pih1(g, mesh: Mesh | None = None) -> CGField:
    """Projection onto P1 with the lumped mass; preserves the sign of ``g``."""
    mesh = _mesh_of(g, mesh)
    return CGField(mesh, load_vector(g, mesh) / p1_lumped_mass(mesh))


def element_gradients(f: CGField) -> ElementGradientField:
    mesh = f.mesh
    vec = np.einsum("eid,ei->ed", mesh.barycentric_gradients, f.values[mesh.elements])
    return ElementGradientField(mesh, vec)


def reg_log(u: DGField, eps: float, neg_tol=1e-12) -> DGField:
    """Elementwise ``log(u + eps)``."""
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    if u.values.min() < -neg_tol:
        raise DomainError(f"reg_log of negative density (min {u.values.min():.3e})")
    arg = u.values + eps
    if (arg <= 0).any():
        raise DomainError("log argument not positive")
    return DGField(u.mesh, np.log(arg))


def positive_part(x):
    return np.maximum(x, 0.0)


def negative_part(x):
    return -np.minimum(x, 0.0)
