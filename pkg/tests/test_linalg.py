import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from chemodg.errors import SolverError
from chemodg.fespace import DGField, p1_lumped_mass, p1_stiffness_matrix
from chemodg.linalg import (
    as_csr,
    solve_general,
    solve_mean_zero_poisson,
    solve_mmatrix,
    solve_spd,
)
from chemodg.mesh import generate_disk_mesh
from chemodg.signals import nodal_source
from oracles import pin_one_node_poisson


def test_as_csr_canonical():
    A = sp.coo_matrix(([1.0, 2.0, 3.0], ([0, 0, 1], [1, 1, 0])), shape=(2, 2))
    C = as_csr(A)
    assert C.has_canonical_format
    np.testing.assert_array_equal(C.toarray(), [[0, 3], [3, 0]])


def test_identity(rng):
    b = rng.standard_normal(7)
    x, rep = solve_spd(sp.identity(7), b)
    np.testing.assert_allclose(x, b, rtol=1e-14)
    assert rep.converged and rep.iterations <= 1


def test_diagonal():
    b = np.arange(1.0, 6.0) * 3
    x, rep = solve_spd(sp.diags(np.arange(1.0, 6.0)), b)
    np.testing.assert_allclose(x, 3.0, rtol=1e-12)
    assert rep.converged


def test_random_spd_against_dense(rng):
    B = rng.standard_normal((50, 50))
    A = B.T @ B + np.eye(50)
    b = rng.standard_normal(50)
    x, rep = solve_spd(sp.csr_matrix(A), b)
    assert rep.converged
    np.testing.assert_allclose(x, np.linalg.solve(A, b), atol=1e-8)


def test_upper_triangular():
    A = np.array([[2.0, 1.0, -1.0], [0.0, 3.0, 2.0], [0.0, 0.0, 4.0]])
    b = np.array([1.0, 2.0, 8.0])
    x3 = b[2] / A[2, 2]
    x2 = (b[1] - A[1, 2] * x3) / A[1, 1]
    x1 = (b[0] - A[0, 1] * x2 - A[0, 2] * x3) / A[0, 0]
    x, rep = solve_general(sp.csr_matrix(A), b)
    assert rep.converged
    np.testing.assert_allclose(x, [x1, x2, x3], atol=1e-10)


def test_diagonally_dominant_against_dense(rng):
    A = rng.uniform(-1, 1, (50, 50))
    A += np.diag(np.abs(A).sum(axis=1) + 1)
    b = rng.standard_normal(50)
    x, rep = solve_general(sp.csr_matrix(A), b)
    assert rep.converged
    np.testing.assert_allclose(x, np.linalg.solve(A, b), atol=1e-8)


def test_singular_not_converged():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    _, rep = solve_general(A, np.array([1.0, 0.0]), max_iter=50)
    assert not rep.converged
    _, rep = solve_spd(A, np.array([1.0, 0.0]), max_iter=50)
    assert not rep.converged


def _random_mmatrix(rng, n, density=0.3):
    off = -rng.uniform(0, 1, (n, n)) * (rng.uniform(size=(n, n)) < density)
    np.fill_diagonal(off, 0.0)
    # column diagonal dominance, as in the cell-density systems
    diag = -off.sum(axis=0) + rng.uniform(1e-3, 1.0, n)
    return off + np.diag(diag)


@given(st.integers(2, 40), st.integers(0, 2**31))
def test_mmatrix_solution_keeps_sign(n, seed):
    rng = np.random.default_rng(seed)
    A = _random_mmatrix(rng, n)
    b = rng.uniform(0, 1, n) * (rng.uniform(size=n) < 0.5)
    x, rep = solve_mmatrix(sp.csr_matrix(A), b)
    assert rep.converged
    assert x.min() >= 0.0
    np.testing.assert_allclose(A @ x, b, atol=1e-10 * (1 + np.abs(b).max()))


def test_mmatrix_rejects_singular():
    with pytest.raises(SolverError):
        solve_mmatrix(sp.csr_matrix(np.zeros((3, 3))), np.ones(3))


def test_mean_zero_trivial_cases(crisscross8):
    K = p1_stiffness_matrix(crisscross8)
    D = p1_lumped_mass(crisscross8)
    x, rep = solve_mean_zero_poisson(K, np.zeros(len(D)), D)
    assert rep.converged and not x.any()
    f = np.full(len(D), 4.2)
    x, _ = solve_mean_zero_poisson(K, D * (f - (D @ f) / D.sum()), D)
    assert np.abs(x).max() < 1e-12


def test_mean_zero_incompatible(crisscross8):
    K = p1_stiffness_matrix(crisscross8)
    with pytest.raises(SolverError):
        solve_mean_zero_poisson(K, np.ones(K.shape[0]), p1_lumped_mass(crisscross8))


def test_mean_zero_disk_against_dense():
    mesh = generate_disk_mesh(1.0, 0.1)
    u = DGField(mesh, 100 * np.exp(-35 * (mesh.centroids**2).sum(axis=1)))
    D = p1_lumped_mass(mesh)
    f = nodal_source(u, 1.5)
    b = D * (f - (D @ f) / D.sum())
    K = p1_stiffness_matrix(mesh)
    x, rep = solve_mean_zero_poisson(K, b, D)
    assert rep.converged
    assert abs(D @ x) / D.sum() <= 1e-10 * np.abs(x).max()
    assert np.linalg.norm(K @ x - b) <= 1e-8 * np.linalg.norm(b)
    ref = pin_one_node_poisson(K, b, D)
    assert np.abs(x - ref).max() <= 1e-8 * np.abs(ref).max()


def test_mean_zero_initial_guess_shift(crisscross8, rng):
    K = p1_stiffness_matrix(crisscross8)
    D = p1_lumped_mass(crisscross8)
    b = rng.standard_normal(len(D))
    b -= b.mean()
    x0 = rng.standard_normal(len(D))
    xa, _ = solve_mean_zero_poisson(K, b, D, x0=x0)
    xb, _ = solve_mean_zero_poisson(K, b, D, x0=x0 + 17.0)
    assert np.abs(xa - xb).max() <= 1e-12 * np.abs(xa).max()


def test_deterministic(crisscross8, rng):
    K = p1_stiffness_matrix(crisscross8)
    b = rng.standard_normal(K.shape[0])
    A = K + sp.identity(K.shape[0])
    assert np.array_equal(solve_spd(A, b)[0], solve_spd(A, b)[0])
    assert np.array_equal(solve_mmatrix(A, np.abs(b))[0], solve_mmatrix(A, np.abs(b))[0])
