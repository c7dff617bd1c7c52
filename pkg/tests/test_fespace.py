import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chemodg.errors import DomainError
from chemodg.fespace import (
    CGField,
    DGField,
    element_average,
    element_gradients,
    interpolate_p1,
    negative_part,
    p1_lumped_mass,
    p1_mass_matrix,
    p1_stiffness_matrix,
    positive_part,
    project_pi1,
    project_pih1,
    reg_log,
    stiffness_is_z_matrix,
)
from chemodg.mesh import build_mesh, generate_ball_mesh
from oracles import dense_p1_matrices, jittered_square, simplex_geometry


def test_single_triangle_mass(triangle):
    M = p1_mass_matrix(triangle).toarray()
    expected = np.full((3, 3), 1 / 24) + np.eye(3) / 24
    np.testing.assert_allclose(M, expected, atol=1e-16)
    np.testing.assert_allclose(p1_lumped_mass(triangle), [1 / 6] * 3, atol=1e-16)


def test_single_triangle_stiffness(triangle):
    K = p1_stiffness_matrix(triangle).toarray()
    np.testing.assert_allclose(K, [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]], atol=1e-15)


def test_square_matches_hand_assembly(square2):
    # triangles (0,1,2) and (0,2,3); each local block is (1/24)(1 + delta_ij)
    M = np.zeros((4, 4))
    for tri in ([0, 1, 2], [0, 2, 3]):
        for a in tri:
            for b in tri:
                M[a, b] += (2 if a == b else 1) / 24
    np.testing.assert_allclose(p1_mass_matrix(square2).toarray(), M, atol=1e-16)
    # diagonal vertices 0 and 2 belong to both triangles
    np.testing.assert_allclose(p1_lumped_mass(square2), [1 / 3, 1 / 6, 1 / 3, 1 / 6], atol=1e-16)
    np.testing.assert_allclose(p1_lumped_mass(square2), M.sum(axis=1), atol=1e-16)


@pytest.mark.parametrize("mesh_fn", [lambda: jittered_square(4, 5, rng=np.random.default_rng(3)),
                                     lambda: generate_ball_mesh(1.0, 0.5)])
def test_matrices_against_dense_oracle(mesh_fn):
    mesh = mesh_fn()
    M, D, K = dense_p1_matrices(mesh)
    np.testing.assert_allclose(p1_mass_matrix(mesh).toarray(), M, atol=1e-14)
    np.testing.assert_allclose(p1_lumped_mass(mesh), D, atol=1e-14)
    np.testing.assert_allclose(p1_stiffness_matrix(mesh).toarray(), K, atol=1e-12)
    one = np.ones(mesh.num_vertices)
    assert abs(one @ p1_mass_matrix(mesh) @ one - mesh.volume) < 1e-12
    assert abs(p1_lumped_mass(mesh).sum() - mesh.volume) < 1e-12
    assert np.abs(p1_stiffness_matrix(mesh) @ one).max() < 1e-12
    np.testing.assert_array_equal(p1_lumped_mass(mesh), np.asarray(p1_mass_matrix(mesh).sum(axis=1)).ravel())


def test_stiffness_psd_and_kernel(rng):
    mesh = jittered_square(3, 3, rng=rng)
    K = p1_stiffness_matrix(mesh).toarray()
    for _ in range(100):
        x = rng.standard_normal(mesh.num_vertices)
        assert x @ K @ x >= -1e-12
    assert np.linalg.matrix_rank(K, tol=1e-10) == mesh.num_vertices - 1


def test_weighted_stiffness(rng):
    mesh = jittered_square(3, 2, rng=rng)
    a = rng.uniform(0.5, 2.0, mesh.num_elements)
    K = np.zeros((mesh.num_vertices,) * 2)
    for e, coef in zip(mesh.elements, a):
        vol, g = simplex_geometry(mesh.vertices[e])
        K[np.ix_(e, e)] += coef * vol * g @ g.T
    np.testing.assert_allclose(p1_stiffness_matrix(mesh, DGField(mesh, a)).toarray(), K, atol=1e-12)
    with pytest.raises(ValueError):
        p1_stiffness_matrix(mesh, -a)


def test_z_matrix_flags(crisscross8):
    assert stiffness_is_z_matrix(crisscross8)
    # a flat obtuse triangle next to a tall one gives a positive coupling across their edge
    m = build_mesh([[0, 0], [1, 0], [0.5, 0.1], [0.5, -1]], [[0, 1, 2], [0, 3, 1]])
    assert not stiffness_is_z_matrix(m)


def test_pi1_reproduces_constants_and_linears(rng):
    mesh = jittered_square(4, 4, rng=rng)
    c = project_pi1(lambda x: np.full(len(x), 3.0), mesh)
    assert np.abs(c.values - 3.0).max() < 1e-12
    lin = project_pi1(lambda x: x[:, 0] + 2 * x[:, 1], mesh)
    expect = mesh.vertices[:, 0] + 2 * mesh.vertices[:, 1]
    assert np.abs(lin.values - expect).max() < 1e-10
    assert np.abs(project_pi1(CGField(mesh, expect)).values - expect).max() < 1e-10


def test_pi1_checkerboard_dense(square2):
    g = DGField(square2, [1.0, -2.0])
    M, _, _ = dense_p1_matrices(square2)
    b = np.zeros(4)
    for val, tri in zip(g.values, ([0, 1, 2], [0, 2, 3])):
        b[tri] += val * 0.5 / 3
    np.testing.assert_allclose(project_pi1(g).values, np.linalg.solve(M, b), atol=1e-12)


def test_projection_preserves_integral(rng):
    mesh = jittered_square(5, 4, rng=rng)
    g = DGField(mesh, rng.uniform(-1, 3, mesh.num_elements))
    assert project_pi1(g).integral() == pytest.approx(g.integral(), abs=1e-10)
    assert project_pih1(g).integral() == pytest.approx(g.integral(), abs=1e-10)
    p = project_pi1(g)
    assert np.abs(project_pi1(p).values - p.values).max() < 1e-10


def test_pih1_constant_and_sign(rng):
    mesh = jittered_square(4, 4, rng=rng)
    assert np.abs(project_pih1(DGField(mesh, np.full(mesh.num_elements, 2.5))).values - 2.5).max() < 1e-13
    for _ in range(20):
        g = DGField(mesh, rng.uniform(0, 1, mesh.num_elements) ** 4 * 100)
        p = project_pih1(g).values
        assert p.min() >= 0
        assert p.max() <= g.values.max() * (1 + 1e-14)


def test_pih1_smooths_peak(crisscross8):
    vals = np.zeros(crisscross8.num_elements)
    vals[17] = 50.0
    p = project_pih1(DGField(crisscross8, vals))
    assert p.values.max() < 50.0


def test_element_gradients(rng):
    mesh = jittered_square(3, 3, rng=rng)
    g = element_gradients(CGField(mesh, mesh.vertices[:, 0] + 2 * mesh.vertices[:, 1]))
    np.testing.assert_allclose(g.vectors, np.tile([1.0, 2.0], (mesh.num_elements, 1)), atol=1e-12)
    z = element_gradients(CGField(mesh, np.full(mesh.num_vertices, 7.0)))
    assert np.abs(z.vectors).max() < 1e-12


def test_element_gradient_barycentric_oracle(triangle, rng):
    tri = triangle
    f = rng.standard_normal(3)
    _, grads = simplex_geometry(tri.vertices)
    np.testing.assert_allclose(element_gradients(CGField(tri, f)).vectors[0], grads.T @ f, atol=1e-14)


def test_reg_log(square2, rng):
    eps = 1e-10
    z = reg_log(DGField(square2, [0.0, 0.0]), eps)
    np.testing.assert_array_equal(z.values, [math.log(eps)] * 2)
    one = reg_log(DGField(square2, [math.e - eps] * 2), eps)
    np.testing.assert_allclose(one.values, 1.0, rtol=1e-15)
    u = rng.uniform(0, 10, 2)
    np.testing.assert_allclose(reg_log(DGField(square2, u), eps).values,
                               [math.log(x + eps) for x in u], rtol=4e-16)
    with pytest.raises(DomainError):
        reg_log(DGField(square2, [-1.0, 0.0]), eps)
    with pytest.raises(DomainError):
        reg_log(DGField(square2, [1.0, 0.0]), 0.0)


def test_field_validation(square2):
    with pytest.raises(ValueError):
        DGField(square2, [1.0])
    with pytest.raises(ValueError):
        CGField(square2, [1.0, np.nan, 0, 0])


def test_initial_data_reduction(crisscross8):
    # the edge-midpoint rule is exact for quadratics
    f = lambda x: x[:, 0] ** 2 + x[:, 0] * x[:, 1]  # noqa: E731
    avg = element_average(f, crisscross8)
    assert avg.integral() == pytest.approx(1 / 3 + 1 / 4, abs=1e-14)
    assert np.array_equal(interpolate_p1(f, crisscross8).values, f(crisscross8.vertices))


@given(arrays(float, st.integers(1, 30), elements=st.floats(-1e6, 1e6)))
def test_sign_decomposition(v):
    p, m = positive_part(v), negative_part(v)
    np.testing.assert_array_equal(p - m, v)
    assert (p * m == 0).all()
    assert (p >= 0).all() and (m >= 0).all()
