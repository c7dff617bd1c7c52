"""Manufactured solutions for the backward-Euler signal solver on the unit square.

``s(x, y, t) = 2 + g(t) cos(pi x) cos(pi y)`` satisfies the homogeneous
Neumann condition; the source is chosen so that ``s_t - Lap s + a s = f``.
"""
from __future__ import annotations

import math

import numpy as np

from chemodg.fespace import quadrature_points
from chemodg.mesh import rectangle_mesh
from chemodg.signals import solve_local

DECAY = 1.0


def _mode(x):
    return np.cos(math.pi * x[:, 0]) * np.cos(math.pi * x[:, 1])


def _exact(x, t, g):
    return 2.0 + g(t) * _mode(x)


def _source(x, t, g, dg):
    return 2.0 * DECAY + (dg(t) + (2 * math.pi**2 + DECAY) * g(t)) * _mode(x)


def _march(mesh, T, n_steps, g, dg):
    dt = T / n_steps
    s = _exact(mesh.vertices, 0.0, g)
    for m in range(1, n_steps + 1):
        src = _source(mesh.vertices, m * dt, g, dg)
        s = solve_local(mesh, s, src, DECAY, 1, dt).values
    return s


def l2_error(mesh, nodal, exact):
    """L2 norm of ``P1(nodal) - exact`` with the degree-2 edge-midpoint rule."""
    x, lam, w = quadrature_points(mesh)
    ne, nq, d = x.shape
    uh = np.einsum("qi,ei->eq", lam, nodal[mesh.elements])
    ex = exact(x.reshape(-1, d)).reshape(ne, nq)
    return math.sqrt(float(mesh.element_measures @ ((uh - ex) ** 2 @ w)))


def spatial_errors(ns=(8, 16, 32, 64), T=0.1, n_steps=10):
    """L2 errors at time T for ``s = 2 + (1+t) mode``; backward Euler is exact in time here."""
    g = lambda t: 1.0 + t  # noqa: E731
    dg = lambda t: 1.0  # noqa: E731
    hs, errs = [], []
    for n in ns:
        mesh = rectangle_mesh(n, n, pattern="right")
        s = _march(mesh, T, n_steps, g, dg)
        errs.append(l2_error(mesh, s, lambda x: _exact(x, T, g)))
        hs.append(1.0 / n)
    return np.array(hs), np.array(errs)


def temporal_differences(steps=(5, 10, 20, 40, 80), T=0.5, n=8):
    """Max-norm differences of successive step halvings for ``s = 2 + exp(t) mode`` on a fixed mesh."""
    mesh = rectangle_mesh(n, n, pattern="right")
    sols = [_march(mesh, T, k, np.exp, np.exp) for k in steps]
    return np.array([np.abs(a - b).max() for a, b in zip(sols[:-1], sols[1:])])


def observed_orders(values, ratio=2.0):
    values = np.asarray(values)
    return np.log(values[:-1] / values[1:]) / math.log(ratio)
