"""Experiment configurations: attraction / attraction-repulsion in the ball, nonlocal in the disk."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh, generate_ball_mesh, generate_disk_mesh
from .params import ModelParams


@dataclass(frozen=True)
class GaussianBump:
    """``amplitude * exp(-rate * |x|^2)``."""

    amplitude: float
    rate: float = 35.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.amplitude * np.exp(-self.rate * np.einsum("ij,ij->i", x, x))


@dataclass(frozen=True)
class MeshSpec:
    kind: str  # "disk" or "ball"
    radius: float
    target_h: float

    def build(self) -> Mesh:
        if self.kind == "disk":
            return generate_disk_mesh(self.radius, self.target_h)
        if self.kind == "ball":
            return generate_ball_mesh(self.radius, self.target_h)
        raise ValueError(f"unknown mesh kind {self.kind!r}")


@dataclass(frozen=True)
class InitialData:
    u0: GaussianBump
    v0: GaussianBump
    w0: GaussianBump


@dataclass(frozen=True)
class Preset:
    name: str
    params: ModelParams
    mesh: MeshSpec
    initial: InitialData
    description: str
    long_running: bool = False

    def __iter__(self):
        return iter((self.params, self.mesh, self.initial))


def _presets():
    base = ModelParams(dt=1e-5, T=3e-3)
    attraction = base.with_(model="local", tau=1, chi=5.0, xi=0.0)
    repulsion = attraction.with_(xi=1.0)
    nonlocal_ = base.with_(model="nonlocal", alpha=1.5)
    ball = MeshSpec("ball", 1.0, 4.4e-2)
    disk_coarse = MeshSpec("disk", 1.0, 5e-2)
    u500, u100, s10, zero = GaussianBump(500.0), GaussianBump(100.0), GaussianBump(10.0), GaussianBump(0.0)
    items = [
        Preset("test1-attraction-3d", attraction, ball, InitialData(u500, s10, zero),
               "local model, tau=1, chi=5, xi=0, unit ball", long_running=True),
        Preset("test2-attraction-repulsion-3d", repulsion, ball, InitialData(u500, s10, s10),
               "local model, tau=1, chi=5, xi=1, unit ball", long_running=True),
        Preset("test3-nonlocal-2d", nonlocal_, MeshSpec("disk", 1.0, 1.4e-2),
               InitialData(u100, s10, s10), "nonlocal model, alpha=1.5, unit disk"),
        Preset("test3-nonlocal-2d-coarse", nonlocal_, disk_coarse, InitialData(u100, s10, s10),
               "nonlocal model, alpha=1.5, unit disk, h=5e-2"),
        Preset("test1-attraction-2d", attraction, disk_coarse, InitialData(u500, s10, zero),
               "2D analogue of test1 on the unit disk, h=5e-2"),
        Preset("test2-attraction-repulsion-2d", repulsion, disk_coarse, InitialData(u500, s10, s10),
               "2D analogue of test2 on the unit disk, h=5e-2"),
    ]
    return {p.name: p for p in items}


PRESETS = _presets()


def preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None
