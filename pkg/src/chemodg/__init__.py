"""Positivity-preserving upwind DG solver for chemotaxis models with
nonlinear diffusion, logistic sinks and gradient-dependent damping."""
from .errors import (
    ChemoError,
    ConfigError,
    DomainError,
    FixedPointError,
    InvariantViolation,
    MeshError,
    MeshParseError,
    SimulationError,
    SolverError,
)
from .mesh import Mesh, build_mesh, generate_ball_mesh, generate_disk_mesh, load_mesh, quality_report
from .params import ModelParams
from .presets import PRESETS, preset
from .simulation import SimState, SolverOptions, classify_blowup, run

__version__ = "0.1.0"

__all__ = [
    "ChemoError", "ConfigError", "DomainError", "FixedPointError", "InvariantViolation",
    "MeshError", "MeshParseError", "SimulationError", "SolverError",
    "Mesh", "build_mesh", "generate_ball_mesh", "generate_disk_mesh", "load_mesh", "quality_report",
    "ModelParams", "PRESETS", "preset", "SimState", "SolverOptions", "classify_blowup", "run",
]
