"""Time loop for the local and nonlocal models, diagnostics and blow-up classification."""
from __future__ import annotations

import logging
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import celldensity, signals
from .errors import ChemoError, InvariantViolation, SimulationError
from .fespace import CGField, DGField, element_average, interpolate_p1, p1_lumped_mass
from .mesh import Mesh
from .params import ModelParams

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
POSITIVITY_TOL = 1e-12
MASS_RTOL = 1e-10
MEAN_RTOL = 1e-10


@dataclass(frozen=True)
class SolverOptions:
    cell_solver: str = "linear"  # "linear" (with fallback) or "truncated"
    fallback: bool = True
    fallback_threshold: float = 1e-10
    backend: str = "lu"  # "lu" or "krylov"
    signal_tol: float = 1e-10
    cell_tol: float = 1e-10
    fp_tol: float = 1e-10
    fp_max_iter: int = 200
    fp_method: str = "active-set"
    check_invariants: bool = True

    def __post_init__(self):
        if self.cell_solver not in ("linear", "truncated"):
            raise ValueError(f"cell_solver must be 'linear' or 'truncated', got {self.cell_solver!r}")
        if self.backend not in ("lu", "krylov"):
            raise ValueError(f"backend must be 'lu' or 'krylov', got {self.backend!r}")
        if self.fp_method not in ("active-set", "picard"):
            raise ValueError(f"fp_method must be 'active-set' or 'picard', got {self.fp_method!r}")


@dataclass(frozen=True, eq=False)
class SimState:
    m: int
    t: float
    u: DGField
    v: CGField
    w: CGField


@dataclass(frozen=True)
class DiagnosticsRow:
    step: int
    t: float
    mass: float
    min_u: float
    max_u: float
    mass_bound_rhs: float
    int_v: float
    int_w: float
    fallback_used: bool
    fp_iterations: int


DIAGNOSTIC_FIELDS = tuple(f.name for f in fields(DiagnosticsRow))


@dataclass(frozen=True)
class BlowUpVerdict:
    classification: str  # "bounded", "blow-up" or "undecided"
    t_detect: float | None
    peak: float


def _as_dg(u, mesh):
    return u if isinstance(u, DGField) else element_average(u, mesh)


def _as_cg(v, mesh):
    if v is None:
        return None
    return v if isinstance(v, CGField) else interpolate_p1(v, mesh)


def _row(state, *, bound, fallback=False, fp_iterations=0):
    u = state.u.values
    return DiagnosticsRow(
        step=state.m,
        t=state.t,
        mass=state.u.integral(),
        min_u=float(u.min()),
        max_u=float(u.max()),
        mass_bound_rhs=float(bound),
        int_v=state.v.integral(),
        int_w=state.w.integral(),
        fallback_used=bool(fallback),
        fp_iterations=int(fp_iterations),
    )


def initial_state(params: ModelParams, mesh: Mesh, u0, v0=None, w0=None) -> SimState:
    u = _as_dg(u0, mesh)
    if u.values.min() < 0:
        raise ValueError("initial density must be nonnegative")
    v, w = _as_cg(v0, mesh), _as_cg(w0, mesh)
    if params.signal_tau == 1:
        if v is None or w is None:
            raise ValueError("tau=1 needs initial signals v0 and w0")
        if v.values.min() < 0 or w.values.min() < 0:
            raise ValueError("initial signals must be nonnegative")
    zero = np.zeros(mesh.num_vertices)
    return SimState(0, 0.0, u, v if v is not None else CGField(mesh, zero),
                    w if w is not None else CGField(mesh, zero))


def compute_signals(state: SimState, params: ModelParams, options: SolverOptions):
    u = state.u
    if params.model == "nonlocal":
        v = signals.step_signal_nonlocal(u, params.alpha, shift=params.eta, tol=options.signal_tol)
        w = signals.step_signal_nonlocal(u, params.beta, shift=params.eta, tol=options.signal_tol)
        if options.check_invariants:
            D = p1_lumped_mass(u.mesh)
            for name, s in (("v", v), ("w", w)):
                mean = (D @ s.values) / D.sum()
                if abs(mean) > MEAN_RTOL * max(np.abs(s.values).max(), np.finfo(float).tiny):
                    raise InvariantViolation(f"nonlocal signal {name} has mean {mean:.3e}")
        return v, w
    kw = dict(shift=params.eta, backend=options.backend, tol=options.signal_tol)
    v = signals.step_signal_local(u, state.v, params.a, params.alpha, params.tau, params.dt, **kw)
    w = signals.step_signal_local(u, state.w, params.d_decay, params.beta, params.tau, params.dt, **kw)
    return v, w


def step_cell(state, v, w, params, options):
    """Cell-density update; returns ``(u_next, fallback_used, fp_iterations)``."""
    u = state.u
    mats = celldensity.cell_step_matrices(u, v, w, params, params.dt)
    trunc = dict(fp_tol=options.fp_tol, fp_max_iter=options.fp_max_iter, method=options.fp_method,
                 backend=options.backend, tol=options.cell_tol, matrices=mats)
    if options.cell_solver == "truncated":
        u_new, its = celldensity.step_cell_truncated(u, v, w, params, params.dt, **trunc)
        return u_new, False, its
    u_new, _ = celldensity.step_cell_linear(u, v, w, params, params.dt, backend=options.backend,
                                            tol=options.cell_tol, matrices=mats)
    if options.fallback and u_new.values.min() < -options.fallback_threshold:
        logger.warning("step %d: linear scheme gave min u = %.3e, switching to truncated scheme",
                       state.m + 1, u_new.values.min())
        u_new, its = celldensity.step_cell_truncated(u, v, w, params, params.dt, **trunc)
        return u_new, True, its
    return u_new, False, 0


def mass_bound(u: DGField, params: ModelParams) -> float:
    """Right-hand side of the discrete mass inequality for the step leaving ``u``."""
    uv = np.maximum(u.values, 0.0)
    return u.integral() + params.dt * params.lam * float(u.mesh.element_measures @ uv**params.rho)


def step(state: SimState, params: ModelParams, options: SolverOptions | None = None):
    """Advance one time step: signals, then cell density, then invariant checks."""
    options = options or SolverOptions()
    v, w = compute_signals(state, params, options)
    u_new, fallback, its = step_cell(state, v, w, params, options)
    m = state.m + 1
    new = SimState(m, m * params.dt, u_new, v, w)
    bound = mass_bound(state.u, params)
    row = _row(new, bound=bound, fallback=fallback, fp_iterations=its)
    if options.check_invariants:
        if fallback or options.cell_solver == "truncated":
            if row.min_u < -POSITIVITY_TOL:
                raise InvariantViolation(f"step {m}: negative density {row.min_u:.3e}")
        if row.mass > bound + MASS_RTOL * abs(bound):
            raise InvariantViolation(f"step {m}: mass {row.mass!r} exceeds bound {bound!r}")
    return new, row


def advance(state: SimState, params: ModelParams, n_steps: int, *, hooks=(), options=None):
    """Take ``n_steps`` steps from ``state``; returns the final state and one row per step."""
    options = options or SolverOptions()
    rows = []
    for _ in range(n_steps):
        try:
            state_new, row = step(state, params, options)
        except ChemoError as exc:
            raise SimulationError(f"step {state.m + 1} failed: {exc}", state) from exc
        state = state_new
        rows.append(row)
        for hook in hooks:
            hook(state, row)
    return state, rows


def run(params: ModelParams, mesh: Mesh, u0, v0=None, w0=None, *, hooks=(), options=None,
        n_steps=None):
    """Run ``params.num_steps`` steps (or ``n_steps``) from the initial data.

    ``u0`` may be a DGField or a pointwise function (reduced to element
    averages); ``v0``/``w0`` may be CGFields or functions (interpolated).
    Returns ``(final_state, rows)`` with a row for the initial state first.
    """
    state = initial_state(params, mesh, u0, v0, w0)
    row0 = _row(state, bound=state.u.integral())
    for hook in hooks:
        hook(state, row0)
    n = params.num_steps if n_steps is None else n_steps
    state, rows = advance(state, params, n, hooks=hooks, options=options)
    return state, [row0] + rows


def classify_blowup(rows, growth_factor=5.0, plateau_window=200, plateau_rtol=0.02) -> BlowUpVerdict:
    """Operational blow-up test on the max-norm history.

    Blow-up: max_u reaches ``growth_factor * max_u[0]`` and afterwards stays
    within a relative band ``plateau_rtol`` over ``plateau_window`` consecutive
    steps (mass concentrated in a few elements, norm saturated).
    Bounded: the growth threshold is never reached. ``t_detect`` is the
    time the first qualifying plateau reaches its maximum.
    """
    if len(rows) < plateau_window:
        raise ValueError(f"need at least {plateau_window} rows, got {len(rows)}")
    mx = np.array([r.max_u for r in rows])
    t = np.array([r.t for r in rows])
    peak = float(mx.max())
    hit = np.flatnonzero(mx >= growth_factor * mx[0])
    if hit.size == 0:
        return BlowUpVerdict("bounded", None, peak)
    for i in range(hit[0], len(mx) - plateau_window):
        win = mx[i:i + plateau_window + 1]
        if win.max() - win.min() <= plateau_rtol * win.max():
            # report when the plateau level is first reached
            return BlowUpVerdict("blow-up", float(t[i + int(np.argmax(win))]), peak)
    return BlowUpVerdict("undecided", None, peak)


def save_checkpoint(state: SimState, path) -> None:
    """Binary dump of a SimState (numpy ``.npz``); round trip is exact."""
    mesh = state.u.mesh
    with open(path, "wb") as fh:
        np.savez(fh, version=CHECKPOINT_VERSION, m=state.m, t=state.t, u=state.u.values,
                 v=state.v.values, w=state.w.values,
                 shape=np.array([mesh.num_vertices, mesh.num_elements, mesh.dim]))


def load_checkpoint(path, mesh: Mesh) -> SimState:
    with np.load(Path(path)) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        if tuple(data["shape"]) != (mesh.num_vertices, mesh.num_elements, mesh.dim):
            raise ValueError("checkpoint does not match the mesh")
        return SimState(int(data["m"]), float(data["t"]), DGField(mesh, data["u"]),
                        CGField(mesh, data["v"]), CGField(mesh, data["w"]))
