"""Model constants shared by the signal and cell-density solvers."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

from .errors import ConfigError

MODELS = ("local", "nonlocal")


@dataclass(frozen=True)
class ModelParams:
    """All constants of the local/nonlocal chemotaxis models.

    Unless overridden every coefficient is 1, except ``k = 1.1``.
    ``eta`` shifts the signal sources, ``f(s) = (s + eta)**alpha``.
    """

    model: str = "local"
    tau: int = 1
    chi: float = 1.0
    xi: float = 1.0
    lam: float = 1.0
    mu: float = 1.0
    c: float = 1.0
    n1: float = 1.0
    n2: float = 1.0
    n3: float = 1.0
    rho: float = 1.0
    k: float = 1.1
    gamma: float = 1.0
    a: float = 1.0
    d_decay: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    eta: float = 0.0
    eps: float = 1e-10
    T: float = 3e-3
    dt: float = 1e-5

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"must be one of {MODELS}, got {self.model!r}", "model")
        if self.tau not in (0, 1):
            raise ConfigError(f"must be 0 or 1, got {self.tau!r}", "tau")
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name != "model" and not (isinstance(val, (int, float)) and math.isfinite(val)):
                raise ConfigError(f"must be a finite number, got {val!r}", f.name)
        for name in ("chi", "xi", "lam", "mu", "c", "a", "d_decay", "eta", "T"):
            if getattr(self, name) < 0:
                raise ConfigError("must be >= 0", name)
        for name in ("rho", "k", "gamma"):
            if getattr(self, name) < 1:
                raise ConfigError("must be >= 1", name)
        for name in ("alpha", "beta", "eps", "dt"):
            if getattr(self, name) <= 0:
                raise ConfigError("must be > 0", name)

    @property
    def num_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def signal_tau(self) -> int:
        return 0 if self.model == "nonlocal" else self.tau

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


PARAM_NAMES = tuple(f.name for f in fields(ModelParams))
