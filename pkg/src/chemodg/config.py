"""Run configuration: INI-style text with [model], [initial], [mesh], [solver], [output] sections.

Precedence, lowest first: preset values, documented defaults, file values,
``CHEMODG_OUTPUT_DIR``, explicit overrides (CLI flags).
"""
from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .params import PARAM_NAMES, ModelParams
from .presets import PRESETS, GaussianBump, InitialData, MeshSpec
from .simulation import SolverOptions

OUTPUT_ENV = "CHEMODG_OUTPUT_DIR"
MESH_SOURCES = ("preset", "disk", "ball", "file")


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams = field(default_factory=ModelParams)
    preset: str | None = None
    u0_amplitude: float = 100.0
    v0_amplitude: float = 10.0
    w0_amplitude: float = 10.0
    initial_rate: float = 35.0
    mesh_source: str = "disk"
    mesh_path: str | None = None
    mesh_format: str | None = None
    mesh_radius: float = 1.0
    mesh_target_h: float = 5e-2
    options: SolverOptions = field(default_factory=SolverOptions)
    output_dir: str = "output"
    every: int = 1
    write_vtu: bool = True
    write_checkpoint: bool = True

    def mesh_spec(self) -> MeshSpec | None:
        if self.mesh_source == "file":
            return None
        kind = self.mesh_source
        if kind == "preset":
            kind = PRESETS[self.preset].mesh.kind
        return MeshSpec(kind, self.mesh_radius, self.mesh_target_h)

    def initial_data(self) -> InitialData:
        r = self.initial_rate
        return InitialData(GaussianBump(self.u0_amplitude, r), GaussianBump(self.v0_amplitude, r),
                           GaussianBump(self.w0_amplitude, r))

    @property
    def dim(self) -> int | None:
        mesh_spec = self.mesh_spec()
        if mesh_spec is None:
            return None
        return 3 if mesh_spec.kind == "ball" else 2


_INITIAL_KEYS = {"u0_amplitude": float, "v0_amplitude": float, "w0_amplitude": float, "rate": float}
_MESH_KEYS = {"source": str, "path": str, "format": str, "radius": float, "target_h": float}
_SOLVER_KEYS = {f.name: f.type for f in fields(SolverOptions)}
_OUTPUT_KEYS = {"directory": str, "every": int, "vtu": bool, "checkpoint": bool}
_MODEL_KEYS = {name: ("str" if name == "model" else "int" if name == "tau" else "float")
               for name in PARAM_NAMES}
_MODEL_KEYS["preset"] = "str"

SECTIONS = {
    "model": _MODEL_KEYS,
    "initial": _INITIAL_KEYS,
    "mesh": _MESH_KEYS,
    "solver": _SOLVER_KEYS,
    "output": _OUTPUT_KEYS,
}


def _convert(raw: str, kind, key):
    kind = {"str": str, "int": int, "float": float, "bool": bool}.get(kind, kind)
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"expected {kind.__name__}, got {raw!r}", key) from None


def _read_text(text, source):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(source))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    flat = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError("unknown section", f"[{section}]")
        for key, value in cp.items(section):
            if key not in SECTIONS[section]:
                raise ConfigError("unknown key", f"{section}.{key}")
            flat[f"{section}.{key}"] = value
    return flat


def _normalise_override(key):
    if "." in key:
        return key
    for section, keys in SECTIONS.items():
        if key in keys:
            return f"{section}.{key}"
    raise ConfigError("unknown key", key)


def parse_config(path=None, overrides=None, *, text=None) -> RunConfig:
    """Build a RunConfig from a file (or ``text``) plus ``overrides``.

    ``overrides`` maps ``"section.key"`` (or a bare model key such as ``"c"``)
    to string or typed values; they take precedence over the file.
    """
    flat = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    if text is not None:
        flat.update(_read_text(text, path or "<string>"))
    env_dir = os.environ.get(OUTPUT_ENV)
    if env_dir:
        flat["output.directory"] = env_dir
    for key, value in (overrides or {}).items():
        full = _normalise_override(key)
        section, name = full.split(".", 1)
        if section not in SECTIONS or name not in SECTIONS[section]:
            raise ConfigError("unknown key", full)
        flat[full] = value
    return _build(flat)


def _get(flat, section, kinds):
    out = {}
    for key, kind in kinds.items():
        full = f"{section}.{key}"
        if full in flat:
            raw = flat[full]
            out[key] = _convert(raw, kind, full) if isinstance(raw, str) else raw
    return out


def _build(flat) -> RunConfig:
    model = _get(flat, "model", _MODEL_KEYS)
    preset_name = model.pop("preset", None) or None
    cfg = RunConfig()
    params = ModelParams()
    if preset_name is not None:
        if preset_name not in PRESETS:
            raise ConfigError(f"unknown preset {preset_name!r}", "model.preset")
        p = PRESETS[preset_name]
        params = p.params
        cfg = replace(cfg, preset=preset_name, mesh_source="preset", mesh_radius=p.mesh.radius,
                      mesh_target_h=p.mesh.target_h, u0_amplitude=p.initial.u0.amplitude,
                      v0_amplitude=p.initial.v0.amplitude, w0_amplitude=p.initial.w0.amplitude,
                      initial_rate=p.initial.u0.rate)
    try:
        params = replace(params, **model)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], f"model.{exc.key}") from None
    except TypeError as exc:
        raise ConfigError(str(exc), "model") from None
    if params.gamma > 2:
        raise ConfigError(f"gamma must lie in [1, 2], got {params.gamma}", "model.gamma")

    init = _get(flat, "initial", _INITIAL_KEYS)
    mesh = _get(flat, "mesh", _MESH_KEYS)
    solver = _get(flat, "solver", _SOLVER_KEYS)
    out = _get(flat, "output", _OUTPUT_KEYS)

    source = mesh.get("source", cfg.mesh_source)
    if source not in MESH_SOURCES:
        raise ConfigError(f"must be one of {MESH_SOURCES}", "mesh.source")
    if source == "preset" and preset_name is None:
        raise ConfigError("missing required field (mesh.source=preset needs model.preset)",
                          "model.preset")
    if source == "file" and not mesh.get("path"):
        raise ConfigError("missing required field", "mesh.path")
    for key in ("radius", "target_h"):
        if key in mesh and not mesh[key] > 0:
            raise ConfigError("must be > 0", f"mesh.{key}")
    try:
        options = replace(cfg.options, **solver)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "solver") from None
    every = out.get("every", cfg.every)
    if every < 1:
        raise ConfigError("must be >= 1", "output.every")

    return replace(
        cfg,
        params=params,
        u0_amplitude=init.get("u0_amplitude", cfg.u0_amplitude),
        v0_amplitude=init.get("v0_amplitude", cfg.v0_amplitude),
        w0_amplitude=init.get("w0_amplitude", cfg.w0_amplitude),
        initial_rate=init.get("rate", cfg.initial_rate),
        mesh_source=source,
        mesh_path=mesh.get("path", cfg.mesh_path),
        mesh_format=mesh.get("format", cfg.mesh_format),
        mesh_radius=mesh.get("radius", cfg.mesh_radius),
        mesh_target_h=mesh.get("target_h", cfg.mesh_target_h),
        options=options,
        output_dir=out.get("directory", cfg.output_dir),
        every=every,
        write_vtu=out.get("vtu", cfg.write_vtu),
        write_checkpoint=out.get("checkpoint", cfg.write_checkpoint),
    )


def serialize_config(cfg: RunConfig) -> str:
    """INI text that parses back to an equal RunConfig."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    model = {"preset": cfg.preset or ""}
    model.update({k: repr(v) if isinstance(v, float) else str(v) for k, v in cfg.params.to_dict().items()})
    cp["model"] = model
    cp["initial"] = {"u0_amplitude": repr(cfg.u0_amplitude), "v0_amplitude": repr(cfg.v0_amplitude),
                     "w0_amplitude": repr(cfg.w0_amplitude), "rate": repr(cfg.initial_rate)}
    mesh = {"source": cfg.mesh_source, "radius": repr(cfg.mesh_radius), "target_h": repr(cfg.mesh_target_h)}
    if cfg.mesh_path:
        mesh["path"] = cfg.mesh_path
    if cfg.mesh_format:
        mesh["format"] = cfg.mesh_format
    cp["mesh"] = mesh
    cp["solver"] = {f.name: repr(getattr(cfg.options, f.name)) if isinstance(getattr(cfg.options, f.name), float)
                    else str(getattr(cfg.options, f.name)) for f in fields(SolverOptions)}
    cp["output"] = {"directory": cfg.output_dir, "every": str(cfg.every), "vtu": str(cfg.write_vtu),
                    "checkpoint": str(cfg.write_checkpoint)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
