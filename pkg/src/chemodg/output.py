"""VTU snapshots and CSV diagnostics for external plotting."""
from __future__ import annotations

import csv
import os
from pathlib import Path
from xml.sax.saxutils import quoteattr

import numpy as np

from .fespace import project_pih1
from .simulation import DIAGNOSTIC_FIELDS, DiagnosticsRow, SimState

VTK_TRIANGLE = 5
VTK_TETRA = 10
_INT_FIELDS = {"step", "fp_iterations"}
_BOOL_FIELDS = {"fallback_used"}


def _floats(values) -> str:
    return " ".join(repr(float(x)) for x in np.ravel(values))


def _ints(values) -> str:
    return " ".join(str(int(x)) for x in np.ravel(values))


def _array(name, dtype, text, ncomp=1) -> str:
    comp = f' NumberOfComponents="{ncomp}"' if ncomp != 1 else ""
    return (f'        <DataArray type="{dtype}" Name={quoteattr(name)}{comp} format="ascii">\n'
            f"          {text}\n        </DataArray>\n")


def vtu_text(state: SimState) -> str:
    """XML UnstructuredGrid with cell data ``u`` and point data ``pih1_u``, ``v``, ``w``."""
    mesh = state.u.mesh
    pts = mesh.vertices
    if mesh.dim == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    nv = mesh.dim + 1
    cell_type = VTK_TRIANGLE if mesh.dim == 2 else VTK_TETRA
    offsets = nv * np.arange(1, mesh.num_elements + 1)
    pih1 = project_pih1(state.u).values
    parts = [
        '<?xml version="1.0"?>\n',
        '<VTKFile type="UnstructuredGrid" version="1.0" byte_order="LittleEndian" header_type="UInt64">\n',
        "  <UnstructuredGrid>\n",
        f'    <FieldData>\n{_array("TIME", "Float64", repr(float(state.t)))}'
        f'{_array("STEP", "Int64", str(state.m))}    </FieldData>\n',
        f'    <Piece NumberOfPoints="{mesh.num_vertices}" NumberOfCells="{mesh.num_elements}">\n',
        '      <PointData Scalars="pih1_u">\n',
        _array("pih1_u", "Float64", _floats(pih1)),
        _array("v", "Float64", _floats(state.v.values)),
        _array("w", "Float64", _floats(state.w.values)),
        "      </PointData>\n",
        '      <CellData Scalars="u">\n',
        _array("u", "Float64", _floats(state.u.values)),
        "      </CellData>\n",
        "      <Points>\n",
        _array("Points", "Float64", _floats(pts), 3),
        "      </Points>\n",
        "      <Cells>\n",
        _array("connectivity", "Int64", _ints(mesh.elements)),
        _array("offsets", "Int64", _ints(offsets)),
        _array("types", "UInt8", _ints(np.full(mesh.num_elements, cell_type))),
        "      </Cells>\n",
        "    </Piece>\n",
        "  </UnstructuredGrid>\n",
        "</VTKFile>\n",
    ]
    return "".join(parts)


def write_vtu(state: SimState, path) -> None:
    """Write ``state`` as an ASCII VTU file; raises OSError on I/O failure."""
    text = vtu_text(state)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)


def _fmt(name, value) -> str:
    if name in _BOOL_FIELDS:
        return "1" if value else "0"
    if name in _INT_FIELDS:
        return str(int(value))
    return repr(float(value))


def write_diagnostics_csv(rows, path) -> None:
    """Header of DiagnosticsRow field names, one line per row, floats at full precision."""
    rows = list(rows)
    if not rows:
        raise ValueError("diagnostics table is empty")
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DIAGNOSTIC_FIELDS)
        for r in rows:
            writer.writerow([_fmt(n, getattr(r, n)) for n in DIAGNOSTIC_FIELDS])


def read_diagnostics_csv(path) -> list[DiagnosticsRow]:
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != DIAGNOSTIC_FIELDS:
            raise ValueError(f"unexpected header {header}")
        out = []
        for rec in reader:
            kw = {}
            for name, raw in zip(header, rec):
                if name in _BOOL_FIELDS:
                    kw[name] = raw == "1"
                elif name in _INT_FIELDS:
                    kw[name] = int(raw)
                else:
                    kw[name] = float(raw)
            out.append(DiagnosticsRow(**kw))
    return out


class DiagnosticsWriter:
    """Streams rows to a CSV file as the simulation advances."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="", encoding="ascii")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(DIAGNOSTIC_FIELDS)

    def __call__(self, state, row) -> None:
        self._writer.writerow([_fmt(n, getattr(row, n)) for n in DIAGNOSTIC_FIELDS])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class SnapshotWriter:
    """Hook writing ``state_<step>.vtu`` every ``every`` steps."""

    def __init__(self, directory, every=1, prefix="state"):
        self.directory = Path(directory)
        self.every = every
        self.prefix = prefix
        self.written: list[Path] = []

    def __call__(self, state, row) -> None:
        if state.m % self.every == 0:
            path = self.directory / f"{self.prefix}_{state.m:06d}.vtu"
            write_vtu(state, path)
            self.written.append(path)


def ensure_writable_dir(directory) -> Path:
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    if not os.access(path, os.W_OK | os.X_OK):
        raise PermissionError(f"output directory {path} is not writable")
    return path
