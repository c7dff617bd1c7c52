"""Oriented simplicial meshes (triangles in 2D, tetrahedra in 3D).

Interior facets carry the orientation used by the upwind form: the facet
normal points out of the element ``K`` (lower index) into ``L``.
Boundary facets carry the outward normal of the domain.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations, permutations
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

from .errors import MeshError, MeshParseError

logger = logging.getLogger(__name__)

FORMATS = ("gmsh-msh-v2", "native-text")

# gmsh element type -> number of nodes; only simplices (and points) are read
_GMSH_NODES = {15: 1, 1: 2, 2: 3, 4: 4}


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    elements: np.ndarray
    element_measures: np.ndarray
    interior_facets: np.ndarray
    interior_elements: np.ndarray  # (n, 2): K_e, L_e
    interior_normals: np.ndarray
    interior_measures: np.ndarray
    boundary_facets: np.ndarray
    boundary_elements: np.ndarray
    boundary_normals: np.ndarray
    boundary_measures: np.ndarray

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def volume(self) -> float:
        return float(self.element_measures.sum())

    @cached_property
    def barycentric_gradients(self) -> np.ndarray:
        """Gradients of the barycentric coordinates, shape (ne, d+1, d)."""
        x = self.vertices[self.elements]
        jac = x[:, 1:, :] - x[:, :1, :]
        inv = np.linalg.inv(jac)
        grads = np.empty((self.num_elements, self.dim + 1, self.dim))
        grads[:, 1:, :] = np.transpose(inv, (0, 2, 1))
        grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
        return _frozen(grads, float)

    @cached_property
    def diameters(self) -> np.ndarray:
        x = self.vertices[self.elements]
        d = np.zeros(self.num_elements)
        for i, j in combinations(range(self.dim + 1), 2):
            d = np.maximum(d, np.linalg.norm(x[:, i] - x[:, j], axis=1))
        return _frozen(d, float)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def centroids(self) -> np.ndarray:
        return _frozen(self.vertices[self.elements].mean(axis=1), float)


@dataclass(frozen=True)
class MeshQualityReport:
    max_angle: float
    is_non_obtuse: bool
    h: float
    shape_regularity_ratio: float


def _simplex_measures(x):
    jac = x[:, 1:, :] - x[:, :1, :]
    d = jac.shape[1]
    return np.linalg.det(jac) / math.factorial(d)


def _facet_normals(p, dim):
    """Unit normals and measures of facets given their vertex coordinates (n, d, d)."""
    if dim == 2:
        t = p[:, 1] - p[:, 0]
        n = np.column_stack([t[:, 1], -t[:, 0]])
        meas = np.linalg.norm(t, axis=1)
        return n / meas[:, None], meas
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    norm = np.linalg.norm(n, axis=1)
    return n / norm[:, None], 0.5 * norm


def build_mesh(vertices, element_connectivity) -> Mesh:
    """Build an oriented mesh from coordinates and simplex connectivity.

    Raises MeshError for out-of-range indices, degenerate elements and
    facets shared by more than two elements.
    """
    x = np.array(vertices, dtype=float)
    if x.ndim != 2 or x.shape[1] not in (2, 3):
        raise MeshError(f"vertices must have shape (n, 2) or (n, 3), got {x.shape}")
    dim = x.shape[1]
    try:
        elems = np.array(element_connectivity, dtype=np.int64)
    except (TypeError, ValueError) as exc:
        raise MeshError(f"invalid connectivity: {exc}") from None
    if elems.ndim != 2 or elems.shape[1] != dim + 1 or elems.shape[0] == 0:
        raise MeshError(f"connectivity must have shape (ne, {dim + 1}), got {elems.shape}")
    if elems.min() < 0 or elems.max() >= x.shape[0]:
        raise MeshError("connectivity index out of range")
    if not np.isfinite(x).all():
        raise MeshError("non-finite vertex coordinates")

    xe = x[elems]
    signed = _simplex_measures(xe)
    measures = np.abs(signed)
    diam = np.zeros(len(elems))
    for i, j in combinations(range(dim + 1), 2):
        diam = np.maximum(diam, np.linalg.norm(xe[:, i] - xe[:, j], axis=1))
    bad = measures <= 1e-13 * diam**dim
    if bad.any():
        raise MeshError(f"degenerate element {int(np.flatnonzero(bad)[0])} (zero measure)")

    ne = len(elems)
    nloc = dim + 1
    # facet i of an element is the one opposite local vertex i
    local = np.array([[j for j in range(nloc) if j != i] for i in range(nloc)])
    facets = np.sort(elems[:, local].reshape(ne * nloc, dim), axis=1)
    owner = np.repeat(np.arange(ne), nloc)
    opposite = elems.reshape(-1)

    uniq, inverse, counts = np.unique(facets, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if (counts > 2).any():
        f = uniq[np.flatnonzero(counts > 2)[0]]
        raise MeshError(f"non-manifold facet {tuple(int(v) for v in f)} (>2 adjacent elements)")

    order = np.lexsort((owner, inverse))
    inv_sorted = inverse[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = inv_sorted[1:] != inv_sorted[:-1]
    starts = np.flatnonzero(first)
    fid = inv_sorted[starts]
    is_int = counts[fid] == 2

    k_pos = order[starts[is_int]]
    l_pos = order[starts[is_int] + 1]
    int_facets = uniq[fid[is_int]]
    p = x[int_facets]
    n, meas = _facet_normals(p, dim)
    # orient away from the vertex of K opposite the facet
    sgn = np.einsum("ij,ij->i", n, p[:, 0] - x[opposite[k_pos]])
    n[sgn < 0] *= -1.0

    b_pos = order[starts[~is_int]]
    bnd_facets = uniq[fid[~is_int]]
    pb = x[bnd_facets]
    nb, measb = _facet_normals(pb, dim)
    sgn = np.einsum("ij,ij->i", nb, pb[:, 0] - x[opposite[b_pos]])
    nb[sgn < 0] *= -1.0

    return Mesh(
        vertices=_frozen(x, float),
        elements=_frozen(elems, np.int64),
        element_measures=_frozen(measures, float),
        interior_facets=_frozen(int_facets, np.int64),
        interior_elements=_frozen(np.column_stack([owner[k_pos], owner[l_pos]]), np.int64),
        interior_normals=_frozen(n, float),
        interior_measures=_frozen(meas, float),
        boundary_facets=_frozen(bnd_facets, np.int64),
        boundary_elements=_frozen(owner[b_pos], np.int64),
        boundary_normals=_frozen(nb, float),
        boundary_measures=_frozen(measb, float),
    )


def quality_report(mesh: Mesh) -> MeshQualityReport:
    """Largest interior angle (dihedral angle in 3D), mesh size and shape regularity."""
    g = mesh.barycentric_gradients
    norms = np.linalg.norm(g, axis=2)
    cos_max = 1.0
    for i, j in combinations(range(mesh.dim + 1), 2):
        c = -np.einsum("ij,ij->i", g[:, i], g[:, j]) / (norms[:, i] * norms[:, j])
        cos_max = min(cos_max, float(c.min()))
    max_angle = math.acos(max(-1.0, min(1.0, cos_max)))
    inradius = 1.0 / norms.sum(axis=1)
    return MeshQualityReport(
        max_angle=max_angle,
        is_non_obtuse=max_angle <= math.pi / 2 + 1e-12,
        h=mesh.h,
        shape_regularity_ratio=float((mesh.diameters / inradius).max()),
    )


def rectangle_mesh(nx, ny, x0=0.0, x1=1.0, y0=0.0, y1=1.0, pattern="right") -> Mesh:
    """Structured triangulation of a rectangle.

    ``pattern="right"`` splits each cell along one diagonal, ``"crossed"``
    splits it into four triangles around an added centre vertex.
    """
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = [np.column_stack([X.ravel(), Y.ravel()])]

    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    if pattern == "right":
        for j in range(ny):
            for i in range(nx):
                a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
                tris += [(a, b, c), (a, c, d)]
    elif pattern == "crossed":
        base = (nx + 1) * (ny + 1)
        cx = 0.5 * (xs[:-1] + xs[1:])
        cy = 0.5 * (ys[:-1] + ys[1:])
        CX, CY = np.meshgrid(cx, cy, indexing="xy")
        verts.append(np.column_stack([CX.ravel(), CY.ravel()]))
        for j in range(ny):
            for i in range(nx):
                a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
                m = base + j * nx + i
                tris += [(a, b, m), (b, c, m), (c, d, m), (d, a, m)]
    else:
        raise ValueError(f"unknown pattern {pattern!r}")
    return build_mesh(np.vstack(verts), tris)


def _ccw(points, tris):
    p = points[tris]
    area = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 2, 0] - p[:, 0, 0]
    ) * (p[:, 1, 1] - p[:, 0, 1])
    tris = tris.copy()
    flip = area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def generate_disk_mesh(radius: float, target_h: float) -> Mesh:
    """Triangulate the disk of given radius centred at the origin.

    Vertices are placed on concentric rings (radial spacing
    ``target_h*sqrt(3)/2``, arc spacing about ``target_h``, alternate rings
    staggered by half a step) and connected by a Delaunay triangulation.
    """
    if radius <= 0 or target_h <= 0:
        raise MeshError("radius and target_h must be positive")
    n_bnd = math.ceil(2 * math.pi * radius / target_h)
    if n_bnd < 8:
        raise MeshError(
            f"target_h={target_h} too large for radius {radius}: only {n_bnd} boundary segments"
        )
    n_rings = max(1, math.ceil(radius / (target_h * math.sqrt(3) / 2)))
    pts = [np.zeros((1, 2))]
    for j in range(1, n_rings + 1):
        r = radius * j / n_rings
        m = n_bnd if j == n_rings else max(6, math.ceil(2 * math.pi * r / target_h))
        theta = 2 * math.pi * (np.arange(m) + 0.5 * (j % 2)) / m
        pts.append(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))
    points = np.vstack(pts)
    tri = Delaunay(points)
    return build_mesh(points, _ccw(points, tri.simplices.astype(np.int64)))


def generate_ball_mesh(radius: float, target_h: float) -> Mesh:
    """Tetrahedral mesh of the ball: a Kuhn-split cube mapped radially onto the sphere.

    Each cube cell is split into six tetrahedra along the diagonal pointing
    away from the origin, so the split is mirror-symmetric across octants.
    """
    if radius <= 0 or target_h <= 0:
        raise MeshError("radius and target_h must be positive")
    n = math.ceil(radius / target_h)
    if n < 2:
        raise MeshError(f"target_h={target_h} too large for radius {radius}")
    m = 2 * n + 1
    idx = np.arange(-n, n + 1)
    I, J, K = np.meshgrid(idx, idx, idx, indexing="ij")
    grid = np.column_stack([I.ravel(), J.ravel(), K.ravel()]).astype(float)

    def vid(ijk):
        return ((ijk[..., 0] + n) * m + (ijk[..., 1] + n)) * m + (ijk[..., 2] + n)

    lo = np.arange(-n, n)
    CI, CJ, CK = np.meshgrid(lo, lo, lo, indexing="ij")
    corner = np.column_stack([CI.ravel(), CJ.ravel(), CK.ravel()])
    sign = np.where(corner >= 0, 1, -1)
    start = np.where(sign > 0, corner, corner + 1)
    tets = []
    for perm in permutations(range(3)):
        v = [start.copy()]
        cur = start.copy()
        for axis in perm:
            cur = cur.copy()
            cur[:, axis] += sign[:, axis]
            v.append(cur)
        tets.append(np.stack([vid(p) for p in v], axis=1))
    tets = np.vstack(tets)

    cube = grid * (radius / n)
    r2 = np.linalg.norm(cube, axis=1)
    rinf = np.abs(cube).max(axis=1)
    scale = np.divide(rinf, r2, out=np.ones_like(r2), where=r2 > 0)
    ball = cube * scale[:, None]
    before = np.sign(_simplex_measures(cube[tets]))
    after = np.sign(_simplex_measures(ball[tets]))
    if (before != after).any():
        raise MeshError("radial map inverted an element; refine target_h")
    return build_mesh(ball, tets)


# ---------------------------------------------------------------- file I/O


def _infer_format(path):
    return "gmsh-msh-v2" if Path(path).suffix.lower() == ".msh" else "native-text"


def load_mesh(path, format: str | None = None) -> Mesh:
    """Read a mesh file (``gmsh-msh-v2`` ASCII or ``native-text``)."""
    path = Path(path)
    fmt = format or _infer_format(path)
    if fmt not in FORMATS:
        raise MeshError(f"unsupported mesh format {fmt!r}; expected one of {FORMATS}")
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise MeshError(f"cannot read {path}: {exc}") from exc
    if fmt == "native-text":
        verts, elems = _parse_native(lines, path)
    else:
        verts, elems = _parse_gmsh(lines, path)
    return build_mesh(verts, elems)


class _Lines:
    def __init__(self, lines, path):
        self.lines = lines
        self.path = path
        self.pos = 0

    def next(self, what):
        while self.pos < len(self.lines):
            line = self.lines[self.pos].split("#", 1)[0].strip()
            self.pos += 1
            if line:
                return line
        raise MeshParseError(f"unexpected end of file while reading {what}", len(self.lines), self.path)

    def error(self, msg):
        return MeshParseError(msg, self.pos, self.path)


def _parse_native(lines, path):
    src = _Lines(lines, path)
    head = src.next("header").split()
    try:
        dim, nv, ne = (int(t) for t in head)
    except ValueError:
        raise src.error(f"expected header 'dim nv ne', got {' '.join(head)!r}") from None
    if dim not in (2, 3):
        raise src.error(f"unsupported dimension {dim}")
    verts = np.empty((nv, dim))
    for i in range(nv):
        tok = src.next(f"vertex {i}").split()
        if len(tok) != dim:
            raise src.error(f"expected {dim} coordinates, got {len(tok)}")
        try:
            verts[i] = [float(t) for t in tok]
        except ValueError:
            raise src.error("invalid coordinate") from None
    elems = np.empty((ne, dim + 1), dtype=np.int64)
    for i in range(ne):
        tok = src.next(f"element {i}").split()
        if len(tok) != dim + 1:
            raise src.error(f"expected {dim + 1} vertex indices, got {len(tok)}")
        try:
            elems[i] = [int(t) for t in tok]
        except ValueError:
            raise src.error("invalid vertex index") from None
    return verts, elems


def _parse_gmsh(lines, path):
    src = _Lines(lines, path)
    nodes = None
    by_type = {1: [], 2: [], 4: []}
    saw_format = False
    while True:
        try:
            tag = src.next("section")
        except MeshParseError:
            break
        if tag == "$MeshFormat":
            tok = src.next("format line").split()
            if len(tok) < 2 or not tok[0].startswith("2"):
                raise src.error(f"unsupported MSH version {tok[0] if tok else '?'}; need 2.x")
            if tok[1] != "0":
                raise src.error("binary MSH files are not supported")
            if src.next("$EndMeshFormat") != "$EndMeshFormat":
                raise src.error("expected $EndMeshFormat")
            saw_format = True
        elif tag == "$Nodes":
            try:
                count = int(src.next("node count"))
            except ValueError:
                raise src.error("invalid node count") from None
            nodes = {}
            for _ in range(count):
                tok = src.next("node").split()
                if len(tok) != 4:
                    raise src.error("node line must be 'id x y z'")
                try:
                    nodes[int(tok[0])] = (float(tok[1]), float(tok[2]), float(tok[3]))
                except ValueError:
                    raise src.error("invalid node line") from None
            if src.next("$EndNodes") != "$EndNodes":
                raise src.error("expected $EndNodes")
        elif tag == "$Elements":
            try:
                count = int(src.next("element count"))
            except ValueError:
                raise src.error("invalid element count") from None
            for _ in range(count):
                tok = src.next("element").split()
                try:
                    vals = [int(t) for t in tok]
                except ValueError:
                    raise src.error("invalid element line") from None
                if len(vals) < 3:
                    raise src.error("element line too short")
                etype, ntags = vals[1], vals[2]
                if etype not in _GMSH_NODES:
                    raise src.error(f"unsupported element type {etype}")
                conn = vals[3 + ntags:]
                if len(conn) != _GMSH_NODES[etype]:
                    raise src.error(f"element type {etype} needs {_GMSH_NODES[etype]} nodes, got {len(conn)}")
                if etype in by_type:
                    by_type[etype].append(conn)
            if src.next("$EndElements") != "$EndElements":
                raise src.error("expected $EndElements")
        elif tag.startswith("$"):
            end = "$End" + tag[1:]
            while src.next(end) != end:
                pass
        else:
            raise src.error(f"unexpected content {tag!r}")
    if not saw_format:
        raise MeshParseError("missing $MeshFormat section", None, path)
    if nodes is None:
        raise MeshParseError("missing $Nodes section", None, path)
    if by_type[4]:
        conn, dim = by_type[4], 3
    elif by_type[2]:
        conn, dim = by_type[2], 2
    else:
        raise MeshParseError("no triangle or tetrahedron elements", None, path)
    ids = sorted(nodes)
    index = {nid: i for i, nid in enumerate(ids)}
    coords = np.array([nodes[i] for i in ids])
    if dim == 2:
        if not np.allclose(coords[:, 2], 0.0):
            raise MeshParseError("2D mesh with non-zero z coordinates", None, path)
        coords = coords[:, :2]
    try:
        elems = np.array([[index[v] for v in c] for c in conn], dtype=np.int64)
    except KeyError as exc:
        raise MeshParseError(f"element references unknown node {exc.args[0]}", None, path) from None
    # drop nodes not referenced by any simplex (e.g. geometry points)
    used = np.unique(elems)
    remap = np.full(len(coords), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return coords[used], remap[elems]


def write_native(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{mesh.dim} {mesh.num_vertices} {mesh.num_elements}\n")
        for p in mesh.vertices:
            fh.write(" ".join(repr(float(c)) for c in p) + "\n")
        for e in mesh.elements:
            fh.write(" ".join(str(int(v)) for v in e) + "\n")


def write_gmsh(mesh: Mesh, path) -> None:
    etype = 2 if mesh.dim == 2 else 4
    with open(path, "w") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n")
        fh.write(f"{mesh.num_vertices}\n")
        for i, p in enumerate(mesh.vertices, start=1):
            xyz = list(p) + [0.0] * (3 - mesh.dim)
            fh.write(f"{i} " + " ".join(repr(float(c)) for c in xyz) + "\n")
        fh.write("$EndNodes\n$Elements\n")
        fh.write(f"{mesh.num_elements}\n")
        for i, e in enumerate(mesh.elements, start=1):
            fh.write(f"{i} {etype} 2 1 1 " + " ".join(str(int(v) + 1) for v in e) + "\n")
        fh.write("$EndElements\n")
