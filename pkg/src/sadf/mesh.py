"""Surface and tetrahedral meshes of the inverted domain.

Two mesh sources are supported: ingest of an externally generated tetrahedral
mesh (Gmsh 2.2 ASCII or TetGen ``.node``/``.ele``) and a deterministic
generator for surfaces that are star-shaped around the inversion origin.
Parsers reject malformed input, they never repair it.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    BoundaryMismatch,
    DegenerateTriangle,
    InvertedOrientation,
    MissingOriginVertex,
    NegativeVolumeTet,
    NotStarShaped,
    NotWatertight,
    ParseError,
    SizingTooCoarse,
)
from .kelvin import InversionFrame, SizingField

log = logging.getLogger(__name__)

TRIANGLE_AREA_EPS = 1e-14
TET_VOLUME_EPS = 1e-16
ORIGIN_EPS = 1e-12
BOUNDARY_MATCH_TOL = 1e-9


# --------------------------------------------------------------------------
# Surface meshes
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        v.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def signed_volume(self) -> float:
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()) + len(self.triangles)

    def validate(self) -> "SurfaceMesh":
        validate_surface(self)
        return self


def validate_surface(surface: SurfaceMesh) -> None:
    v, t = surface.vertices, surface.triangles
    if len(t) == 0 or len(v) < 4:
        raise ParseError("surface has no triangles")
    if t.min() < 0 or t.max() >= len(v):
        raise ParseError("triangle references a missing vertex")
    if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
        bad = int(np.flatnonzero((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2]))[0])
        raise DegenerateTriangle(f"triangle {bad} repeats a vertex: {t[bad].tolist()}")

    radius = float(np.linalg.norm(v - v.mean(axis=0), axis=1).max())
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1) / max(radius, 1e-300) ** 2
    if np.any(area <= TRIANGLE_AREA_EPS):
        bad = int(np.flatnonzero(area <= TRIANGLE_AREA_EPS)[0])
        raise DegenerateTriangle(f"triangle {bad} has zero area: {t[bad].tolist()}")

    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    undirected = np.sort(directed, axis=1)
    _, counts = np.unique(undirected, axis=0, return_counts=True)
    if np.any(counts != 2):
        uniq, counts = np.unique(undirected, axis=0, return_counts=True)
        bad = uniq[np.flatnonzero(counts != 2)[0]]
        raise NotWatertight(
            f"edge {bad.tolist()} is shared by {counts[counts != 2][0]} triangles (expected 2)"
        )
    d_uniq, d_counts = np.unique(directed, axis=0, return_counts=True)
    if np.any(d_counts != 1):
        bad = d_uniq[np.flatnonzero(d_counts != 1)[0]]
        owner = int(np.flatnonzero((directed == bad).all(axis=1))[1] % len(t))
        raise InvertedOrientation(
            f"triangle {owner} is inconsistently oriented (directed edge {bad.tolist()} repeated)"
        )
    if surface.signed_volume() <= 0:
        raise InvertedOrientation("surface normals point inward (signed volume <= 0)")


def _parse_index(token: str, n_vertices: int, lineno: int) -> int:
    try:
        idx = int(token.split("/")[0])
    except ValueError:
        raise ParseError(f"line {lineno}: bad face index {token!r}") from None
    if idx < 0:
        idx = n_vertices + idx
    else:
        idx -= 1
    return idx


def _read_obj(text: str):
    verts, tris = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise ParseError(f"line {lineno}: vertex needs 3 coordinates")
            try:
                verts.append([float(x) for x in parts[1:4]])
            except ValueError:
                raise ParseError(f"line {lineno}: bad vertex coordinate") from None
        elif parts[0] == "f":
            if len(parts) != 4:
                raise ParseError(f"line {lineno}: only triangular faces are supported")
            tris.append([_parse_index(tok, len(verts), lineno) for tok in parts[1:]])
    return verts, tris


def _read_off(text: str):
    tokens = []
    for line in text.splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "OFF":
        raise ParseError("missing OFF header")
    try:
        nv, nf = int(tokens[1]), int(tokens[2])
        pos = 4
        verts = [[float(tokens[pos + 3 * i + k]) for k in range(3)] for i in range(nv)]
        pos += 3 * nv
        tris = []
        for i in range(nf):
            k = int(tokens[pos])
            if k != 3:
                raise ParseError(f"face {i}: only triangular faces are supported")
            tris.append([int(tokens[pos + 1 + j]) for j in range(3)])
            pos += 1 + k
    except (IndexError, ValueError):
        raise ParseError("truncated or malformed OFF file") from None
    return verts, tris


def load_surface(path, format: str | None = None) -> SurfaceMesh:
    """Load and validate an OBJ or OFF triangle surface."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).upper()
    try:
        text = path.read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if fmt == "OBJ":
        verts, tris = _read_obj(text)
    elif fmt == "OFF":
        verts, tris = _read_off(text)
    else:
        raise ParseError(f"unsupported surface format {fmt!r}")
    if not verts or not tris:
        raise ParseError(f"{path}: no vertices or faces")
    return SurfaceMesh(np.array(verts), np.array(tris)).validate()


# Irrational-ish fixed direction keeps exact degeneracies rare; the
# index-keyed tie rule below resolves the remaining ones.
_RAY_DIR = np.array([0.5773502691896258, 0.3141592653589793, 0.7536248770366612])
_RAY_DIR = _RAY_DIR / np.linalg.norm(_RAY_DIR)


def _edge_signs(p, a, b, ia, ib):
    """Sign of the ray's side of directed edge a->b with symbolic tie-breaking.

    A zero orientation is replaced by +1 when the edge runs from the lower to
    the higher vertex index and -1 otherwise, so the two triangles sharing an
    edge always see opposite signs and exactly one of them claims the hit.
    """
    s = np.einsum("j,ij->i", _RAY_DIR, np.cross(a - p, b - p))
    sign = np.sign(s)
    zero = sign == 0
    sign[zero] = np.where(ia[zero] < ib[zero], 1.0, -1.0)
    return sign


def contains(surface: SurfaceMesh, p, eps: float = 1e-12) -> bool:
    """Strict-interior test by ray-crossing parity. Points on the surface are outside."""
    p = np.asarray(p, dtype=np.float64)
    v, t = surface.vertices, surface.triangles
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    n = np.cross(b - a, c - a)
    nn = np.linalg.norm(n, axis=1)
    plane_dist = np.einsum("ij,ij->i", n, p - a) / nn
    scale = float(np.abs(v).max()) or 1.0
    near = np.abs(plane_dist) <= eps * scale
    if np.any(near):
        # on-face check: barycentric containment within the supporting plane
        for k in np.flatnonzero(near):
            if _point_in_triangle(p, a[k], b[k], c[k], eps * scale):
                return False

    s0 = _edge_signs(p, a, b, t[:, 0], t[:, 1])
    s1 = _edge_signs(p, b, c, t[:, 1], t[:, 2])
    s2 = _edge_signs(p, c, a, t[:, 2], t[:, 0])
    through = (s0 == s1) & (s1 == s2)
    denom = n @ _RAY_DIR
    with np.errstate(divide="ignore", invalid="ignore"):
        tpar = np.einsum("ij,ij->i", n, a - p) / denom
    hits = through & (tpar > 0)
    return bool(np.count_nonzero(hits) % 2 == 1)


def _point_in_triangle(p, a, b, c, tol) -> bool:
    e0, e1, w = b - a, c - a, p - a
    d00, d01, d11 = e0 @ e0, e0 @ e1, e1 @ e1
    d20, d21 = w @ e0, w @ e1
    den = d00 * d11 - d01 * d01
    if den <= 0:
        return False
    v = (d11 * d20 - d01 * d21) / den
    u = (d00 * d21 - d01 * d20) / den
    lim = -tol / math.sqrt(max(d00, d11))
    return v >= lim and u >= lim and (1 - u - v) >= lim


# --------------------------------------------------------------------------
# Built-in surfaces
# --------------------------------------------------------------------------

def icosphere(subdivisions: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> SurfaceMesh:
    """Geodesic sphere: ``10 * 4**k + 2`` vertices, outward oriented."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return SurfaceMesh(v, np.array(faces))


def box_surface(extents=(1.0, 1.0, 1.0), divisions=(4, 4, 4), center=(0.0, 0.0, 0.0)) -> SurfaceMesh:
    """Axis-aligned box with each face split into a regular grid of triangle pairs."""
    ext = np.asarray(extents, dtype=np.float64)
    div = [int(d) for d in divisions]
    lo = -ext / 2
    index: dict[tuple[int, int, int], int] = {}
    verts: list[np.ndarray] = []

    def vid(ijk):
        if ijk not in index:
            index[ijk] = len(verts)
            verts.append(lo + ext * np.array(ijk, dtype=np.float64) / div)
        return index[ijk]

    tris = []
    for axis in range(3):
        u, w = (axis + 1) % 3, (axis + 2) % 3
        for side in (0, div[axis]):
            for i in range(div[u]):
                for j in range(div[w]):
                    quad = []
                    for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        ijk = [0, 0, 0]
                        ijk[axis], ijk[u], ijk[w] = side, i + di, j + dj
                        quad.append(vid(tuple(ijk)))
                    q0, q1, q2, q3 = quad
                    # alternate the split diagonal so the grid stays symmetric
                    if (i + j) % 2 == 0:
                        pair = [(q0, q1, q2), (q0, q2, q3)]
                    else:
                        pair = [(q0, q1, q3), (q1, q2, q3)]
                    if side == 0:
                        pair = [(a, c, b) for a, b, c in pair]
                    tris += pair
    v = np.array(verts) + np.asarray(center, dtype=np.float64)
    return SurfaceMesh(v, np.array(tris))


def cube_surface(size: float = 1.0, divisions: int = 4) -> SurfaceMesh:
    return box_surface((size, size, size), (divisions,) * 3)


BUILTIN_SHAPES = ("sphere", "cube", "box")
# elongated box standing in for a long tool (handle along x)
BOX_EXTENTS = (3.0, 0.6, 0.3)


def builtin_surface(name: str, l_x: float, refine: int | None = None) -> SurfaceMesh:
    """Built-in fixture whose surface edge length roughly matches ``l_x``.

    ``refine`` overrides the automatic choice (icosphere subdivisions or
    divisions along the cube edge / the box's shortest side).
    """
    if name == "sphere":
        k = refine if refine is not None else int(np.clip(math.ceil(math.log2(1.05 / l_x)), 1, 5))
        return icosphere(k)
    if name == "cube":
        # normalized edge = (1 / n) / (sqrt(3) / 2)
        n = refine if refine is not None else max(2, math.ceil(1.0 / (0.8660254037844386 * l_x)))
        return cube_surface(1.0, n)
    if name == "box":
        ext = np.array(BOX_EXTENTS)
        radius = 0.5 * float(np.linalg.norm(ext))
        h = (ext.min() / refine) if refine is not None else l_x * radius
        div = tuple(max(1, math.ceil(e / h)) for e in ext)
        return box_surface(BOX_EXTENTS, div)
    raise ValueError(f"unknown built-in shape {name!r}; choose from {BUILTIN_SHAPES}")


def torus_surface(major: float = 1.0, minor: float = 0.3, n_major: int = 24, n_minor: int = 12) -> SurfaceMesh:
    verts, tris = [], []
    for i in range(n_major):
        th = 2 * math.pi * i / n_major
        for j in range(n_minor):
            ph = 2 * math.pi * j / n_minor
            r = major + minor * math.cos(ph)
            verts.append((r * math.cos(th), r * math.sin(th), minor * math.sin(ph)))
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = ((i + 1) % n_major) * n_minor + j
            c = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            d = i * n_minor + (j + 1) % n_minor
            tris += [(a, b, c), (a, c, d)]
    return SurfaceMesh(np.array(verts), np.array(tris))


# --------------------------------------------------------------------------
# Tetrahedral domains
# --------------------------------------------------------------------------

def tet_signed_volumes(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    p0 = vertices[tets[:, 0]]
    e1 = vertices[tets[:, 1]] - p0
    e2 = vertices[tets[:, 2]] - p0
    e3 = vertices[tets[:, 3]] - p0
    return np.einsum("ij,ij->i", e1, np.cross(e2, e3)) / 6.0


# face k of a tet is the face opposite local vertex k, wound outward for a
# positively oriented tet
_TET_FACES = np.array([[1, 3, 2], [0, 2, 3], [0, 3, 1], [0, 1, 2]])


@dataclass(frozen=True, eq=False)
class TetDomain:
    """Tetrahedral mesh of the compactified inverted domain.

    ``boundary_vertex_ids[i]`` is the domain vertex carrying surface vertex
    ``i``; the interior set includes the compactification vertex at ``y = 0``.
    """

    vertices: np.ndarray
    tets: np.ndarray
    boundary_vertex_ids: np.ndarray
    interior_vertex_ids: np.ndarray
    origin_vertex_id: int
    frame: InversionFrame
    star_shaped: bool = False
    sizing: SizingField | None = field(default=None)

    def __post_init__(self):
        for name, dtype in (("vertices", np.float64), ("tets", np.int64),
                            ("boundary_vertex_ids", np.int64), ("interior_vertex_ids", np.int64)):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "origin_vertex_id", int(self.origin_vertex_id))

    @property
    def n_verts(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    def volumes(self) -> np.ndarray:
        return tet_signed_volumes(self.vertices, self.tets)

    @cached_property
    def neighbors(self) -> np.ndarray:
        """``neighbors[t, k]``: tet across the face opposite local vertex k, or -1."""
        return tet_neighbors(self.tets)

    @cached_property
    def boundary_faces(self) -> np.ndarray:
        t, k = np.nonzero(self.neighbors < 0)
        return self.tets[t[:, None], _TET_FACES[k]]

    @cached_property
    def is_boundary(self) -> np.ndarray:
        mask = np.zeros(self.n_verts, dtype=bool)
        mask[self.boundary_vertex_ids] = True
        return mask

    @cached_property
    def barycentric_table(self) -> np.ndarray:
        """Per tet: the 3x3 inverse edge matrix (row-major) followed by vertex 0, (T, 12)."""
        p = self.vertices[self.tets]
        inv = np.linalg.inv(np.transpose(p[:, 1:] - p[:, :1], (0, 2, 1)))
        table = np.concatenate([inv.reshape(-1, 9), p[:, 0]], axis=1)
        return np.ascontiguousarray(table)

    @cached_property
    def default_start(self) -> int:
        """A tet incident to the compactification vertex; unhinted walks start here."""
        hits = np.flatnonzero((self.tets == self.origin_vertex_id).any(axis=1))
        return int(hits[0]) if len(hits) else 0

    def validate(self) -> "TetDomain":
        n = self.n_verts
        if self.tets.size and (self.tets.min() < 0 or self.tets.max() >= n):
            raise NegativeVolumeTet("tet references a missing vertex")
        vol = self.volumes()
        if np.any(vol <= TET_VOLUME_EPS):
            bad = int(np.flatnonzero(vol <= TET_VOLUME_EPS)[0])
            raise NegativeVolumeTet(
                f"tet {bad} {self.tets[bad].tolist()} has signed volume {vol[bad]:.3e}"
            )
        ids = np.concatenate([self.boundary_vertex_ids, self.interior_vertex_ids])
        if len(ids) != n or not np.array_equal(np.sort(ids), np.arange(n)):
            raise BoundaryMismatch("boundary and interior ids do not partition the vertices")
        o = self.origin_vertex_id
        if self.is_boundary[o] or np.linalg.norm(self.vertices[o]) >= ORIGIN_EPS:
            raise MissingOriginVertex(f"vertex {o} is not an interior vertex at y = 0")
        return self


def tet_neighbors(tets: np.ndarray) -> np.ndarray:
    nt = len(tets)
    faces = tets[:, _TET_FACES].reshape(-1, 3)
    keys = np.sort(faces, axis=1)
    order = np.lexsort(keys.T[::-1])
    sk = keys[order]
    same = np.all(sk[1:] == sk[:-1], axis=1)
    nbr = np.full(4 * nt, -1, dtype=np.int64)
    first = order[:-1][same]
    second = order[1:][same]
    if len(first) and np.any(np.diff(np.flatnonzero(same)) == 1):
        raise NegativeVolumeTet("a face is shared by more than two tets")
    nbr[first] = second // 4
    nbr[second] = first // 4
    return nbr.reshape(nt, 4)


def _boundary_face_keys(tets: np.ndarray) -> np.ndarray:
    nbr = tet_neighbors(tets)
    t, k = np.nonzero(nbr < 0)
    return tets[t[:, None], _TET_FACES[k]]


def _finalize_ingested(vertices, tets, frame, surface: SurfaceMesh) -> TetDomain:
    vertices = np.asarray(vertices, dtype=np.float64)
    tets = np.asarray(tets, dtype=np.int64)
    vol = tet_signed_volumes(vertices, tets)
    if np.any(vol <= TET_VOLUME_EPS):
        bad = int(np.flatnonzero(vol <= TET_VOLUME_EPS)[0])
        raise NegativeVolumeTet(f"tet {bad} {tets[bad].tolist()} has signed volume {vol[bad]:.3e}")

    origin_d = np.linalg.norm(vertices, axis=1)
    origin_id = int(np.argmin(origin_d))
    if origin_d[origin_id] >= ORIGIN_EPS:
        raise MissingOriginVertex(
            f"no vertex within {ORIGIN_EPS} of y = 0 (closest at {origin_d[origin_id]:.3e})"
        )

    y_surf = frame.to_inverted(surface.vertices)
    dist, match = cKDTree(vertices).query(y_surf)
    if np.any(dist > BOUNDARY_MATCH_TOL):
        bad = int(np.argmax(dist))
        raise BoundaryMismatch(
            f"surface vertex {bad} has no mesh vertex within {BOUNDARY_MATCH_TOL} (closest {dist[bad]:.3e})"
        )
    if len(np.unique(match)) != len(match):
        raise BoundaryMismatch("two surface vertices matched the same mesh vertex")

    bfaces = _boundary_face_keys(tets)
    if len(np.unique(bfaces)) != len(match):
        raise BoundaryMismatch(
            f"mesh boundary has {len(np.unique(bfaces))} vertices, surface has {len(match)}"
        )
    expected = np.sort(match[surface.triangles], axis=1)
    got = np.sort(bfaces, axis=1)
    if not np.array_equal(np.unique(expected, axis=0), np.unique(got, axis=0)):
        raise BoundaryMismatch("mesh boundary faces differ from the inverted surface triangles")

    # snap matched vertices onto the exact inverted surface coordinates
    vertices = vertices.copy()
    vertices[match] = y_surf
    vertices[origin_id] = 0.0
    interior = np.setdiff1d(np.arange(len(vertices)), match)
    return TetDomain(vertices, tets, match, interior, origin_id, frame,
                     star_shaped=star_shape_check(surface, frame)).validate()


def _gmsh_sections(lines):
    sections: dict[str, list[str]] = {}
    current = None
    for line in lines:
        s = line.strip()
        if s.startswith("$"):
            if s.startswith("$End"):
                current = None
            else:
                current = s[1:]
                sections[current] = []
        elif current is not None:
            sections[current].append(s)
    return sections


def _read_gmsh(path: Path):
    try:
        lines = path.read_text().splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    sec = _gmsh_sections(lines)
    if "MeshFormat" not in sec or "Nodes" not in sec or "Elements" not in sec:
        raise ParseError("missing $MeshFormat/$Nodes/$Elements section")
    try:
        version, ftype = sec["MeshFormat"][0].split()[:2]
        if not version.startswith("2") or ftype != "0":
            raise ParseError(f"only MSH 2.x ASCII is supported (got version {version}, type {ftype})")
        nodes = sec["Nodes"]
        nn = int(nodes[0])
        if len(nodes) - 1 < nn:
            raise ParseError("truncated $Nodes section")
        ids = np.empty(nn, dtype=np.int64)
        xyz = np.empty((nn, 3))
        for i in range(nn):
            parts = nodes[1 + i].split()
            ids[i] = int(parts[0])
            xyz[i] = [float(x) for x in parts[1:4]]
        elems = sec["Elements"]
        ne = int(elems[0])
        if len(elems) - 1 < ne:
            raise ParseError("truncated $Elements section")
        tets = []
        for i in range(ne):
            parts = elems[1 + i].split()
            if int(parts[1]) != 4:
                continue
            ntags = int(parts[2])
            tets.append([int(x) for x in parts[3 + ntags:7 + ntags]])
    except (IndexError, ValueError) as exc:
        raise ParseError(f"malformed Gmsh file: {exc}") from None
    if not tets:
        raise ParseError("no tetrahedra (element type 4) in file")
    lookup = {int(k): i for i, k in enumerate(ids)}
    try:
        tets = np.array([[lookup[k] for k in t] for t in tets], dtype=np.int64)
    except KeyError as exc:
        raise ParseError(f"element references unknown node {exc}") from None
    return xyz, tets


def _read_table(path: Path):
    rows = []
    try:
        text = path.read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    for line in text.splitlines():
        parts = line.split("#", 1)[0].split()
        if parts:
            rows.append(parts)
    return rows


def _read_tetgen(path: Path):
    base = path.with_suffix("")
    node_rows = _read_table(base.with_suffix(".node"))
    ele_rows = _read_table(base.with_suffix(".ele"))
    try:
        nn, dim = int(node_rows[0][0]), int(node_rows[0][1])
        if dim != 3:
            raise ParseError(f"expected 3D nodes, got dimension {dim}")
        if len(node_rows) - 1 < nn:
            raise ParseError("truncated .node file")
        ids = np.array([int(r[0]) for r in node_rows[1:nn + 1]])
        xyz = np.array([[float(x) for x in r[1:4]] for r in node_rows[1:nn + 1]])
        ne, per = int(ele_rows[0][0]), int(ele_rows[0][1])
        if per != 4:
            raise ParseError(f"only linear tets are supported ({per} nodes per element)")
        if len(ele_rows) - 1 < ne:
            raise ParseError("truncated .ele file")
        raw = np.array([[int(x) for x in r[1:5]] for r in ele_rows[1:ne + 1]], dtype=np.int64)
    except (IndexError, ValueError) as exc:
        raise ParseError(f"malformed TetGen files: {exc}") from None
    lookup = np.full(ids.max() + 1, -1, dtype=np.int64)
    lookup[ids] = np.arange(nn)
    if raw.min() < 0 or raw.max() > ids.max() or np.any(lookup[raw] < 0):
        raise ParseError("element references unknown node")
    return xyz, lookup[raw]


def load_tet_mesh(path, format: str, frame: InversionFrame, surface: SurfaceMesh) -> TetDomain:
    """Ingest a tet mesh given in inverted normalized coordinates.

    ``format`` is ``"gmsh"`` (MSH 2.2 ASCII) or ``"tetgen"`` (``path`` names
    either file of the ``.node``/``.ele`` pair).
    """
    path = Path(path)
    fmt = format.lower()
    if fmt in ("gmsh", "msh", "gmshv2ascii"):
        xyz, tets = _read_gmsh(path)
    elif fmt in ("tetgen", "tetgennodeele", "node", "ele"):
        xyz, tets = _read_tetgen(path)
    else:
        raise ParseError(f"unsupported tet mesh format {format!r}")
    return _finalize_ingested(xyz, tets, frame, surface)


# --------------------------------------------------------------------------
# Star-shaped generator
# --------------------------------------------------------------------------

def _solid_angles(a, b, c):
    """Signed solid angles of triangles seen from the origin (Van Oosterom-Strackee)."""
    la, lb, lc = (np.linalg.norm(x, axis=1) for x in (a, b, c))
    num = np.einsum("ij,ij->i", a, np.cross(b, c))
    den = (la * lb * lc + np.einsum("ij,ij->i", a, b) * lc
           + np.einsum("ij,ij->i", b, c) * la + np.einsum("ij,ij->i", c, a) * lb)
    return 2.0 * np.arctan2(num, den)


def star_shape_check(surface: SurfaceMesh, frame: InversionFrame) -> bool:
    """True if every ray from the inversion origin crosses the surface once.

    Inversion scales each triangle's orientation determinant by a positive
    factor, so the test is done on the normalized (un-inverted) surface.
    """
    q = frame.normalize(surface.vertices)
    t = surface.triangles
    a, b, c = q[t[:, 0]], q[t[:, 1]], q[t[:, 2]]
    det = np.einsum("ij,ij->i", a, np.cross(b, c))
    if np.any(det <= 0):
        return False
    return abs(_solid_angles(a, b, c).sum() - 4 * np.pi) < 1e-6


def default_sizing(surface: SurfaceMesh, frame: InversionFrame, l_x: float) -> SizingField:
    """Sizing with the lower bound at half the shortest inverted surface edge."""
    y = frame.to_inverted(surface.vertices)
    e = surface.edges()
    min_edge = float(np.linalg.norm(y[e[:, 0]] - y[e[:, 1]], axis=1).min())
    return SizingField(l_x=l_x, l_y_min=0.5 * min_edge)


def shell_scales(surface_y: np.ndarray, sizing_field: SizingField) -> np.ndarray:
    """Scale factors ``1 = s_0 > s_1 > ... > s_K`` of the radial shells."""
    radii = np.linalg.norm(surface_y, axis=1)
    r_ref = float(np.sort(radii)[len(radii) // 2])
    scales = [1.0]
    s = 1.0
    while True:
        gap = max((s * r_ref) ** 2 * sizing_field.l_x, sizing_field.l_y_min) / r_ref
        nxt = s - gap
        if nxt < 0.5 * gap:
            break
        scales.append(nxt)
        s = nxt
    return np.array(scales)


def generate_star_shaped(surface: SurfaceMesh, frame: InversionFrame,
                         sizing_field: SizingField | float) -> TetDomain:
    """Radially graded tet mesh of the inverted region of a star-shaped surface.

    Scaled copies of the inverted surface form nested shells; each surface
    triangle sweeps a prism between consecutive shells, split into three
    tets by the lowest-index diagonal rule, and the innermost shell is coned
    to the compactification vertex. ``sizing_field`` may be a bare ``l_x``.
    """
    if not star_shape_check(surface, frame):
        raise NotStarShaped("the surface is not star-shaped with respect to the inversion origin")
    if not isinstance(sizing_field, SizingField):
        sizing_field = default_sizing(surface, frame, float(sizing_field))

    y_surf = frame.to_inverted(surface.vertices)
    scales = shell_scales(y_surf, sizing_field)
    n_inner = len(scales) - 1
    if n_inner < 2:
        raise SizingTooCoarse(
            f"sizing l_x={sizing_field.l_x} yields {n_inner} interior shell(s); need at least 2"
        )
    n = len(y_surf)
    layers = scales[:, None, None] * y_surf[None, :, :]
    vertices = np.concatenate([layers.reshape(-1, 3), np.zeros((1, 3))])
    vertices[:n] = y_surf
    origin_id = len(vertices) - 1

    tri = np.sort(surface.triangles, axis=1)
    i, j, m = tri[:, 0], tri[:, 1], tri[:, 2]
    blocks = []
    for k in range(n_inner):
        o, w = k * n, (k + 1) * n
        blocks.append(np.stack([
            np.stack([o + i, o + j, o + m, w + m], axis=1),
            np.stack([o + i, o + j, w + j, w + m], axis=1),
            np.stack([o + i, w + i, w + j, w + m], axis=1),
        ], axis=1).reshape(-1, 4))
    w = n_inner * n
    blocks.append(np.stack([np.full_like(i, origin_id), w + i, w + j, w + m], axis=1))
    tets = np.concatenate(blocks)

    vol = tet_signed_volumes(vertices, tets)
    flip = vol < 0
    tets[flip] = tets[flip][:, [0, 1, 3, 2]]

    boundary = np.arange(n)
    interior = np.arange(n, len(vertices))
    domain = TetDomain(vertices, tets, boundary, interior, origin_id, frame,
                       star_shaped=True, sizing=sizing_field)
    log.debug("generated %d shells, %d vertices, %d tets", n_inner, domain.n_verts, domain.n_tets)
    return domain.validate()


def inverted_surface_volume(surface: SurfaceMesh, frame: InversionFrame) -> float:
    """Volume enclosed by the inverted surface, by the divergence theorem."""
    y = frame.to_inverted(surface.vertices)
    t = surface.triangles
    return float(np.einsum("ij,ij->i", y[t[:, 0]], np.cross(y[t[:, 1]], y[t[:, 2]])).sum() / 6.0)


def mesh_stats(domain: TetDomain) -> dict:
    """Counts plus a serialized-size estimate (8 bytes per float, 4 per index)."""
    nv, nt = domain.n_verts, domain.n_tets
    memory = 8 * 3 * nv + 4 * 4 * nt + 8 * nv
    return {"n_verts": nv, "n_tets": nt, "memory_bytes": memory}
