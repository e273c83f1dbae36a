"""Binary field bundles and legacy-VTK grid export.

Bundle layout (little-endian, every section 8-byte aligned)::

    header      80 bytes   see HEADER
    vertices    f64[n_verts, 3]
    tets        u32[n_tets, 4]
    boundary    u32[n_boundary]   zero-padded to a multiple of 8 bytes
    V           f64[n_verts]
    sigma       f64[n_boundary]
    vertex_grad f64[n_verts, 3]

The factorization is not stored; a loaded field answers queries and can be
refactorized for semantic updates.
"""
from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import BadMagic, CountMismatch, TruncatedBundle, VersionMismatch
from .field import STATUS_OK, Field, SemanticState
from .kelvin import InversionFrame
from .mesh import TetDomain

MAGIC = b"SADF"
VERSION = 1
# magic, version, n_verts, n_tets, n_boundary, origin xyz, scale, flags, origin vertex
HEADER = struct.Struct("<4sIQQQ3ddQQ")
FLAG_STAR_SHAPED = 1
SENTINEL = -1e30

assert HEADER.size == 80


def _pad8(n: int) -> int:
    return (n + 7) & ~7


def bundle_size(n_verts: int, n_tets: int, n_boundary: int) -> int:
    """Exact byte length of a bundle with the given counts."""
    return (HEADER.size + 24 * n_verts + 16 * n_tets + _pad8(4 * n_boundary)
            + 8 * n_verts + 8 * n_boundary + 24 * n_verts)


def _sections(nv: int, nt: int, nb: int):
    return (("vertices", "<f8", (nv, 3), 24 * nv),
            ("tets", "<u4", (nt, 4), 16 * nt),
            ("boundary", "<u4", (nb,), _pad8(4 * nb)),
            ("V", "<f8", (nv,), 8 * nv),
            ("sigma", "<f8", (nb,), 8 * nb),
            ("vertex_grad", "<f8", (nv, 3), 24 * nv))


def save_bundle(field: Field, path) -> int:
    d = field.domain
    nv, nt, nb = d.n_verts, d.n_tets, len(d.boundary_vertex_ids)
    if nv >= 2**32:
        raise ValueError("bundle indices are 32-bit; too many vertices")
    flags = FLAG_STAR_SHAPED if d.star_shaped else 0
    o = d.frame.origin
    header = HEADER.pack(MAGIC, VERSION, nv, nt, nb, float(o[0]), float(o[1]), float(o[2]),
                         float(d.frame.scale), flags, d.origin_vertex_id)
    arrays = {
        "vertices": d.vertices, "tets": d.tets, "boundary": d.boundary_vertex_ids,
        "V": field.V, "sigma": field.sigma, "vertex_grad": field.vertex_grad,
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        for name, dtype, shape, nbytes in _sections(nv, nt, nb):
            raw = np.ascontiguousarray(arrays[name], dtype=dtype).reshape(shape).tobytes()
            fh.write(raw)
            fh.write(b"\0" * (nbytes - len(raw)))
    os.replace(tmp, path)
    return bundle_size(nv, nt, nb)


def read_header(buf: bytes) -> dict:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagic(f"not a field bundle (magic {bytes(buf[:4])!r})")
    if len(buf) < 8:
        raise TruncatedBundle("bundle header is truncated")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != VERSION:
        raise VersionMismatch(f"bundle version {version}, expected {VERSION}")
    if len(buf) < HEADER.size:
        raise TruncatedBundle(f"bundle header is {len(buf)} bytes, expected {HEADER.size}")
    _, _, nv, nt, nb, ox, oy, oz, scale, flags, ovid = HEADER.unpack_from(buf)
    return {"n_verts": nv, "n_tets": nt, "n_boundary": nb, "origin": (ox, oy, oz),
            "scale": scale, "flags": flags, "origin_vertex_id": ovid}


def load_bundle(path) -> Field:
    """Load a query-only field (no factorization)."""
    buf = Path(path).read_bytes()
    hdr = read_header(buf)
    nv, nt, nb = hdr["n_verts"], hdr["n_tets"], hdr["n_boundary"]
    if nb > nv or hdr["origin_vertex_id"] >= max(nv, 1):
        raise CountMismatch(f"header counts inconsistent: {nb} boundary of {nv} vertices, "
                            f"origin vertex {hdr['origin_vertex_id']}")
    # compare with arbitrary-precision ints before trusting counts for allocation
    expected = bundle_size(nv, nt, nb)
    if len(buf) < expected:
        raise TruncatedBundle(f"bundle is {len(buf)} bytes, header promises {expected}")
    if len(buf) > expected:
        raise CountMismatch(f"bundle is {len(buf)} bytes, header counts give {expected}")

    arrays = {}
    offset = HEADER.size
    for name, dtype, shape, nbytes in _sections(nv, nt, nb):
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(buf, dtype=dtype, count=count, offset=offset).reshape(shape)
        offset += nbytes
    tets = arrays["tets"].astype(np.int64)
    boundary = arrays["boundary"].astype(np.int64)
    if nt and tets.max() >= nv or nb and boundary.max() >= nv:
        raise CountMismatch("index arrays reference vertices beyond the header count")
    is_boundary = np.zeros(nv, dtype=bool)
    is_boundary[boundary] = True
    if is_boundary.sum() != nb:
        raise CountMismatch("boundary index set has duplicates")

    frame = InversionFrame(np.array(hdr["origin"]), hdr["scale"])
    domain = TetDomain(arrays["vertices"].astype(np.float64), tets, boundary,
                       np.flatnonzero(~is_boundary), hdr["origin_vertex_id"], frame,
                       bool(hdr["flags"] & FLAG_STAR_SHAPED))
    sigma = arrays["sigma"].astype(np.float64)
    return Field(domain, arrays["V"].astype(np.float64), sigma,
                 arrays["vertex_grad"].astype(np.float64),
                 state=SemanticState(sigma, {"mode": "table"}))


def _axis(lo: float, hi: float, n: int) -> np.ndarray:
    return np.linspace(lo, hi, n) if n > 1 else np.array([0.5 * (lo + hi)])


def export_grid(field: Field, bbox, resolution, path, gradient: str = "vertex") -> int:
    """Sample ``h`` on a regular grid and write legacy VTK STRUCTURED_POINTS.

    ``bbox`` is ``((xmin, ymin, zmin), (xmax, ymax, zmax))``. ``resolution``
    is ``(nx, ny, nz)``; an axis with a count of 1 makes a slice at its
    bbox midpoint. At least two axes need 2 or more samples. Samples
    inside the object (or otherwise without a value) are written as
    ``-1e30``.
    """
    lo = np.asarray(bbox[0], dtype=np.float64).reshape(3)
    hi = np.asarray(bbox[1], dtype=np.float64).reshape(3)
    res = tuple(int(n) for n in resolution)
    if len(res) != 3 or min(res) < 1 or sum(n >= 2 for n in res) < 2:
        raise ValueError(f"resolution {resolution!r} needs >= 2 samples on at least two axes")
    if np.any(hi < lo):
        raise ValueError("bbox max must not be below bbox min")
    xs, ys, zs = (_axis(lo[k], hi[k], res[k]) for k in range(3))
    # VTK point order: x fastest, then y, then z
    Z, Y, X = np.meshgrid(zs, ys, xs, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    out = field.query_many(pts, gradient=gradient)
    h = np.where(out.status == STATUS_OK, out.h, SENTINEL)
    spacing = [(hi[k] - lo[k]) / (res[k] - 1) if res[k] > 1 else 1.0 for k in range(3)]

    lines = [
        "# vtk DataFile Version 3.0",
        "semantics-aware distance h",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS %d %d %d" % res,
        "ORIGIN %.17g %.17g %.17g" % (xs[0], ys[0], zs[0]),
        "SPACING %.17g %.17g %.17g" % tuple(spacing),
        f"POINT_DATA {len(h)}",
        "SCALARS h double 1",
        "LOOKUP_TABLE default",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
        np.savetxt(fh, h, fmt="%.17g")
    return len(h)


def read_vtk_structured_points(path) -> tuple[dict, np.ndarray]:
    """Strict reader for the subset written by :func:`export_grid`."""
    with open(path) as fh:
        text = fh.read().split("\n")
    if not text[0].startswith("# vtk DataFile Version"):
        raise ValueError("missing VTK version line")
    if text[2].strip() != "ASCII" or text[3].strip() != "DATASET STRUCTURED_POINTS":
        raise ValueError("expected ASCII STRUCTURED_POINTS")
    meta = {}
    for line, key, conv in ((text[4], "DIMENSIONS", int), (text[5], "ORIGIN", float),
                            (text[6], "SPACING", float)):
        parts = line.split()
        if parts[0] != key or len(parts) != 4:
            raise ValueError(f"bad {key} line: {line!r}")
        meta[key.lower()] = tuple(conv(p) for p in parts[1:])
    parts = text[7].split()
    if parts[0] != "POINT_DATA":
        raise ValueError("missing POINT_DATA")
    n = int(parts[1])
    if n != int(np.prod(meta["dimensions"])):
        raise ValueError("POINT_DATA count does not match DIMENSIONS")
    if text[8].split()[:2] != ["SCALARS", "h"] or text[9].strip() != "LOOKUP_TABLE default":
        raise ValueError("missing SCALARS/LOOKUP_TABLE header")
    values = np.array([float(v) for line in text[10:] for v in line.split()])
    if len(values) != n:
        raise ValueError(f"expected {n} samples, found {len(values)}")
    return meta, values
