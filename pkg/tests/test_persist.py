import struct

import numpy as np
import pytest

from conftest import exterior_points, single_tet_domain
from sadf.errors import BadMagic, CountMismatch, TruncatedBundle, VersionMismatch
from sadf.field import Field
from sadf.persist import (
    HEADER,
    SENTINEL,
    bundle_size,
    export_grid,
    load_bundle,
    read_vtk_structured_points,
    save_bundle,
)


def toy_field():
    d = single_tet_domain()
    return Field(d, np.array([1.0, 1.0, 1.0, 1.0]), np.zeros(3), np.zeros((4, 3)))


def test_toy_bundle_exact_size(tmp_path):
    n = save_bundle(toy_field(), tmp_path / "toy.sadf")
    # header + verts + tet + 3 ids padded to 16 + V + sigma + grad
    expected = 80 + 4 * 24 + 16 + 16 + 4 * 8 + 3 * 8 + 4 * 24
    assert n == expected == bundle_size(4, 1, 3)
    assert (tmp_path / "toy.sadf").stat().st_size == expected
    assert HEADER.size % 8 == 0


def test_round_trip_bit_exact(sphere_field, tmp_path):
    p = tmp_path / "s.sadf"
    save_bundle(sphere_field, p)
    g = load_bundle(p)
    a, b = sphere_field.domain, g.domain
    for x, y in [(a.vertices, b.vertices), (a.tets, b.tets),
                 (a.boundary_vertex_ids, b.boundary_vertex_ids),
                 (a.interior_vertex_ids, b.interior_vertex_ids),
                 (sphere_field.V, g.V), (sphere_field.sigma, g.sigma),
                 (sphere_field.vertex_grad, g.vertex_grad)]:
        assert x.tobytes() == y.tobytes()
    assert a.origin_vertex_id == b.origin_vertex_id and b.star_shaped
    assert np.array_equal(a.frame.origin, b.frame.origin) and a.frame.scale == b.frame.scale
    # save(load(save(f))) is byte-identical
    save_bundle(g, tmp_path / "t.sadf")
    assert p.read_bytes() == (tmp_path / "t.sadf").read_bytes()


def test_loaded_queries_match(offset_sphere_field, tmp_path):
    p = tmp_path / "o.sadf"
    save_bundle(offset_sphere_field, p)
    g = load_bundle(p)
    pts = exterior_points(300, seed=3)
    for mode in ("vertex", "p1"):
        a = offset_sphere_field.query_many(pts, gradient=mode)
        b = g.query_many(pts, gradient=mode)
        assert np.array_equal(a.h, b.h) and np.array_equal(a.grad, b.grad)
        assert np.array_equal(a.tet, b.tet)


def test_truncated(tmp_path):
    p = tmp_path / "toy.sadf"
    save_bundle(toy_field(), p)
    raw = p.read_bytes()
    for cut in (len(raw) - 1, 40, 6):
        p.write_bytes(raw[:cut])
        with pytest.raises(TruncatedBundle):
            load_bundle(p)


def test_bad_magic_and_version(tmp_path):
    p = tmp_path / "toy.sadf"
    save_bundle(toy_field(), p)
    raw = bytearray(p.read_bytes())
    p.write_bytes(b"XXXX" + bytes(raw[4:]))
    with pytest.raises(BadMagic):
        load_bundle(p)
    raw[4:8] = struct.pack("<I", 2)
    p.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatch):
        load_bundle(p)


def test_count_mismatch(tmp_path):
    p = tmp_path / "toy.sadf"
    save_bundle(toy_field(), p)
    raw = bytearray(p.read_bytes())
    p.write_bytes(bytes(raw) + b"\0" * 8)
    with pytest.raises(CountMismatch):
        load_bundle(p)
    bad = bytearray(raw)
    struct.pack_into("<Q", bad, 24, 9)  # more boundary vertices than vertices
    p.write_bytes(bytes(bad))
    with pytest.raises(CountMismatch):
        load_bundle(p)
    bad = bytearray(raw)
    struct.pack_into("<Q", bad, 8, 2**60)  # absurd count is rejected before allocation
    p.write_bytes(bytes(bad))
    with pytest.raises(TruncatedBundle):
        load_bundle(p)


def test_export_all_inside(sphere_field, tmp_path):
    p = tmp_path / "in.vtk"
    n = export_grid(sphere_field, ((-0.2, -0.2, -0.2), (0.2, 0.2, 0.2)), (2, 2, 2), p)
    meta, h = read_vtk_structured_points(p)
    assert n == 8 and meta["dimensions"] == (2, 2, 2)
    assert np.all(h == SENTINEL)


def test_export_matches_log_radius(sphere_field, tmp_path):
    p = tmp_path / "grid.vtk"
    n = export_grid(sphere_field, ((-3, -3, -3), (3, 3, 3)), (9, 7, 5), p)
    meta, h = read_vtk_structured_points(p)
    assert n == 9 * 7 * 5 == len(h)
    xs = meta["origin"][0] + meta["spacing"][0] * np.arange(9)
    ys = meta["origin"][1] + meta["spacing"][1] * np.arange(7)
    zs = meta["origin"][2] + meta["spacing"][2] * np.arange(5)
    Z, Y, X = np.meshgrid(zs, ys, xs, indexing="ij")
    r = np.sqrt(X**2 + Y**2 + Z**2).ravel()
    # grid points on the unit sphere are icosphere vertices and report h = 0
    outside = r > 1.0 - 1e-9
    assert np.all(h[~outside] == SENTINEL)
    assert np.abs(h[outside] - np.log(r[outside])).max() < 1e-9


def test_export_slice(sphere_field, tmp_path):
    p = tmp_path / "slice.vtk"
    n = export_grid(sphere_field, ((-3, -3, 0), (3, 3, 0)), (50, 40, 1), p)
    meta, h = read_vtk_structured_points(p)
    assert n == 2000 and meta["dimensions"] == (50, 40, 1)
    with pytest.raises(ValueError):
        export_grid(sphere_field, ((-3, -3, 0), (3, 3, 0)), (50, 1, 1), p)
