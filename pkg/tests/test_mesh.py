import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import single_tet_domain, write_gmsh, write_tetgen
from sadf.errors import (
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
from sadf.kelvin import InversionFrame, SizingField
from sadf.mesh import (
    SurfaceMesh,
    box_surface,
    builtin_surface,
    contains,
    cube_surface,
    default_sizing,
    generate_star_shaped,
    icosphere,
    inverted_surface_volume,
    load_surface,
    load_tet_mesh,
    mesh_stats,
    shell_scales,
    star_shape_check,
    torus_surface,
)

CUBE_OBJ = """\
# unit cube
v -0.5 -0.5 -0.5
v  0.5 -0.5 -0.5
v  0.5  0.5 -0.5
v -0.5  0.5 -0.5
v -0.5 -0.5  0.5
v  0.5 -0.5  0.5
v  0.5  0.5  0.5
v -0.5  0.5  0.5
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
"""


def write_off(path, surface):
    lines = ["OFF", f"{surface.n_vertices} {len(surface.triangles)} 0"]
    lines += [" ".join(repr(float(c)) for c in v) for v in surface.vertices]
    lines += ["3 " + " ".join(str(int(i)) for i in t) for t in surface.triangles]
    path.write_text("\n".join(lines) + "\n")


# -- surfaces ----------------------------------------------------------------

def test_load_cube_obj(tmp_path):
    p = tmp_path / "cube.obj"
    p.write_text(CUBE_OBJ)
    s = load_surface(p)
    assert s.n_vertices == 8 and len(s.triangles) == 12
    assert s.signed_volume() == pytest.approx(1.0)
    assert s.euler_characteristic() == 2


def test_open_edge_is_not_watertight(tmp_path):
    p = tmp_path / "open.obj"
    p.write_text(CUBE_OBJ.rsplit("f", 1)[0])
    with pytest.raises(NotWatertight):
        load_surface(p)


def test_flipped_triangle_reported(tmp_path):
    p = tmp_path / "flip.obj"
    p.write_text(CUBE_OBJ.replace("f 5 6 7", "f 5 7 6"))
    with pytest.raises(InvertedOrientation, match="triangle"):
        load_surface(p)


def test_inward_surface_rejected():
    s = cube_surface()
    with pytest.raises(InvertedOrientation):
        SurfaceMesh(s.vertices, s.triangles[:, ::-1]).validate()


def test_degenerate_triangle_rejected():
    s = icosphere(1)
    v = s.vertices.copy()
    a, b, c = s.triangles[0]
    v[c] = 0.5 * (v[a] + v[b])
    with pytest.raises(DegenerateTriangle):
        SurfaceMesh(v, s.triangles).validate()


def test_icosphere_off_round_trip(tmp_path):
    p = tmp_path / "sphere.off"
    write_off(p, icosphere(3))
    s = load_surface(p)
    assert s.n_vertices == 642
    assert np.abs(np.linalg.norm(s.vertices, axis=1) - 1).max() < 1e-6


@pytest.mark.parametrize("name, text", [
    ("bad.obj", "v 0 0\nf 1 2 3\n"),
    ("bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3 4\n"),
    ("bad.obj", "v 0 0 x\n"),
    ("bad.off", "OFF\n4 1 0\n0 0 0\n"),
    ("bad.off", "NOFF\n"),
    ("bad.stl", "solid\n"),
])
def test_parse_errors(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    with pytest.raises(ParseError):
        load_surface(p)


def test_missing_file_is_parse_error(tmp_path):
    with pytest.raises(ParseError):
        load_surface(tmp_path / "nope.obj")


# -- containment ---------------------------------------------------------------

def test_contains_examples():
    cube = cube_surface(1.0, 1)
    assert contains(cube, (0, 0, 0))
    assert not contains(cube, (2, 0, 0))
    assert not contains(cube, (0.5, 0.1, 0.2))  # on a face
    assert not contains(cube, (0.5, 0.5, 0.5))  # on a corner


@settings(max_examples=300, deadline=None)
@given(st.tuples(*[st.floats(-0.9, 0.9)] * 3))
def test_contains_matches_box_oracle(p):
    cube = cube_surface(1.0, 2)
    p = np.array(p)
    m = np.abs(p).max()
    if abs(m - 0.5) < 1e-9:
        return
    assert contains(cube, p) == (m < 0.5)


def test_contains_on_grid_vertices_and_edges():
    # rays through mesh vertices and edges exercise the symbolic tie rule
    cube = cube_surface(2.0, 4)
    for p in [(0, 0, 0), (0.5, 0.5, 0.5), (0.25, 0.0, 0.0), (-0.5, 0.5, 0.0)]:
        assert contains(cube, p)
    for p in [(1.5, 0.5, 0.5), (0, 0, 3)]:
        assert not contains(cube, p)


# -- generator -----------------------------------------------------------------

def _generated(surface, lx=0.2):
    frame = InversionFrame.fit(surface.vertices)
    return generate_star_shaped(surface, frame, lx), frame


def test_sphere_vertex_and_tet_counts():
    s = icosphere(2)
    d, frame = _generated(s)
    k = len(shell_scales(frame.to_inverted(s.vertices), default_sizing(s, frame, 0.2))) - 1
    assert d.n_verts == (k + 1) * s.n_vertices + 1
    assert d.n_tets == 3 * k * len(s.triangles) + len(s.triangles)
    assert d.origin_vertex_id == d.n_verts - 1


@pytest.mark.parametrize("surface", [cube_surface(1.0, 4), box_surface((3, 0.6, 0.3), (10, 2, 1)),
                                     icosphere(2)], ids=["cube", "box", "sphere"])
def test_generated_domains_are_valid(surface):
    d, frame = _generated(surface)
    assert d.volumes().min() > 1e-16
    # shells exactly partition the inverted region
    assert d.volumes().sum() == pytest.approx(inverted_surface_volume(surface, frame), rel=1e-8)
    # boundary faces are exactly the surface triangles
    local = np.full(d.n_verts, -1)
    local[d.boundary_vertex_ids] = np.arange(len(d.boundary_vertex_ids))
    got = np.unique(np.sort(local[d.boundary_faces], axis=1), axis=0)
    np.testing.assert_array_equal(got, np.unique(np.sort(surface.triangles, axis=1), axis=0))
    recovered = SurfaceMesh(surface.vertices, local[d.boundary_faces])
    assert recovered.euler_characteristic() == surface.euler_characteristic()
    assert d.star_shaped


def test_generator_is_deterministic():
    a, _ = _generated(cube_surface(1.0, 3))
    b, _ = _generated(cube_surface(1.0, 3))
    assert a.vertices.tobytes() == b.vertices.tobytes()
    assert a.tets.tobytes() == b.tets.tobytes()


def test_shell_scales_grade_toward_boundary():
    s = icosphere(2)
    frame = InversionFrame.fit(s.vertices)
    sc = shell_scales(frame.to_inverted(s.vertices), SizingField(0.1, 0.01))
    gaps = -np.diff(sc)
    assert sc[0] == 1.0 and np.all(gaps > 0)
    # gaps follow |y|^2 l_x, shrinking toward the origin until the lower bound holds
    assert gaps[0] == pytest.approx(0.1)
    assert np.all(np.diff(gaps) <= 1e-15)
    assert gaps[-1] == pytest.approx(0.01)


def test_torus_not_star_shaped():
    t = torus_surface()
    frame = InversionFrame(np.array([1.0, 0.0, 0.0]), 1.5)
    assert not star_shape_check(t, frame)
    with pytest.raises(NotStarShaped):
        generate_star_shaped(t, frame, 0.2)


def test_sizing_too_coarse():
    s = icosphere(1)
    frame = InversionFrame.fit(s.vertices)
    with pytest.raises(SizingTooCoarse):
        generate_star_shaped(s, frame, SizingField(5.0, 0.6))


def test_builtin_surfaces():
    assert builtin_surface("sphere", 0.2).n_vertices == 642
    assert builtin_surface("cube", 0.2).n_vertices == 6 * 36 + 2
    box = builtin_surface("box", 0.2)
    assert np.ptp(box.vertices, axis=0).tolist() == pytest.approx([3.0, 0.6, 0.3])
    with pytest.raises(ValueError):
        builtin_surface("teapot", 0.2)


# -- stats -----------------------------------------------------------------------

def test_mesh_stats_single_tet():
    assert mesh_stats(single_tet_domain()) == {"n_verts": 4, "n_tets": 1,
                                               "memory_bytes": 4 * 24 + 16 + 4 * 8}


def test_mesh_stats_reference_magnitudes():
    # reference rows at l_x = 0.2 (615 verts, 2030 tets) and l_x = 0.02
    # (157448 verts, 864083 tets, 38.0 MB); counts are generator dependent,
    # so only the order of magnitude at l_x = 0.2 is compared.
    d, _ = _generated(builtin_surface("cube", 0.2), 0.2)
    st_ = mesh_stats(d)
    assert 615 / 10 < st_["n_verts"] < 615 * 10
    assert 2030 / 10 < st_["n_tets"] < 2030 * 10
    assert st_["memory_bytes"] < 0.1e6 * 10


# -- ingest ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def cube_case():
    s = cube_surface(1.0, 3)
    frame = InversionFrame.fit(s.vertices)
    return s, frame, generate_star_shaped(s, frame, 0.25)


def _shuffled(domain, seed=0):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(domain.n_verts)
    inv = np.argsort(perm)
    return domain.vertices[perm], inv[domain.tets]


def test_gmsh_ingest_matches_generator(tmp_path, cube_case):
    s, frame, ref = cube_case
    verts, tets = _shuffled(ref)
    # round the coordinates a little: ingest snaps within 1e-9
    verts = np.round(verts, 12)
    p = tmp_path / "ball.msh"
    write_gmsh(p, verts, tets, node_offset=7)
    d = load_tet_mesh(p, "gmsh", frame, s)
    assert d.n_verts == ref.n_verts and d.n_tets == ref.n_tets
    np.testing.assert_array_equal(d.vertices[d.boundary_vertex_ids], frame.to_inverted(s.vertices))
    assert np.linalg.norm(d.vertices[d.origin_vertex_id]) == 0.0
    assert d.star_shaped


def test_tetgen_ingest(tmp_path, cube_case):
    s, frame, ref = cube_case
    verts, tets = _shuffled(ref, 1)
    node = write_tetgen(tmp_path / "ball", verts, tets, first=0)
    d = load_tet_mesh(node, "tetgen", frame, s)
    assert d.volumes().sum() == pytest.approx(ref.volumes().sum(), rel=1e-12)


def test_tetgen_flipped_tet(tmp_path, cube_case):
    s, frame, ref = cube_case
    tets = ref.tets.copy()
    tets[5] = tets[5][[0, 2, 1, 3]]
    node = write_tetgen(tmp_path / "flip", ref.vertices, tets)
    with pytest.raises(NegativeVolumeTet):
        load_tet_mesh(node.with_suffix(".ele"), "tetgen", frame, s)


def test_missing_origin_vertex(tmp_path, cube_case):
    s, frame, ref = cube_case
    v = ref.vertices.copy()
    v[ref.origin_vertex_id] = [1e-6, 0, 0]
    p = tmp_path / "noorigin.msh"
    write_gmsh(p, v, ref.tets)
    with pytest.raises(MissingOriginVertex):
        load_tet_mesh(p, "gmsh", frame, s)


def test_boundary_coordinate_mismatch(tmp_path, cube_case):
    s, frame, ref = cube_case
    v = ref.vertices.copy()
    v[ref.boundary_vertex_ids[3]] *= 1 + 1e-7
    p = tmp_path / "moved.msh"
    write_gmsh(p, v, ref.tets)
    with pytest.raises(BoundaryMismatch):
        load_tet_mesh(p, "gmsh", frame, s)


def test_boundary_count_mismatch(tmp_path, cube_case):
    s, frame, ref = cube_case
    # the mesh was built for a coarser surface
    coarse = cube_surface(1.0, 2)
    p = tmp_path / "other.msh"
    write_gmsh(p, ref.vertices, ref.tets)
    with pytest.raises(BoundaryMismatch):
        load_tet_mesh(p, "gmsh", InversionFrame.fit(coarse.vertices), coarse)


@pytest.mark.parametrize("text", [
    "$MeshFormat\n4.1 0 8\n$EndMeshFormat\n$Nodes\n0\n$EndNodes\n$Elements\n0\n$EndElements\n",
    "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n5\n1 0 0 0\n$EndNodes\n$Elements\n0\n$EndElements\n",
    "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n1\n1 0 0 0\n$EndNodes\n$Elements\n1\n1 2 0 1 1 1\n$EndElements\n",
    "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n1\n1 0 0 0\n$EndNodes\n$Elements\n1\n1 4 0 1 1 1 9\n$EndElements\n",
    "garbage",
])
def test_gmsh_parse_errors(tmp_path, text, cube_case):
    s, frame, _ = cube_case
    p = tmp_path / "bad.msh"
    p.write_text(text)
    with pytest.raises(ParseError):
        load_tet_mesh(p, "gmsh", frame, s)


def test_domain_validate_partition():
    d = single_tet_domain().validate()
    bad = dataclasses.replace(d, interior_vertex_ids=np.array([0, 1]))
    with pytest.raises(BoundaryMismatch):
        bad.validate()
    with pytest.raises(MissingOriginVertex):
        dataclasses.replace(d, origin_vertex_id=1).validate()


def test_barycentric_table_reproduces_vertices():
    d = single_tet_domain()
    B = d.barycentric_table[0]
    for k, v in enumerate(d.vertices):
        lam = B[:9].reshape(3, 3) @ (v - B[9:])
        full = np.concatenate([[1 - lam.sum()], lam])
        np.testing.assert_allclose(full, np.eye(4)[k], atol=1e-15)
