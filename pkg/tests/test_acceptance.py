"""End-to-end acceptance checks. Each test prints one PASS/FAIL line, then asserts."""
import gc
import time

import numpy as np
import pytest

from conftest import exterior_points
from sadf.field import (
    STATUS_OK,
    SemanticProfile,
    SemanticState,
    boundary_values,
    build,
    brute_force_locate,
    nearby_path,
    sample_exterior,
    sigma_profile,
    time_queries,
    time_resolves,
)
from sadf.kelvin import SizingField
from sadf.mesh import builtin_surface, icosphere
from sadf.operators import vertex_gradients
from sadf.persist import export_grid, load_bundle, read_vtk_structured_points, save_bundle
from sadf.solver import solve_boundary

SPHERE_LEVELS = ((1, 0.4), (2, 0.2), (3, 0.1))
SPHERE_ORIGIN = (0.25, 0.0, 0.0)  # off center, so V is not trivially constant


@pytest.fixture(scope="module")
def sphere_levels():
    t0 = time.perf_counter()
    fields = [build(icosphere(k), l_x=lx, origin=SPHERE_ORIGIN)[0] for k, lx in SPHERE_LEVELS]
    return fields, time.perf_counter() - t0


def shell_points(n, seed=0):
    return exterior_points(n, 1.1, 3.0, seed)


def test_criterion_01_sphere_oracle(acceptance, sphere_levels):
    t0 = time.perf_counter()
    fields, t_build = sphere_levels
    pts = shell_points(10_000)
    truth = np.log(np.linalg.norm(pts, axis=1))
    rmse, bnd = [], []
    for f in fields:
        res = f.query_many(pts)
        assert np.all(res.status == STATUS_OK)
        rmse.append(float(np.sqrt(np.mean((res.h - truth) ** 2))))
        bnd.append(float(np.abs(f.boundary_h()).max()))
    total = t_build + time.perf_counter() - t0
    ok = (all(a > b for a, b in zip(rmse, rmse[1:])) and rmse[-1] < 0.02
          and max(bnd) < 1e-9 and total < 60)
    acceptance(1, "sphere oracle RMSE decreasing, < 0.02, boundary exact, < 60 s", ok,
               f"rmse={['%.2e' % r for r in rmse]} boundary={max(bnd):.1e} t={total:.1f}s")
    assert all(a > b for a, b in zip(rmse, rmse[1:]))
    assert rmse[-1] < 0.02
    assert max(bnd) < 1e-9
    assert total < 60


def test_criterion_02_boundary_semantics(acceptance, sphere_field, cube_field):
    rng = np.random.default_rng(2)
    worst = 0.0
    for f in (sphere_field, cube_field):
        for _ in range(3):
            st = SemanticState(rng.uniform(-1, 1, f.sigma.size))
            g = f.update(st)
            worst = max(worst, float(np.abs(g.boundary_h() - st.sigma).max()))
    acceptance(2, "boundary |h - sigma| < 1e-9 for random sigma", worst < 1e-9, f"max={worst:.1e}")
    assert worst < 1e-9


def test_criterion_03_residual_and_max_principle(acceptance, sphere_field, offset_sphere_field,
                                                 cube_field):
    rng = np.random.default_rng(3)
    worst_res, worst_dmp = 0.0, 0.0
    for f in (sphere_field, offset_sphere_field, cube_field):
        ops = f.ops
        for _ in range(5):
            st = SemanticState(rng.uniform(-1, 1, f.sigma.size))
            vb = boundary_values(st, f.domain)
            sol = solve_boundary(f.handle, ops, vb)
            rhs = ops.coupling_block @ vb
            r = np.abs(ops.interior_block @ sol.V_interior + rhs).max()
            worst_res = max(worst_res, r / max(1.0, np.abs(rhs).max()))
            over = max(vb.min() - sol.V_interior.min(), sol.V_interior.max() - vb.max(), 0.0)
            worst_dmp = max(worst_dmp, over)
    ok = worst_res <= 1e-10 and worst_dmp <= 1e-12
    acceptance(3, "residual <= 1e-10 relative, interior V within boundary range", ok,
               f"residual={worst_res:.1e} dmp_excess={worst_dmp:.1e}")
    assert worst_res <= 1e-10
    assert worst_dmp <= 1e-12


def test_criterion_06_cube_rmse_trend(acceptance):
    levels = (0.4, 0.2, 0.1)
    ref, _ = build(builtin_surface("cube", 0.05), l_x=0.05)
    pts = sample_exterior(ref, 10_000, seed=6)
    ref_vals = ref.query_many(pts)
    del ref
    gc.collect()
    rmse = []
    for lx in levels:
        f, _ = build(builtin_surface("cube", lx), l_x=lx)
        a = f.query_many(pts)
        ok = (a.status == STATUS_OK) & (ref_vals.status == STATUS_OK)
        rmse.append(float(np.sqrt(np.mean((a.h[ok] - ref_vals.h[ok]) ** 2))))
        del f
    decreasing = all(a > b for a, b in zip(rmse, rmse[1:]))
    acceptance(6, "cube sweep RMSE strictly decreasing", decreasing,
               "l_x 0.4/0.2/0.1 vs 0.05: " + " ".join("%.3g" % r for r in rmse))
    assert decreasing


def test_criterion_07_gradients(acceptance, sphere_levels):
    finest = sphere_levels[0][-1]
    d = finest.domain
    rng = np.random.default_rng(7)

    # affine reproduction
    a = rng.normal(size=3)
    affine_err = float(np.abs(vertex_gradients(finest.ops, d.vertices @ a + 1.5) - a).max())

    # P1 gradients against central differences inside one element
    fd_err, checked = 0.0, 0
    for x in shell_points(400, seed=71):
        r0 = finest.query(x, gradient="p1")
        hstep = 1e-6
        g = np.empty(3)
        same = True
        for k in range(3):
            e = np.zeros(3)
            e[k] = hstep
            p, m = finest.query(x + e, gradient="p1"), finest.query(x - e, gradient="p1")
            same &= p.tet_hint == m.tet_hint == r0.tet_hint
            g[k] = (p.h - m.h) / (2 * hstep)
        if same:
            fd_err = max(fd_err, float(np.linalg.norm(g - r0.grad) / np.linalg.norm(r0.grad)))
            checked += 1

    # queried gradient against grad ln|x| = x / |x|^2
    pts = shell_points(10_000, seed=72)
    res = finest.query_many(pts)
    exact = pts / (pts * pts).sum(axis=1)[:, None]
    sphere_err = float((np.linalg.norm(res.grad - exact, axis=1) / np.linalg.norm(exact, axis=1)).max())

    ok = affine_err <= 1e-12 and fd_err < 1e-4 and checked >= 100 and sphere_err < 0.02
    acceptance(7, "gradients: affine exact, FD within element, sphere < 2%", ok,
               f"affine={affine_err:.1e} fd={fd_err:.1e} ({checked} pts) sphere={sphere_err:.2%}")
    assert affine_err <= 1e-12
    assert checked >= 100 and fd_err < 1e-4
    assert sphere_err < 0.02


def _share_face(domain, a, b):
    return len(set(domain.tets[a]) & set(domain.tets[b])) == 3


def test_criterion_08_point_location(acceptance, offset_sphere_field, cube_field):
    agree, total = 0, 0
    for f, seed in ((offset_sphere_field, 80), (cube_field, 81)):
        d = f.domain
        pts = sample_exterior(f, 5_000, r_min=1.0, r_max=6.0, seed=seed)
        res = f.query_many(pts)  # rolling hint from the previous point
        q = f.frame.normalize(pts)
        y = q / (q * q).sum(axis=1)[:, None]
        B = d.barycentric_table
        for i in range(len(pts)):
            total += 1
            t = int(res.tet[i])
            b = brute_force_locate(d, y[i])
            if t == b:
                agree += 1
                continue
            lam = B[t, :9].reshape(3, 3) @ (y[i] - B[t, 9:])
            inside = min(lam.min(), 1 - lam.sum()) >= -1e-12
            agree += bool(t >= 0 and inside and _share_face(d, t, b))
    ok = agree == total
    acceptance(8, "hinted walk equals brute force (or face neighbor)", ok, f"{agree}/{total}")
    assert agree == total


def test_criterion_09_semantic_scenarios(acceptance, tmp_path):
    surface = builtin_surface("box", 0.1)
    e_l, d0 = (1.0, 0.0, 0.0), 0.75
    base, _ = build(surface, l_x=0.1)
    scenarios = {
        "handle_only": sigma_profile(surface, SemanticProfile(e_l, d0, -1.0)),
        "none": SemanticState.constant(surface.n_vertices, 0.0),
        "ends_only": sigma_profile(surface, SemanticProfile(e_l, d0, 1.0)),
    }
    sign_ok, parsed = True, 0
    for name, st in scenarios.items():
        f = base.update(st)
        h = f.boundary_h()
        if st.source.get("mode") == "tanh_profile":
            sign_ok &= bool(np.all(h[st.sigma > 0] > 0) and np.all(h[st.sigma < 0] < 0))
            sign_ok &= bool((st.sigma > 0).any() and (st.sigma < 0).any())
        out = tmp_path / f"{name}.vtk"
        n = export_grid(f, ((-2.5, -1.0, 0.0), (2.5, 1.0, 0.0)), (100, 40, 1), out)
        meta, vals = read_vtk_structured_points(out)
        parsed += int(len(vals) == n == 4000 and meta["dimensions"] == (100, 40, 1))
    ok = sign_ok and parsed == 3
    acceptance(9, "tanh semantics signs vertexwise, three grid exports parse", ok,
               f"signs={'ok' if sign_ok else 'violated'} exports={parsed}/3")
    assert sign_ok
    assert parsed == 3


def test_criterion_10_persistence(acceptance, offset_sphere_field, tmp_path):
    f = offset_sphere_field
    p = tmp_path / "f.sadf"
    save_bundle(f, p)
    g = load_bundle(p)
    save_bundle(g, tmp_path / "g.sadf")
    bytes_ok = p.read_bytes() == (tmp_path / "g.sadf").read_bytes()
    arrays_ok = all(np.array_equal(a, b) for a, b in (
        (f.domain.vertices, g.domain.vertices), (f.domain.tets, g.domain.tets), (f.V, g.V),
        (f.sigma, g.sigma), (f.vertex_grad, g.vertex_grad)))
    pts = shell_points(1_000, seed=10)
    a, b = f.query_many(pts), g.query_many(pts)
    query_ok = (np.array_equal(a.h, b.h) and np.array_equal(a.grad, b.grad)
                and np.array_equal(a.status, b.status))
    ok = bytes_ok and arrays_ok and query_ok
    acceptance(10, "bundle round trip bit-exact, 1000 queries bitwise equal", ok,
               f"bytes={bytes_ok} arrays={arrays_ok} queries={query_ok}")
    assert bytes_ok and arrays_ok and query_ok


# The large fixture is built last so it never coexists with the cube reference.
@pytest.fixture(scope="module")
def large_field():
    field, _ = build(icosphere(4), sizing=SizingField(0.1, 0.1))
    return field


def test_criterion_04_resolve_budget(acceptance, large_field):
    n = large_field.domain.n_verts
    times = time_resolves(large_field, 100, seed=4)
    mean_ms = 1e3 * float(times.mean())
    ok = 20_000 <= n <= 30_000 and mean_ms <= 100
    acceptance(4, "mean re-solve over 100 perturbed sigma <= 100 ms (~25k verts)", ok,
               f"{n} verts, mean={mean_ms:.1f} ms std={1e3 * times.std():.1f} ms")
    assert 20_000 <= n <= 30_000
    assert mean_ms <= 100


def test_criterion_05_query_budget(acceptance, large_field):
    nt = large_field.domain.n_tets
    path = nearby_path(large_field, 1_000, seed=5)
    time_queries(large_field, path)  # warm caches
    hinted = time_queries(large_field, path, use_hint=True)
    cold = time_queries(large_field, path, use_hint=False)
    med_h, med_c = float(np.median(hinted.time_ns)), float(np.median(cold.time_ns))
    ok = nt >= 100_000 and med_h <= 5_000 and med_h < med_c
    acceptance(5, "hinted median query <= 5 us and < unhinted (>= 100k tets)", ok,
               f"{nt} tets, hinted={med_h:.0f} ns unhinted={med_c:.0f} ns")
    assert nt >= 100_000
    assert med_h <= 5_000
    assert med_h < med_c
