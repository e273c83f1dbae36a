import numpy as np
import pytest

from sadf.field import build
from sadf.kelvin import InversionFrame
from sadf.mesh import TetDomain, cube_surface, icosphere

ACCEPTANCE_LINES = []


def report(number, title, ok, detail=""):
    """Record one acceptance-criterion outcome for the terminal summary."""
    status = "PASS" if ok else "FAIL"
    line = f"[{status}] criterion {number:>2}: {title}"
    if detail:
        line += f"  ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.fixture
def acceptance():
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def sphere_field():
    """sigma = 0 on the unit icosphere (642 vertices), centered origin."""
    field, _ = build(icosphere(3), l_x=0.1)
    return field


@pytest.fixture(scope="session")
def offset_sphere_field():
    """Same surface with the inversion origin moved off the sphere center."""
    field, _ = build(icosphere(3), l_x=0.1, origin=(0.25, 0.0, 0.0))
    return field


@pytest.fixture(scope="session")
def cube_field():
    field, _ = build(cube_surface(1.0, 4), l_x=0.2)
    return field


def single_tet_domain():
    """Origin vertex plus three boundary vertices, positively oriented."""
    verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    return TetDomain(verts, np.array([[0, 1, 2, 3]]), np.array([1, 2, 3]), np.array([0]), 0,
                     InversionFrame(np.zeros(3), 1.0))


def write_gmsh(path, vertices, tets, node_offset=1):
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(len(vertices))]
    lines += [f"{i + node_offset} {float(x)!r} {float(y)!r} {float(z)!r}" for i, (x, y, z) in enumerate(vertices)]
    lines += ["$EndNodes", "$Elements", str(len(tets))]
    lines += [f"{i + 1} 4 2 0 1 " + " ".join(str(v + node_offset) for v in t)
              for i, t in enumerate(tets)]
    lines += ["$EndElements"]
    path.write_text("\n".join(lines) + "\n")


def write_tetgen(base, vertices, tets, first=1):
    node = [f"{len(vertices)} 3 0 0"]
    node += [f"{i + first} {float(x)!r} {float(y)!r} {float(z)!r}" for i, (x, y, z) in enumerate(vertices)]
    ele = [f"{len(tets)} 4 0"]
    ele += [f"{i + first} " + " ".join(str(v + first) for v in t) for i, t in enumerate(tets)]
    base.with_suffix(".node").write_text("\n".join(node) + "\n")
    base.with_suffix(".ele").write_text("\n".join(ele) + "\n")
    return base.with_suffix(".node")


def exterior_points(n, r_min=1.1, r_max=3.0, seed=0):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    return d * rng.uniform(r_min, r_max, n)[:, None]
