"""Semantics-aware distance fields: semantic states, solve pipeline, queries.

A field stores the interior solution ``V`` on the inverted tet mesh. A query
at physical point ``x`` evaluates ``h(x) = -ln(|y| V(y))`` with
``y = invert((x - origin) / scale)``; its zero level set is the safe-set
boundary, which lies inside the object wherever the semantic value is
positive.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field as dc_field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from . import kernels
from .errors import (
    DegenerateBoundaryVertex,
    InvalidSemantics,
    NotFactorized,
    OutsideDomain,
    OutsideMeshCoverage,
    ParseError,
    QueryAtOrigin,
)
from .kelvin import InversionFrame
from .mesh import SurfaceMesh, TetDomain, contains, generate_star_shaped, load_tet_mesh
from .operators import OperatorSet, assemble_laplacian, shape_gradients, vertex_gradients
from .solver import FactorizationHandle, FieldSolution, factorize, solve_boundary

log = logging.getLogger(__name__)

STATUS_OK = 0
STATUS_INSIDE = 1
STATUS_AT_ORIGIN = 2
STATUS_NO_COVERAGE = 3
STATUS_NAMES = {
    STATUS_OK: "OK",
    STATUS_INSIDE: "InsideObject",
    STATUS_AT_ORIGIN: "QueryAtOrigin",
    STATUS_NO_COVERAGE: "OutsideMeshCoverage",
}

SIGMA_LIMIT = 20.0
BARY_EPS = 1e-12
GRADIENT_MODES = {"vertex": 0, "p1": 1}


# --------------------------------------------------------------------------
# Semantic states
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SemanticProfile:
    """Longitudinal profile ``sigma(x) = tanh(|e_l . x| - d0) * sigma_nom``."""

    e_l: tuple
    d0: float
    sigma_nom: float

    def __post_init__(self):
        e = np.asarray(self.e_l, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(e) - 1.0) > 1e-12:
            raise InvalidSemantics(f"e_l must be a unit vector, |e_l| = {np.linalg.norm(e)!r}")
        if not self.d0 >= 0:
            raise InvalidSemantics(f"d0 must be non-negative, got {self.d0}")
        object.__setattr__(self, "e_l", tuple(float(c) for c in e))


@dataclass(frozen=True, eq=False)
class SemanticState:
    sigma: np.ndarray
    source: dict = dc_field(default_factory=lambda: {"mode": "table"})

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(sigma)):
            raise InvalidSemantics("semantic values must be finite")
        if np.any(np.abs(sigma) > SIGMA_LIMIT):
            raise InvalidSemantics(f"|sigma| must not exceed {SIGMA_LIMIT}")
        sigma.flags.writeable = False
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def constant(cls, n: int, value: float) -> "SemanticState":
        return cls(np.full(n, float(value)), {"mode": "constant", "sigma_nom": float(value)})

    @classmethod
    def table(cls, values) -> "SemanticState":
        return cls(np.asarray(values, dtype=np.float64), {"mode": "table"})


def sigma_profile(surface: SurfaceMesh, profile: SemanticProfile) -> SemanticState:
    e = np.asarray(profile.e_l)
    sigma = np.tanh(np.abs(surface.vertices @ e) - profile.d0) * profile.sigma_nom
    return SemanticState(sigma, {"mode": "tanh_profile", "e_l": list(profile.e_l),
                                 "d0": profile.d0, "sigma_nom": profile.sigma_nom})


def semantic_state_from_config(config: dict, surface: SurfaceMesh) -> SemanticState:
    """Build a state from the JSON semantic configuration schema."""
    mode = config.get("mode")
    n = surface.n_vertices
    try:
        if mode == "constant":
            return SemanticState.constant(n, float(config["sigma_nom"]))
        if mode == "table":
            values = np.asarray(config["values"], dtype=np.float64)
            if values.shape != (n,):
                raise InvalidSemantics(f"table has {values.size} values, surface has {n} vertices")
            return SemanticState.table(values)
        if mode == "tanh_profile":
            profile = SemanticProfile(tuple(config["e_l"]), float(config["d0"]),
                                      float(config["sigma_nom"]))
            return sigma_profile(surface, profile)
    except KeyError as exc:
        raise InvalidSemantics(f"semantic config mode {mode!r} needs key {exc}") from None
    raise InvalidSemantics(f"unknown semantic mode {mode!r}")


def load_semantic_config(path) -> dict:
    try:
        # json parses floats with round-trip exact repr semantics
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read semantic config {path}: {exc}") from exc


def parse_sigma_spec(spec: str) -> dict:
    """``const:<value>`` shorthand or a path to a JSON config file."""
    if spec.startswith("const:"):
        try:
            return {"mode": "constant", "sigma_nom": float(spec[6:])}
        except ValueError:
            raise InvalidSemantics(f"bad constant sigma {spec!r}") from None
    return load_semantic_config(spec)


def boundary_values(state: SemanticState, domain: TetDomain) -> np.ndarray:
    """Dirichlet data ``exp(-sigma) / |y|`` on the boundary vertices."""
    y = domain.vertices[domain.boundary_vertex_ids]
    g = np.linalg.norm(y, axis=1)
    if state.sigma.shape != g.shape:
        raise InvalidSemantics(f"{state.sigma.size} semantic values for {g.size} boundary vertices")
    if np.any(g < 1e-12):
        bad = int(np.flatnonzero(g < 1e-12)[0])
        raise DegenerateBoundaryVertex(f"boundary vertex {bad} sits at the compactification point")
    return np.exp(-state.sigma) / g


# --------------------------------------------------------------------------
# Class-K functions and CBF margins
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassK:
    kind: str = "linear"
    k: float = 1.0
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "power"):
            raise ValueError(f"unknown class-K family {self.kind!r}")
        if not self.k > 0 or not self.p > 0:
            raise ValueError("class-K parameters must be positive")

    def __call__(self, h: float) -> float:
        if self.kind == "linear":
            return self.k * h
        return self.k * math.copysign(abs(h) ** self.p, h)

    @classmethod
    def parse(cls, spec: str) -> "ClassK":
        """``linear:k`` or ``power:k:p``."""
        parts = spec.split(":")
        if parts[0] == "linear" and len(parts) == 2:
            return cls("linear", float(parts[1]))
        if parts[0] == "power" and len(parts) == 3:
            return cls("power", float(parts[1]), float(parts[2]))
        raise ValueError(f"bad class-K spec {spec!r}")


@dataclass(frozen=True)
class CbfMargin:
    h: float
    hdot: float
    margin: float
    safe: bool


# --------------------------------------------------------------------------
# Field
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class QueryResult:
    h: float
    grad: np.ndarray
    tet_hint: int
    inside_object: bool
    steps: int = 0

    @property
    def status(self) -> str:
        return "InsideObject" if self.inside_object else "OK"


@dataclass(frozen=True)
class BatchResult:
    h: np.ndarray
    grad: np.ndarray
    tet: np.ndarray
    status: np.ndarray
    steps: np.ndarray
    hint: int
    time_ns: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class Field:
    """A queryable semantics-aware distance field.

    ``ops`` and ``handle`` are present for freshly built fields and absent for
    fields loaded from a bundle until :meth:`refactorize` is called.
    """

    domain: TetDomain
    V: np.ndarray
    sigma: np.ndarray
    vertex_grad: np.ndarray
    solution: FieldSolution | None = None
    state: SemanticState | None = None
    ops: OperatorSet | None = None
    handle: FactorizationHandle | None = None
    surface: SurfaceMesh | None = None

    def __post_init__(self):
        for name in ("V", "sigma", "vertex_grad"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def frame(self) -> InversionFrame:
        return self.domain.frame

    @cached_property
    def tet_grad(self) -> np.ndarray:
        """Constant P1 gradient of V per tet.

        Computed from geometry alone so a loaded field matches the original
        bit for bit."""
        return _tet_gradients_direct(self.domain, self.V)

    @property
    def factorized(self) -> bool:
        return self.handle is not None and self.ops is not None

    def refactorize(self) -> "Field":
        """Assemble operators and factorize so the field can be re-solved."""
        if self.factorized:
            return self
        ops = assemble_laplacian(self.domain)
        handle = factorize(ops)
        return replace(self, ops=ops, handle=handle)

    def update(self, state: SemanticState) -> "Field":
        """New field for a changed semantic state, reusing the factorization."""
        if not self.factorized:
            raise NotFactorized("field has no factorization; call refactorize() first")
        return _solve_into_field(self.domain, self.ops, self.handle, state, self.surface)

    def boundary_h(self) -> np.ndarray:
        """Field value at the boundary vertices (should equal sigma)."""
        ids = self.domain.boundary_vertex_ids
        g = np.linalg.norm(self.domain.vertices[ids], axis=1)
        return -np.log(g * self.V[ids])

    def surface_points(self) -> np.ndarray:
        """Physical coordinates of the boundary vertices."""
        if self.surface is not None:
            return self.surface.vertices
        return self.frame.from_inverted(self.domain.vertices[self.domain.boundary_vertex_ids])

    def recover_surface(self) -> SurfaceMesh:
        if self.surface is not None:
            return self.surface
        d = self.domain
        local = np.full(d.n_verts, -1, dtype=np.int64)
        local[d.boundary_vertex_ids] = np.arange(len(d.boundary_vertex_ids))
        return SurfaceMesh(self.surface_points(), local[d.boundary_faces])

    # -- queries -----------------------------------------------------------

    def _kernel_args(self):
        d = self.domain
        return (self.frame.origin, self.frame.scale, d.barycentric_table, d.neighbors,
                d.vertices, d.tets, d.star_shaped, self.V, self.vertex_grad, self.tet_grad)

    def query_many(self, points, hint: int = -1, warm: bool = True, use_hint: bool = True,
                   gradient: str = "vertex", timed: bool = False, backend=None) -> BatchResult:
        """Evaluate many points in order, carrying a rolling hint when ``warm``."""
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        n = len(pts)
        h = np.empty(n)
        g = np.empty((n, 3))
        tet = np.empty(n, dtype=np.int64)
        status = np.empty(n, dtype=np.int32)
        steps = np.empty(n, dtype=np.int32)
        times = np.empty(n, dtype=np.int64) if timed else None
        core = backend or kernels.core
        origin, scale, B, nbr, verts, tets, star, V, vg, tg = self._kernel_args()
        last = core.query_batch(pts, origin, scale, B, nbr, verts, tets, star, V, vg, tg,
                                GRADIENT_MODES[gradient], int(hint), warm, use_hint,
                                self.domain.default_start, h, g, tet, status, steps, times)
        if not self.domain.star_shaped:
            self._classify_uncovered(pts, status)
        return BatchResult(h, g, tet, status, steps, int(last), times)

    def _classify_uncovered(self, pts, status):
        # without star-shapedness a failed location may be a coverage gap
        surface = self.recover_surface()
        for i in np.flatnonzero(status == STATUS_INSIDE):
            if not contains(surface, pts[i]):
                status[i] = STATUS_NO_COVERAGE

    def query(self, x, hint: int | None = None, gradient: str = "vertex") -> QueryResult:
        res = self.query_many(np.asarray(x, dtype=np.float64).reshape(1, 3),
                              hint=-1 if hint is None else hint, gradient=gradient)
        s = int(res.status[0])
        if s == STATUS_AT_ORIGIN:
            raise QueryAtOrigin(f"query point {x!r} is the inversion origin")
        if s == STATUS_NO_COVERAGE:
            raise OutsideMeshCoverage(f"query point {x!r} is outside the meshed region")
        return QueryResult(float(res.h[0]), res.grad[0].copy(), int(res.tet[0]),
                           s == STATUS_INSIDE, int(res.steps[0]))

    def cbf_margin(self, x, xdot, alpha: ClassK, hint: int | None = None) -> CbfMargin:
        return cbf_margin(self, x, xdot, alpha, hint)


def _tet_gradients_direct(domain: TetDomain, V: np.ndarray) -> np.ndarray:
    grads, _ = shape_gradients(domain.vertices, domain.tets)
    return np.ascontiguousarray(np.einsum("tkd,tk->td", grads, V[domain.tets]))


def _solve_into_field(domain, ops, handle, state, surface) -> Field:
    vb = boundary_values(state, domain)
    solution = solve_boundary(handle, ops, vb, sigma=state,
                              check_max_principle=domain.star_shaped)
    vgrad = vertex_gradients(ops, solution.V_full)
    return Field(domain, solution.V_full, state.sigma, vgrad, solution, state, ops, handle, surface)


def build_field(surface: SurfaceMesh, domain: TetDomain, ops: OperatorSet,
                handle: FactorizationHandle, state: SemanticState) -> Field:
    if handle.n_interior != len(domain.interior_vertex_ids):
        raise ValueError("factorization does not belong to this domain")
    return _solve_into_field(domain, ops, handle, state, surface)


def locate(domain: TetDomain, y, hint: int | None = None, backend=None) -> int:
    """Index of a tet containing inverted point ``y`` (barycentrics >= -1e-12)."""
    core = backend or kernels.core
    y = np.asarray(y, dtype=np.float64).reshape(3)
    start = domain.default_start if hint is None or hint < 0 else int(hint)
    t, _, _ = core.locate(domain.barycentric_table, domain.neighbors, domain.vertices,
                          domain.tets, domain.star_shaped, float(y[0]), float(y[1]),
                          float(y[2]), start, BARY_EPS)
    if t < 0:
        raise OutsideDomain(f"point {y.tolist()} lies outside the meshed inverted domain")
    return int(t)


def brute_force_locate(domain: TetDomain, y) -> int:
    y = np.asarray(y, dtype=np.float64).reshape(3)
    t = kernels.python_core.brute_locate(domain.barycentric_table, float(y[0]), float(y[1]),
                                         float(y[2]), BARY_EPS)
    if t < 0:
        raise OutsideDomain(f"point {y.tolist()} lies outside the meshed inverted domain")
    return int(t)


def query(field: Field, x, hint: int | None = None, gradient: str = "vertex") -> QueryResult:
    return field.query(x, hint=hint, gradient=gradient)


def cbf_margin(field: Field, x, xdot, alpha: ClassK, hint: int | None = None) -> CbfMargin:
    """Quasi-static CBF condition ``grad h . xdot >= alpha(h)``."""
    res = field.query(x, hint=hint)
    if res.inside_object:
        return CbfMargin(res.h, 0.0, -math.inf, False)
    hdot = float(res.grad @ np.asarray(xdot, dtype=np.float64))
    margin = hdot - alpha(res.h)
    return CbfMargin(res.h, hdot, margin, margin >= 0)


# --------------------------------------------------------------------------
# End-to-end pipeline
# --------------------------------------------------------------------------

def build(surface: SurfaceMesh, *, l_x: float | None = None, mesh_path=None,
          mesh_format: str | None = None, origin=None, state: SemanticState | None = None,
          sizing=None) -> tuple[Field, dict]:
    """Normalize, invert, mesh, assemble, factorize and solve.

    Returns the field and wall-clock stage timings in seconds.
    """
    from .errors import OriginOutsideObject

    frame = InversionFrame.fit(surface.vertices, origin)
    if not contains(surface, frame.origin):
        raise OriginOutsideObject(f"inversion origin {frame.origin.tolist()} is not inside the object")
    timings = {}
    t0 = time.perf_counter()
    if mesh_path is not None:
        domain = load_tet_mesh(mesh_path, mesh_format or Path(mesh_path).suffix.lstrip("."),
                               frame, surface)
    else:
        if l_x is None and sizing is None:
            raise ValueError("either l_x or an external mesh is required")
        domain = generate_star_shaped(surface, frame, sizing if sizing is not None else l_x)
    timings["t_mesh"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ops = assemble_laplacian(domain)
    timings["t_build"] = time.perf_counter() - t0

    handle = factorize(ops)
    timings["t_decomp"] = handle.t_decomp

    if state is None:
        state = SemanticState.constant(surface.n_vertices, 0.0)
    field = build_field(surface, domain, ops, handle, state)
    timings["t_solve"] = field.solution.t_solve
    return field, timings


# --------------------------------------------------------------------------
# Measurement helpers (shared by the CLI bench and the test suite)
# --------------------------------------------------------------------------

def perturbed_states(state: SemanticState, repetitions: int, jitter: float = 0.1,
                     seed: int = 0):
    """Yield ``repetitions`` states with uniform per-vertex jitter."""
    rng = np.random.default_rng(seed)
    for _ in range(repetitions):
        sigma = np.clip(state.sigma + rng.uniform(-jitter, jitter, state.sigma.shape),
                        -SIGMA_LIMIT, SIGMA_LIMIT)
        yield SemanticState(sigma, {"mode": "table"})


def time_resolves(field: Field, repetitions: int = 100, seed: int = 0) -> np.ndarray:
    """Wall-clock back-substitution times (seconds) for perturbed semantics."""
    if not field.factorized:
        raise NotFactorized("field has no factorization; call refactorize() first")
    base = field.state or SemanticState(field.sigma)
    times = []
    for st in perturbed_states(base, repetitions, seed=seed):
        vb = boundary_values(st, field.domain)
        sol = solve_boundary(field.handle, field.ops, vb, sigma=st, check_max_principle=False)
        times.append(sol.t_solve)
    return np.array(times)


def sample_exterior(field: Field, n: int, r_min: float = 1.1, r_max: float = 3.0,
                    seed: int = 0) -> np.ndarray:
    """Points at normalized radius in ``[r_min, r_max]`` around the inversion
    origin that are outside the object (radius is relative to the frame scale)."""
    rng = np.random.default_rng(seed)
    surface = field.recover_surface()
    out = []
    while sum(len(o) for o in out) < n:
        d = rng.normal(size=(2 * n, 3))
        d /= np.linalg.norm(d, axis=1)[:, None]
        r = rng.uniform(r_min, r_max, 2 * n)
        p = field.frame.denormalize(d * r[:, None])
        if r_min < 1.0:
            keep = np.array([not contains(surface, x) for x in p])
            p = p[keep]
        out.append(p)
    return np.concatenate(out)[:n]


def nearby_path(field: Field, n: int, step: float = 0.01, r_min: float = 1.2,
                r_max: float = 2.5, seed: int = 0) -> np.ndarray:
    """A random walk of ``n`` points with normalized step ``step``, kept in a shell."""
    rng = np.random.default_rng(seed)
    q = np.empty((n, 3))
    cur = np.array([1.5, 0.3, 0.2])
    for i in range(n):
        d = rng.normal(size=3)
        nxt = cur + step * d / np.linalg.norm(d)
        r = np.linalg.norm(nxt)
        if not r_min <= r <= r_max:
            nxt = nxt / r * np.clip(r, r_min, r_max)
        cur = nxt
        q[i] = cur
    return field.frame.denormalize(q)


def time_queries(field: Field, points, use_hint: bool = True, backend=None) -> BatchResult:
    """Per-point kernel timings (``time_ns``) for a sequential query stream."""
    return field.query_many(points, warm=use_hint, use_hint=use_hint, timed=True,
                            backend=backend)


def rmse_against(field: Field, reference, points) -> tuple[float, int]:
    """RMSE of ``h`` over points where both have a value.

    ``reference`` is a field or a precomputed :class:`BatchResult` on ``points``.
    """
    a = field.query_many(points)
    b = reference if isinstance(reference, BatchResult) else reference.query_many(points)
    ok = (a.status == STATUS_OK) & (b.status == STATUS_OK)
    if not ok.any():
        return math.nan, 0
    return float(np.sqrt(np.mean((a.h[ok] - b.h[ok]) ** 2))), int(ok.sum())
