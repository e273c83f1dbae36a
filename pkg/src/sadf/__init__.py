"""Semantics-aware distance fields via Kelvin inversion and a Laplace solve."""
from .errors import SadfError
from .field import (
    ClassK,
    Field,
    QueryResult,
    SemanticProfile,
    SemanticState,
    boundary_values,
    build,
    build_field,
    cbf_margin,
    locate,
    query,
    sigma_profile,
)
from .kelvin import InversionFrame, SizingField, behavior, invert, invert_jacobian, sizing
from .mesh import (
    SurfaceMesh,
    TetDomain,
    contains,
    generate_star_shaped,
    load_surface,
    load_tet_mesh,
    mesh_stats,
)
from .operators import OperatorSet, assemble_laplacian, vertex_gradients
from .persist import export_grid, load_bundle, save_bundle
from .solver import FactorizationHandle, FieldSolution, factorize, solve_boundary

__version__ = "0.1.0"

__all__ = [
    "SadfError", "ClassK", "Field", "QueryResult", "SemanticProfile", "SemanticState",
    "boundary_values", "build", "build_field", "cbf_margin", "locate", "query", "sigma_profile",
    "InversionFrame", "SizingField", "behavior", "invert", "invert_jacobian", "sizing",
    "SurfaceMesh", "TetDomain", "contains", "generate_star_shaped", "load_surface",
    "load_tet_mesh", "mesh_stats", "OperatorSet", "assemble_laplacian", "vertex_gradients",
    "export_grid", "load_bundle", "save_bundle", "FactorizationHandle", "FieldSolution",
    "factorize", "solve_boundary",
]
