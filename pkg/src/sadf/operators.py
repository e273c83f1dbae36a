"""Discrete Laplace and gradient operators on a tetrahedral domain.

The Laplacian uses the stiffness sign convention (positive semi-definite):
off-diagonal entries are ``-l_kl * cot(theta_kl) / 6`` summed over the tets
incident to edge ``ij``, where ``kl`` is the opposite edge and ``theta_kl``
its dihedral angle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateTet
from .mesh import TetDomain

# local edges (i, j) and their opposite edges (k, l)
_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])
_OPPOSITE = np.array([[2, 3], [1, 3], [1, 2], [0, 3], [0, 2], [0, 1]])


@dataclass(frozen=True, eq=False)
class OperatorSet:
    laplacian: sp.csr_matrix
    interior_block: sp.csc_matrix
    coupling_block: sp.csr_matrix
    vertex_volumes: np.ndarray
    tet_gradient: tuple  # (gx, gy, gz), each n_tets x n_verts
    vertex_gradient: tuple  # (dx, dy, dz), each n_verts x n_verts
    interior_ids: np.ndarray
    boundary_ids: np.ndarray


def face_area_normals(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Outward area-weighted normals of the face opposite each local vertex, (T, 4, 3)."""
    p = vertices[tets]
    out = np.empty(p.shape)
    for k in range(4):
        a, b, c = (p[:, j] for j in range(4) if j != k)
        n = 0.5 * np.cross(b - a, c - a)
        # orient away from the opposite vertex
        s = np.sign(np.einsum("ij,ij->i", n, a - p[:, k]))
        out[:, k] = n * s[:, None]
    return out


def shape_gradients(vertices: np.ndarray, tets: np.ndarray):
    """Per-tet gradients of the four P1 hat functions, (T, 4, 3), and volumes."""
    p = vertices[tets]
    edges = p[:, 1:] - p[:, :1]
    vol = np.linalg.det(edges) / 6.0
    if np.any(np.abs(vol) <= 0):
        bad = int(np.flatnonzero(np.abs(vol) <= 0)[0])
        raise DegenerateTet(f"tet {bad} has zero volume")
    inv = np.linalg.inv(edges)  # rows of inv^T are grads of phi_1..phi_3
    g = np.empty((len(tets), 4, 3))
    g[:, 1:] = np.transpose(inv, (0, 2, 1))
    g[:, 0] = -g[:, 1:].sum(axis=1)
    return g, np.abs(vol)


def cotan_weights(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Edge weights ``l_kl * cot(theta_kl) / 6`` for the six local edges, (T, 6)."""
    p = vertices[tets]
    an = face_area_normals(vertices, tets)
    w = np.empty((len(tets), 6))
    for e, ((i, j), (k, l)) in enumerate(zip(_EDGES, _OPPOSITE)):
        ni, nj = an[:, i], an[:, j]
        # faces opposite i and j meet at edge kl; interior dihedral angle
        cos = -np.einsum("ij,ij->i", ni, nj)
        sin = np.linalg.norm(np.cross(ni, nj), axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            cot = cos / sin
        if not np.all(np.isfinite(cot)):
            bad = int(np.flatnonzero(~np.isfinite(cot))[0])
            raise DegenerateTet(f"tet {bad} has a degenerate dihedral angle")
        length = np.linalg.norm(p[:, l] - p[:, k], axis=1)
        w[:, e] = length * cot / 6.0
    return w


def assemble_laplacian(domain: TetDomain) -> OperatorSet:
    v, t = domain.vertices, domain.tets
    n = domain.n_verts
    w = cotan_weights(v, t)
    rows = t[:, _EDGES[:, 0]].ravel()
    cols = t[:, _EDGES[:, 1]].ravel()
    off = sp.coo_matrix((-w.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    off = off + off.T
    diag = -np.asarray(off.sum(axis=1)).ravel()
    lap = (off + sp.diags(diag)).tocsr()
    lap.sum_duplicates()

    interior = domain.interior_vertex_ids
    boundary = domain.boundary_vertex_ids
    a_ii = lap[interior][:, interior].tocsc()
    a_ib = lap[interior][:, boundary].tocsr()

    grads, vol = shape_gradients(v, t)
    vertex_volumes = np.bincount(t.ravel(), weights=np.repeat(vol / 4.0, 4), minlength=n)

    nt = len(t)
    trow = np.repeat(np.arange(nt), 4)
    tet_grad = tuple(
        sp.csr_matrix((grads[:, :, d].ravel(), (trow, t.ravel())), shape=(nt, n))
        for d in range(3)
    )
    star_vol = np.bincount(t.ravel(), weights=np.repeat(vol, 4), minlength=n)
    avg = sp.csr_matrix(
        (np.repeat(vol, 4) / star_vol[t.ravel()], (t.ravel(), trow)), shape=(n, nt)
    )
    vert_grad = tuple((avg @ g).tocsr() for g in tet_grad)
    return OperatorSet(lap, a_ii, a_ib, vertex_volumes, tet_grad, vert_grad, interior, boundary)


def tet_gradients(ops: OperatorSet, values) -> np.ndarray:
    """Constant P1 gradient per tet, (T, 3)."""
    values = np.asarray(values, dtype=np.float64)
    return np.stack([g @ values for g in ops.tet_gradient], axis=1)


def vertex_gradients(domain_or_ops, values) -> np.ndarray:
    """Tet-volume-weighted average of the P1 gradients around each vertex, (N, 3)."""
    ops = domain_or_ops if isinstance(domain_or_ops, OperatorSet) else assemble_laplacian(domain_or_ops)
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] != ops.laplacian.shape[0]:
        raise ValueError(f"expected {ops.laplacian.shape[0]} values, got {values.shape[0]}")
    return np.stack([d @ values for d in ops.vertex_gradient], axis=1)
