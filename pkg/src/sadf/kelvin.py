"""Geometric maps of the Kelvin transformation.

All maps work in *normalized* coordinates: a physical point ``p`` is first
centered on the inversion origin and divided by the frame scale,
``q = (p - origin) / scale``, then inverted, ``y = q / |q|^2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePoint

DEGENERATE_EPS = 1e-12


@dataclass(frozen=True)
class InversionFrame:
    origin: np.ndarray
    scale: float

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        object.__setattr__(self, "origin", origin)
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"frame scale must be positive, got {self.scale}")
        object.__setattr__(self, "scale", float(self.scale))

    @classmethod
    def fit(cls, vertices, origin=None) -> "InversionFrame":
        """Frame centered on ``origin`` (default: vertex centroid) whose
        bounding sphere around that origin has radius 1."""
        vertices = np.asarray(vertices, dtype=np.float64)
        if origin is None:
            origin = vertices.mean(axis=0)
        origin = np.asarray(origin, dtype=np.float64)
        radius = float(np.sqrt(((vertices - origin) ** 2).sum(axis=1).max()))
        return cls(origin, radius)

    def normalize(self, p):
        return (np.asarray(p, dtype=np.float64) - self.origin) / self.scale

    def denormalize(self, q):
        return np.asarray(q, dtype=np.float64) * self.scale + self.origin

    def to_inverted(self, p):
        """Physical points -> inverted normalized coordinates (vectorized)."""
        return invert_many(self.normalize(p))

    def from_inverted(self, y):
        return self.denormalize(invert_many(y))


@dataclass(frozen=True)
class SizingField:
    l_x: float
    l_y_min: float

    def __post_init__(self):
        if not self.l_x > 0:
            raise ValueError(f"l_x must be positive, got {self.l_x}")
        if not self.l_y_min > 0:
            raise ValueError(f"l_y_min must be positive, got {self.l_y_min}")


def invert(p, frame: InversionFrame | None = None) -> np.ndarray:
    """Inversion ``q -> q / |q|^2``; ``p`` is normalized through ``frame`` first."""
    q = np.asarray(p, dtype=np.float64)
    if frame is not None:
        q = frame.normalize(q)
    r2 = float(q @ q)
    if r2 < DEGENERATE_EPS**2:
        raise DegeneratePoint(f"point {p!r} coincides with the inversion origin")
    return q / r2


def invert_many(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    r2 = np.einsum("...i,...i->...", q, q)
    if np.any(r2 < DEGENERATE_EPS**2):
        raise DegeneratePoint("point coincides with the inversion origin")
    return q / r2[..., None]


def invert_jacobian(q) -> np.ndarray:
    """Jacobian of the inversion, ``(I |q|^2 - 2 q q^T) / |q|^4``."""
    q = np.asarray(q, dtype=np.float64).reshape(3)
    r2 = float(q @ q)
    if r2 < DEGENERATE_EPS**2:
        raise DegeneratePoint(f"Jacobian undefined at {q!r}")
    return (np.eye(3) * r2 - 2.0 * np.outer(q, q)) / (r2 * r2)


def behavior(y) -> float:
    """Behavior function ``G(y) = |y|`` of the exterior Laplace problem."""
    y = np.asarray(y, dtype=np.float64)
    return float(np.sqrt(y @ y))


def sizing(y, field: SizingField) -> float:
    y = np.asarray(y, dtype=np.float64)
    return max(float(y @ y) * field.l_x, field.l_y_min)
