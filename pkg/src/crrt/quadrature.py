"""Quadrature rules on simplices in barycentric coordinates."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import QuadratureUnavailable


@dataclass(frozen=True)
class QuadratureRule:
    """Points in barycentric coordinates with weights summing to one.

    Multiply by the simplex measure to integrate.
    """

    points: np.ndarray  # (npts, k+1)
    weights: np.ndarray  # (npts,)
    degree: int

    @property
    def simplex_dim(self) -> int:
        return self.points.shape[1] - 1

    def physical_points(self, vertices: np.ndarray) -> np.ndarray:
        return self.points @ np.asarray(vertices, dtype=float)

    def integrate(self, f, vertices: np.ndarray, measure: float | None = None):
        """Integrate ``f`` over the simplex with the given vertex rows.

        ``f`` maps an (npts, d) array of points to (npts,) or (npts, m).
        """
        vertices = np.asarray(vertices, dtype=float)
        if measure is None:
            measure = simplex_measure(vertices)
        vals = np.asarray(f(self.physical_points(vertices)), dtype=float)
        return measure * np.tensordot(self.weights, vals, axes=(0, 0))


def simplex_measure(vertices: np.ndarray) -> float:
    edges = vertices[1:] - vertices[0]
    k = edges.shape[0]
    if k == 0:
        return 1.0
    return math.sqrt(max(np.linalg.det(edges @ edges.T), 0.0)) / math.factorial(k)


def _centroid(k: int) -> QuadratureRule:
    return QuadratureRule(np.full((1, k + 1), 1.0 / (k + 1)), np.ones(1), 1)


def _gauss2_segment() -> QuadratureRule:
    t = 0.5 / math.sqrt(3.0)
    pts = np.array([[0.5 + t, 0.5 - t], [0.5 - t, 0.5 + t]])
    return QuadratureRule(pts, np.full(2, 0.5), 3)


def _edge_midpoints_triangle() -> QuadratureRule:
    pts = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
    return QuadratureRule(pts, np.full(3, 1.0 / 3.0), 2)


def _tet4() -> QuadratureRule:
    a = (5.0 + 3.0 * math.sqrt(5.0)) / 20.0
    b = (5.0 - math.sqrt(5.0)) / 20.0
    pts = np.full((4, 4), b)
    np.fill_diagonal(pts, a)
    return QuadratureRule(pts, np.full(4, 0.25), 2)


def simplex_rule(k: int, degree: int = 2) -> QuadratureRule:
    """Cheapest built-in rule on a k-simplex exact for the given degree."""
    if degree <= 1:
        return _centroid(k)
    if k == 1 and degree <= 3:
        return _gauss2_segment()
    if k == 2 and degree <= 2:
        return _edge_midpoints_triangle()
    if k == 3 and degree <= 2:
        return _tet4()
    raise QuadratureUnavailable(f"no rule of degree {degree} on a {k}-simplex")
