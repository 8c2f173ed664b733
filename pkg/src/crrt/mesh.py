"""
Conforming simplicial triangulations in two and three dimensions.

A :class:`Triangulation` stores vertices, cells and the extracted sides
(edges in 2D, faces in 3D) together with the geometric quantities every
other module needs: volumes, barycenters, side areas, unit normals,
adjacent elements and opposite vertices.  Boundary sides carry an explicit
Dirichlet or Neumann marker.

Examples
--------
>>> from crrt.mesh import generate
>>> m = generate("square_diag", n=1, diagonal="right", boundary="all-D")
>>> m.n_elements, m.n_sides
(2, 5)
"""
from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import networkx as nx
import numpy as np

from .errors import (
    DegenerateElement,
    InvalidIndex,
    InvalidParams,
    NonConforming,
    UnknownKind,
    UnmarkedBoundary,
)

DEGENERACY_TOL = 1e-14


class Marker(str, enum.Enum):
    INTERIOR = "I"
    DIRICHLET = "D"
    NEUMANN = "N"


@dataclass(frozen=True)
class Side:
    """A (d-1)-dimensional side shared by one or two elements.

    ``minus_element`` is always present; ``plus_element`` is ``None`` on the
    boundary.  The unit ``normal`` points from the minus into the plus
    element, or outward on the boundary.
    """

    vertex_ids: tuple[int, ...]
    area: float
    midpoint: tuple[float, ...]
    normal: tuple[float, ...]
    minus_element: int
    plus_element: int | None
    opposite_vertex_minus: int
    opposite_vertex_plus: int | None
    marker: Marker

    @property
    def is_boundary(self) -> bool:
        return self.plus_element is None


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Immutable simplicial mesh with side connectivity.

    Array attributes (all read-only):

    ``vertices`` (nV, d), ``cells`` (nT, d+1), ``volumes`` (nT,),
    ``barycenters`` (nT, d), ``side_vertices`` (nS, d), ``side_areas`` (nS,),
    ``side_midpoints`` (nS, d), ``side_normals`` (nS, d),
    ``side_elements`` (nS, 2) with -1 for a missing plus element,
    ``side_opposite`` (nS, 2) opposite vertex ids (-1 if missing),
    ``side_markers`` (nS,) of single-letter codes ``I``/``D``/``N``,
    ``element_sides`` (nT, d+1) where local side i is opposite local vertex i,
    ``element_signs`` (nT, d+1) equal to +1 where the element is the minus
    element of the side (normal points outward) and -1 otherwise.
    """

    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    volumes: np.ndarray
    barycenters: np.ndarray
    side_vertices: np.ndarray
    side_areas: np.ndarray
    side_midpoints: np.ndarray
    side_normals: np.ndarray
    side_elements: np.ndarray
    side_opposite: np.ndarray
    side_markers: np.ndarray
    element_sides: np.ndarray
    element_signs: np.ndarray
    name: str = "mesh"
    boundary_label: str = ""
    domain_volume: float | None = None
    _sides: tuple[Side, ...] = field(default=(), repr=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_elements(self) -> int:
        return self.cells.shape[0]

    @property
    def n_sides(self) -> int:
        return self.side_vertices.shape[0]

    @property
    def sides(self) -> tuple[Side, ...]:
        return self._sides

    @property
    def interior_sides(self) -> np.ndarray:
        return np.flatnonzero(self.side_markers == Marker.INTERIOR.value)

    @property
    def dirichlet_sides(self) -> np.ndarray:
        return np.flatnonzero(self.side_markers == Marker.DIRICHLET.value)

    @property
    def neumann_sides(self) -> np.ndarray:
        return np.flatnonzero(self.side_markers == Marker.NEUMANN.value)

    @property
    def boundary_sides(self) -> np.ndarray:
        return np.flatnonzero(self.side_elements[:, 1] < 0)

    @property
    def dirichlet_is_whole_boundary(self) -> bool:
        return self.neumann_sides.size == 0

    @property
    def descriptor(self) -> dict:
        return {
            "name": self.name,
            "boundary": self.boundary_label,
            "dim": self.dim,
            "n_vertices": self.n_vertices,
            "n_elements": self.n_elements,
            "n_sides": self.n_sides,
            "n_dirichlet": int(self.dirichlet_sides.size),
            "n_neumann": int(self.neumann_sides.size),
        }

    def barycentric(self, element: int, points: np.ndarray) -> np.ndarray:
        """Barycentric coordinates of ``points`` (npts, d) w.r.t. ``element``."""
        verts = self.vertices[self.cells[element]]
        points = np.atleast_2d(np.asarray(points, dtype=float))
        jac = (verts[1:] - verts[0]).T
        lam_tail = np.linalg.solve(jac, (points - verts[0]).T).T
        return np.column_stack([1.0 - lam_tail.sum(axis=1), lam_tail])

    def to_dict(self) -> dict:
        boundary = [
            {"side": [int(v) for v in self.side_vertices[s]], "marker": str(self.side_markers[s])}
            for s in self.boundary_sides
        ]
        return {
            "dim": self.dim,
            "vertices": self.vertices.tolist(),
            "cells": self.cells.tolist(),
            "boundary": boundary,
        }


def _side_measure(points: np.ndarray) -> float:
    """(d-1)-measure of the simplex spanned by the rows of ``points``."""
    edges = points[1:] - points[0]
    gram = edges @ edges.T
    k = edges.shape[0]
    return math.sqrt(max(np.linalg.det(gram), 0.0)) / math.factorial(k)


def _unit_normal(points: np.ndarray) -> np.ndarray:
    edges = points[1:] - points[0]
    _, _, vt = np.linalg.svd(edges)
    n = vt[-1]
    return n / np.linalg.norm(n)


def _readonly(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.setflags(write=False)


def build(
    dim: int,
    vertices: Sequence[Sequence[float]],
    cells: Sequence[Sequence[int]],
    boundary_markers: Mapping[Sequence[int], str] | Sequence[tuple[Sequence[int], str]],
    *,
    name: str = "mesh",
    boundary_label: str = "",
    domain_volume: float | None = None,
) -> Triangulation:
    """Assemble a :class:`Triangulation` from raw arrays.

    Parameters
    ----------
    dim : int
        Spatial dimension, 2 or 3.
    vertices : array_like, shape (nV, dim)
    cells : array_like of int, shape (nT, dim+1)
    boundary_markers : mapping or sequence of pairs
        Every boundary side, given by its vertex ids in any order, mapped to
        ``"D"`` or ``"N"``.  Each boundary side must appear exactly once.

    Raises
    ------
    InvalidIndex, DegenerateElement, NonConforming, UnmarkedBoundary
    """
    if dim not in (2, 3):
        raise InvalidParams(f"unsupported dimension {dim}")
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != dim:
        raise InvalidParams(f"vertices must have shape (nV, {dim})")
    try:
        tets = np.asarray(cells, dtype=np.int64)
    except (TypeError, ValueError) as exc:
        raise InvalidIndex(f"cells are not integer tuples: {exc}") from None
    if tets.ndim != 2 or tets.shape[1] != dim + 1 or tets.shape[0] == 0:
        raise InvalidParams(f"cells must have shape (nT, {dim + 1})")
    if tets.min() < 0 or tets.max() >= verts.shape[0]:
        raise InvalidIndex("cell refers to a vertex index out of range")

    n_el = tets.shape[0]
    volumes = np.empty(n_el)
    for t, cell in enumerate(tets):
        p = verts[cell]
        edge_vecs = p[1:] - p[0]
        vol = abs(np.linalg.det(edge_vecs)) / math.factorial(dim)
        hmax = max(np.linalg.norm(a - b) for a, b in itertools.combinations(p, 2))
        if vol <= DEGENERACY_TOL * hmax**dim or len(set(cell.tolist())) < dim + 1:
            raise DegenerateElement(f"element {t} has volume {vol:.3e}")
        volumes[t] = vol
    barycenters = verts[tets].mean(axis=1)

    # side extraction: local side i is opposite local vertex i
    side_index: dict[tuple[int, ...], int] = {}
    side_keys: list[tuple[int, ...]] = []
    adjacency: list[list[tuple[int, int]]] = []
    element_sides = np.empty((n_el, dim + 1), dtype=np.int64)
    for t, cell in enumerate(tets):
        for i in range(dim + 1):
            key = tuple(sorted(int(v) for j, v in enumerate(cell) if j != i))
            s = side_index.get(key)
            if s is None:
                s = len(side_keys)
                side_index[key] = s
                side_keys.append(key)
                adjacency.append([])
            adjacency[s].append((t, int(cell[i])))
            if len(adjacency[s]) > 2:
                raise NonConforming(f"side {key} is shared by more than two elements")
            element_sides[t, i] = s

    markers_in: dict[tuple[int, ...], str] = {}
    items = boundary_markers.items() if isinstance(boundary_markers, Mapping) else boundary_markers
    for side, marker in items:
        key = tuple(sorted(int(v) for v in side))
        marker = str(marker).upper()
        if marker not in ("D", "N"):
            raise InvalidParams(f"boundary marker must be 'D' or 'N', got {marker!r}")
        if key in markers_in:
            raise InvalidParams(f"side {key} is marked more than once")
        markers_in[key] = marker

    n_sides = len(side_keys)
    side_vertices = np.array(side_keys, dtype=np.int64)
    side_areas = np.empty(n_sides)
    side_midpoints = np.empty((n_sides, dim))
    side_normals = np.empty((n_sides, dim))
    side_elements = -np.ones((n_sides, 2), dtype=np.int64)
    side_opposite = -np.ones((n_sides, 2), dtype=np.int64)
    side_markers = np.empty(n_sides, dtype="<U1")
    for s, key in enumerate(side_keys):
        p = verts[list(key)]
        side_areas[s] = _side_measure(p)
        side_midpoints[s] = p.mean(axis=0)
        adj = sorted(adjacency[s])
        for k, (t, z) in enumerate(adj):
            side_elements[s, k] = t
            side_opposite[s, k] = z
        n = _unit_normal(p)
        # orient away from the opposite vertex of the minus element
        if np.dot(side_midpoints[s] - verts[side_opposite[s, 0]], n) < 0:
            n = -n
        side_normals[s] = n
        if len(adj) == 2:
            if key in markers_in:
                raise InvalidIndex(f"boundary marker given for interior side {key}")
            side_markers[s] = Marker.INTERIOR.value
        else:
            if key not in markers_in:
                raise UnmarkedBoundary(f"boundary side {key} has no marker")
            side_markers[s] = markers_in.pop(key)
    if markers_in:
        raise InvalidIndex(f"boundary markers refer to unknown sides {sorted(markers_in)}")

    element_signs = np.where(side_elements[element_sides, 0] == np.arange(n_el)[:, None], 1, -1)

    sides = tuple(
        Side(
            vertex_ids=side_keys[s],
            area=float(side_areas[s]),
            midpoint=tuple(float(c) for c in side_midpoints[s]),
            normal=tuple(float(c) for c in side_normals[s]),
            minus_element=int(side_elements[s, 0]),
            plus_element=None if side_elements[s, 1] < 0 else int(side_elements[s, 1]),
            opposite_vertex_minus=int(side_opposite[s, 0]),
            opposite_vertex_plus=None if side_opposite[s, 1] < 0 else int(side_opposite[s, 1]),
            marker=Marker(side_markers[s]),
        )
        for s in range(n_sides)
    )
    _readonly(
        verts, tets, volumes, barycenters, side_vertices, side_areas, side_midpoints,
        side_normals, side_elements, side_opposite, side_markers, element_sides, element_signs,
    )
    return Triangulation(
        dim=dim,
        vertices=verts,
        cells=tets,
        volumes=volumes,
        barycenters=barycenters,
        side_vertices=side_vertices,
        side_areas=side_areas,
        side_midpoints=side_midpoints,
        side_normals=side_normals,
        side_elements=side_elements,
        side_opposite=side_opposite,
        side_markers=side_markers,
        element_sides=element_sides,
        element_signs=element_signs,
        name=name,
        boundary_label=boundary_label,
        domain_volume=domain_volume,
        _sides=sides,
    )


# --- generators -----------------------------------------------------------

_AXIS_NAMES = {
    "x0": (0, 0.0), "x1": (0, 1.0), "y0": (1, 0.0), "y1": (1, 1.0), "z0": (2, 0.0), "z1": (2, 1.0),
    "left": (0, 0.0), "right": (0, 1.0), "bottom": (1, 0.0), "top": (1, 1.0),
}


def _vertex_predicate(part: str, dim: int) -> Callable[[np.ndarray], np.ndarray]:
    part = part.strip().lower()
    if part == "hyp":
        return lambda p: np.isclose(p.sum(axis=-1), 1.0)
    if part in _AXIS_NAMES:
        axis, value = _AXIS_NAMES[part]
        if axis >= dim:
            raise InvalidParams(f"boundary part {part!r} needs dimension > {axis}")
        return lambda p: np.isclose(p[..., axis], value)
    raise InvalidParams(f"unknown boundary part {part!r}")


def _boundary_faces(dim: int, cells: np.ndarray) -> list[tuple[int, ...]]:
    count: dict[tuple[int, ...], int] = {}
    for cell in cells:
        for i in range(dim + 1):
            key = tuple(sorted(int(v) for j, v in enumerate(cell) if j != i))
            count[key] = count.get(key, 0) + 1
    return [k for k, c in count.items() if c == 1]


def mark_boundary(
    dim: int,
    vertices: np.ndarray,
    cells: np.ndarray,
    boundary: str | Callable[[np.ndarray], bool],
) -> dict[tuple[int, ...], str]:
    """Assign D/N markers to the boundary sides of a raw mesh.

    ``boundary`` is ``"all-D"``, ``"all-N"``, a comma separated list of named
    boundary parts that become Dirichlet (the rest is Neumann), or a
    predicate on the side midpoint returning True for Dirichlet sides.
    Named parts are ``left/right/bottom/top``, ``x0..z1`` and ``hyp``
    (the face x+y(+z)=1 of the reference simplex).
    """
    vertices = np.asarray(vertices, dtype=float)
    faces = _boundary_faces(dim, np.asarray(cells))
    if callable(boundary):
        return {f: "D" if boundary(vertices[list(f)].mean(axis=0)) else "N" for f in faces}
    label = boundary.strip()
    if label.lower() == "all-d":
        return {f: "D" for f in faces}
    if label.lower() == "all-n":
        return {f: "N" for f in faces}
    parts = [p for p in label.split(",") if p.strip()]
    if not parts:
        raise InvalidParams("empty boundary specification")
    markers = {f: "N" for f in faces}
    for part in parts:
        pred = _vertex_predicate(part, dim)
        hits = [f for f in faces if np.all(pred(vertices[list(f)]))]
        if not hits:
            raise InvalidParams(f"boundary part {part!r} matches no boundary side")
        for f in hits:
            markers[f] = "D"
    return markers


def _single_simplex(dim: int = 2):
    verts = np.vstack([np.zeros(dim), np.eye(dim)])
    cells = np.array([list(range(dim + 1))])
    return verts, cells, 1.0 / math.factorial(dim)


def _square_diag(n: int = 1, diagonal: str = "right"):
    if n < 1:
        raise InvalidParams("n must be a positive integer")
    if diagonal not in ("right", "left", "crisscross"):
        raise InvalidParams(f"unknown diagonal {diagonal!r}")
    xs = np.linspace(0.0, 1.0, n + 1)
    verts = [(x, y) for y in xs for x in xs]

    def vid(i, j):
        return j * (n + 1) + i

    cells = []
    for j in range(n):
        for i in range(n):
            v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            if diagonal == "right":
                cells += [(v00, v10, v11), (v00, v11, v01)]
            elif diagonal == "left":
                cells += [(v00, v10, v01), (v10, v11, v01)]
            else:
                c = len(verts)
                verts.append(((i + 0.5) / n, (j + 0.5) / n))
                cells += [(v00, v10, c), (v10, v11, c), (v11, v01, c), (v01, v00, c)]
    return np.array(verts), np.array(cells), 1.0


def _bary3():
    verts = np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0 / 3.0, 1.0 / 3.0)])
    cells = np.array([(0, 1, 3), (1, 2, 3), (2, 0, 3)])
    return verts, cells, 0.5


def _two_triangles():
    # deliberately without symmetry
    verts = np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.2, 0.9)])
    cells = np.array([(0, 1, 2), (1, 3, 2)])
    return verts, cells, 1.05


def _cube6(n: int = 1):
    if n < 1:
        raise InvalidParams("n must be a positive integer")
    xs = np.linspace(0.0, 1.0, n + 1)
    verts = np.array([(x, y, z) for z in xs for y in xs for x in xs])

    def vid(i, j, k):
        return (k * (n + 1) + j) * (n + 1) + i

    cells = []
    for k in range(n):
        for j in range(n):
            for i in range(n):
                for perm in itertools.permutations(range(3)):
                    idx = [i, j, k]
                    path = [vid(*idx)]
                    for axis in perm:
                        idx[axis] += 1
                        path.append(vid(*idx))
                    cells.append(path)
    return verts, np.array(cells), 1.0


GENERATORS = {
    "single_simplex": _single_simplex,
    "square_diag": _square_diag,
    "bary3": _bary3,
    "two_triangles": _two_triangles,
    "cube6": _cube6,
}


def generate(kind: str, boundary: str | Callable = "all-D", **params) -> Triangulation:
    """Generate one of the built-in meshes.

    Parameters
    ----------
    kind : {"single_simplex", "square_diag", "bary3", "two_triangles", "cube6"}
    boundary : str or callable
        See :func:`mark_boundary`.
    **params
        ``dim`` for single_simplex, ``n`` and ``diagonal`` for square_diag,
        ``n`` for cube6.
    """
    if kind not in GENERATORS:
        raise UnknownKind(f"unknown mesh kind {kind!r}")
    try:
        verts, cells, volume = GENERATORS[kind](**params)
    except TypeError as exc:
        raise InvalidParams(str(exc)) from None
    dim = verts.shape[1]
    markers = mark_boundary(dim, verts, cells, boundary)
    args = ",".join(f"{k}={v}" for k, v in sorted(params.items()))
    label = boundary if isinstance(boundary, str) else getattr(boundary, "__name__", "predicate")
    return build(
        dim, verts, cells, markers,
        name=f"{kind}({args})", boundary_label=label, domain_volume=volume,
    )


def element_adjacency(mesh: Triangulation) -> nx.Graph:
    """Dual graph: elements as nodes, interior sides as edges.

    Each edge carries the shared side index in the ``side`` attribute.
    """
    g = nx.Graph()
    g.add_nodes_from(range(mesh.n_elements))
    for s in mesh.interior_sides:
        tm, tp = mesh.side_elements[s]
        g.add_edge(int(tm), int(tp), side=int(s))
    return g


# --- JSON I/O -------------------------------------------------------------

def from_dict(data: dict, *, name: str = "mesh") -> Triangulation:
    try:
        dim = int(data["dim"])
        boundary = [(entry["side"], entry["marker"]) for entry in data["boundary"]]
        return build(dim, data["vertices"], data["cells"], boundary, name=name, boundary_label="file")
    except (KeyError, TypeError) as exc:
        raise InvalidParams(f"malformed mesh description: {exc}") from None


def read_json(path) -> Triangulation:
    with open(path) as fh:
        data = json.load(fh)
    return from_dict(data, name=str(path))


def write_json(mesh: Triangulation, path) -> None:
    with open(path, "w") as fh:
        json.dump(mesh.to_dict(), fh, indent=1)
        fh.write("\n")
