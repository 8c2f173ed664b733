"""
Lowest-order Crouzeix-Raviart and Raviart-Thomas spaces.

Degrees of freedom live on sides.  A Crouzeix-Raviart function stores its
value at the midpoint of every side that is not Dirichlet; a Raviart-Thomas
field stores its normal flux (in the direction of the side normal) across
every side that is not Neumann.  Constrained sides are eliminated, so the
coefficient vectors have exactly the dimension of the constrained space.

On an element T with vertices z_0..z_d and local side S_i opposite z_i

    phi_S|_T(x) = 1 - d * lambda_i(x),
    psi_S|_T(x) = sigma * |S| / (d |T|) * (x - z_i),

where sigma = +1 if T is the minus element of S and -1 otherwise.  Both
bases satisfy the Kronecker property with respect to midpoint values and
normal fluxes.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import AssertionFailed, InvalidIndex, PointOutsideElement
from .mesh import Triangulation
from .quadrature import simplex_rule

INSIDE_TOL = 1e-12


class InterpolationWarning(UserWarning):
    pass


# --- degree-of-freedom maps -------------------------------------------------

def cr_dofs(mesh: Triangulation) -> np.ndarray:
    """Global side indices carrying a CR_D degree of freedom (sorted)."""
    return np.flatnonzero(mesh.side_markers != "D")


def rt_dofs(mesh: Triangulation) -> np.ndarray:
    """Global side indices carrying an RT_N degree of freedom (sorted)."""
    return np.flatnonzero(mesh.side_markers != "N")


def _scatter(mesh: Triangulation, dofs: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    full = np.zeros(mesh.n_sides)
    full[dofs] = coeffs
    return full


@lru_cache(maxsize=64)
def barycentric_gradients(mesh: Triangulation) -> np.ndarray:
    """Gradients of the barycentric coordinates, shape (nT, d+1, d)."""
    verts = mesh.vertices[mesh.cells]
    jac = np.transpose(verts[:, 1:] - verts[:, :1], (0, 2, 1))
    inv = np.linalg.inv(jac)
    tail = inv  # rows: gradients of lambda_1..lambda_d
    head = -tail.sum(axis=1, keepdims=True)
    return np.concatenate([head, tail], axis=1)


@lru_cache(maxsize=64)
def rt_local_coefficients(mesh: Triangulation) -> np.ndarray:
    """sigma * |S| / (d |T|) for every element and local side, shape (nT, d+1)."""
    areas = mesh.side_areas[mesh.element_sides]
    return mesh.element_signs * areas / (mesh.dim * mesh.volumes[:, None])


# --- function types ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CrFunction:
    """Member of CR_D: midpoint values on the non-Dirichlet sides."""

    mesh: Triangulation
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape != (cr_dofs(self.mesh).size,):
            raise ValueError(f"expected {cr_dofs(self.mesh).size} CR coefficients, got {c.shape}")
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def zero(cls, mesh: Triangulation) -> "CrFunction":
        return cls(mesh, np.zeros(cr_dofs(mesh).size))

    @classmethod
    def basis(cls, mesh: Triangulation, side: int) -> "CrFunction":
        dofs = cr_dofs(mesh)
        pos = np.flatnonzero(dofs == side)
        if pos.size != 1:
            raise InvalidIndex(f"side {side} carries no CR degree of freedom")
        c = np.zeros(dofs.size)
        c[pos] = 1.0
        return cls(mesh, c)

    def side_values(self) -> np.ndarray:
        """Midpoint values on all sides, zero on Dirichlet sides."""
        return _scatter(self.mesh, cr_dofs(self.mesh), self.coefficients)

    def element_gradients(self) -> np.ndarray:
        vals = self.side_values()[self.mesh.element_sides]
        grads = barycentric_gradients(self.mesh)
        return -self.mesh.dim * np.einsum("ti,tid->td", vals, grads)

    def barycenter_values(self) -> np.ndarray:
        return self.side_values()[self.mesh.element_sides].mean(axis=1)

    def values(self, element: int, points: np.ndarray) -> np.ndarray:
        lam = self.mesh.barycentric(element, points)
        vals = self.side_values()[self.mesh.element_sides[element]]
        return (1.0 - self.mesh.dim * lam) @ vals


@dataclass(frozen=True, eq=False)
class RtField:
    """Member of RT_N: normal fluxes on the non-Neumann sides.

    ``local`` optionally holds the elementwise representation (a_T, b_T)
    with y|_T(x) = a_T + b_T (x - x_T) when the field was assembled
    elementwise; it then takes precedence over the flux coefficients for
    projections so that constructed constant parts are reproduced exactly.
    """

    mesh: Triangulation
    coefficients: np.ndarray
    local: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape != (rt_dofs(self.mesh).size,):
            raise ValueError(f"expected {rt_dofs(self.mesh).size} RT coefficients, got {c.shape}")
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def zero(cls, mesh: Triangulation) -> "RtField":
        return cls(mesh, np.zeros(rt_dofs(mesh).size))

    @classmethod
    def basis(cls, mesh: Triangulation, side: int) -> "RtField":
        dofs = rt_dofs(mesh)
        pos = np.flatnonzero(dofs == side)
        if pos.size != 1:
            raise InvalidIndex(f"side {side} carries no RT degree of freedom")
        c = np.zeros(dofs.size)
        c[pos] = 1.0
        return cls(mesh, c)

    def side_fluxes(self) -> np.ndarray:
        return _scatter(self.mesh, rt_dofs(self.mesh), self.coefficients)

    def elementwise(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (a, b) with a of shape (nT, d) and b of shape (nT,)."""
        if self.local is not None:
            return self.local
        return _local_from_fluxes(self.mesh, self.side_fluxes())

    def barycenter_values(self) -> np.ndarray:
        return self.elementwise()[0]

    def divergence(self) -> np.ndarray:
        return self.mesh.dim * self.elementwise()[1]

    def values(self, element: int, points: np.ndarray) -> np.ndarray:
        a, b = self.elementwise()
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return a[element] + b[element] * (points - self.mesh.barycenters[element])


def _local_from_fluxes(mesh: Triangulation, fluxes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    coef = rt_local_coefficients(mesh) * fluxes[mesh.element_sides]
    opp = mesh.vertices[mesh.cells]
    b = coef.sum(axis=1)
    a = np.einsum("ti,tid->td", coef, mesh.barycenters[:, None, :] - opp)
    return a, b


def side_traces(mesh: Triangulation, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Normal traces (along n_S) from the minus and plus element, shape (nS, 2).

    Boundary sides get NaN in the plus column.
    """
    traces = np.full((mesh.n_sides, 2), np.nan)
    for k in range(2):
        has = mesh.side_elements[:, k] >= 0
        t = mesh.side_elements[has, k]
        vals = a[t] + b[t, None] * (mesh.side_midpoints[has] - mesh.barycenters[t])
        traces[has, k] = np.einsum("sd,sd->s", vals, mesh.side_normals[has])
    return traces


def membership_residual(mesh: Triangulation, a: np.ndarray, b: np.ndarray) -> float:
    """Largest normal-trace violation of an elementwise a + b (x - x_T) field.

    Measures jumps across interior sides and traces on Neumann sides.
    """
    traces = side_traces(mesh, a, b)
    res = 0.0
    inner = mesh.interior_sides
    if inner.size:
        res = max(res, float(np.max(np.abs(traces[inner, 0] - traces[inner, 1]))))
    neu = mesh.neumann_sides
    if neu.size:
        res = max(res, float(np.max(np.abs(traces[neu, 0]))))
    return res


def rt_from_elementwise(
    mesh: Triangulation, a: np.ndarray, b: np.ndarray, *, tol: float | None = 1e-10
) -> RtField:
    """Wrap an elementwise field as an RtField after checking membership.

    The membership bound is ``tol * (1 + max |trace|)``; pass ``tol=None`` to
    skip the check.
    """
    a = np.array(a, dtype=float).reshape(mesh.n_elements, mesh.dim)
    b = np.array(b, dtype=float).reshape(mesh.n_elements)
    traces = side_traces(mesh, a, b)
    if tol is not None:
        scale = 1.0 + float(np.nanmax(np.abs(traces))) if traces.size else 1.0
        res = membership_residual(mesh, a, b)
        if res > tol * scale:
            raise AssertionFailed(f"field is not in RT_N: normal-trace residual {res:.3e}")
    fluxes = np.where(np.isnan(traces[:, 1]), traces[:, 0], 0.5 * (traces[:, 0] + traces[:, 1]))
    a.setflags(write=False)
    b.setflags(write=False)
    return RtField(mesh, fluxes[rt_dofs(mesh)], local=(a, b))


# --- pointwise evaluation ---------------------------------------------------

def _check_inside(mesh: Triangulation, element: int, point) -> np.ndarray:
    lam = mesh.barycentric(element, point)
    if np.any(lam < -INSIDE_TOL) or np.any(lam > 1 + INSIDE_TOL):
        raise PointOutsideElement(f"point {np.asarray(point).tolist()} is outside element {element}")
    return lam


def eval_cr(v: CrFunction, element: int, point) -> float:
    _check_inside(v.mesh, element, point)
    return float(v.values(element, point)[0])


def eval_rt(y: RtField, element: int, point) -> np.ndarray:
    _check_inside(y.mesh, element, point)
    return y.values(element, point)[0]


# --- quasi-interpolation ----------------------------------------------------

def _side_averages(mesh: Triangulation, f, degree: int) -> np.ndarray:
    rule = simplex_rule(mesh.dim - 1, degree)
    out = []
    for s in range(mesh.n_sides):
        pts = rule.physical_points(mesh.vertices[mesh.side_vertices[s]])
        out.append(np.tensordot(rule.weights, np.asarray(f(pts), dtype=float), axes=(0, 0)))
    return np.array(out)


def interpolate_cr(mesh: Triangulation, f, degree: int = 2) -> CrFunction:
    """Side averages of ``f``; Dirichlet sides are dropped."""
    avg = _side_averages(mesh, f, degree)
    return CrFunction(mesh, avg[cr_dofs(mesh)])


def interpolate_rt(mesh: Triangulation, g, degree: int = 2, tol: float = 1e-12) -> RtField:
    """Side averages of the normal component of ``g``.

    A nonzero average on a Neumann side is reported by an
    :class:`InterpolationWarning`; that flux is not representable and is
    dropped.
    """
    avg = _side_averages(mesh, g, degree)
    fluxes = np.einsum("sd,sd->s", avg, mesh.side_normals)
    neu = mesh.neumann_sides
    if neu.size and np.max(np.abs(fluxes[neu])) > tol:
        warnings.warn(
            f"normal component does not vanish on {int(np.sum(np.abs(fluxes[neu]) > tol))} "
            "Neumann side(s); coefficients forced to zero",
            InterpolationWarning,
            stacklevel=2,
        )
    return RtField(mesh, fluxes[rt_dofs(mesh)])


# --- mass matrices ----------------------------------------------------------

@lru_cache(maxsize=64)
def cr_mass(mesh: Triangulation) -> np.ndarray:
    """L2 Gram matrix of the CR_D basis."""
    rule = simplex_rule(mesh.dim, 2)
    dofs = cr_dofs(mesh)
    pos = -np.ones(mesh.n_sides, dtype=np.int64)
    pos[dofs] = np.arange(dofs.size)
    local = (1.0 - mesh.dim * rule.points)  # basis of local side i at each point
    elem = np.einsum("q,qi,qj->ij", rule.weights, local, local)
    m = np.zeros((dofs.size, dofs.size))
    for t in range(mesh.n_elements):
        idx = pos[mesh.element_sides[t]]
        keep = idx >= 0
        m[np.ix_(idx[keep], idx[keep])] += mesh.volumes[t] * elem[np.ix_(keep, keep)]
    return m


@lru_cache(maxsize=64)
def rt_mass(mesh: Triangulation) -> np.ndarray:
    """L2 Gram matrix of the RT_N basis."""
    rule = simplex_rule(mesh.dim, 2)
    dofs = rt_dofs(mesh)
    pos = -np.ones(mesh.n_sides, dtype=np.int64)
    pos[dofs] = np.arange(dofs.size)
    coef = rt_local_coefficients(mesh)
    m = np.zeros((dofs.size, dofs.size))
    for t in range(mesh.n_elements):
        verts = mesh.vertices[mesh.cells[t]]
        pts = rule.physical_points(verts)
        # basis i at point q: coef_i * (x_q - z_i)
        vals = coef[t][None, :, None] * (pts[:, None, :] - verts[None, :, :])
        elem = mesh.volumes[t] * np.einsum("q,qid,qjd->ij", rule.weights, vals, vals)
        idx = pos[mesh.element_sides[t]]
        keep = idx >= 0
        m[np.ix_(idx[keep], idx[keep])] += elem[np.ix_(keep, keep)]
    return m
