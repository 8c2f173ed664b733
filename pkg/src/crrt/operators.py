"""
Discrete differential and projection operators as dense matrices.

Every operator records the inner-product weight of its domain and
codomain so that orthogonality is always measured in L2: volume weights on
elementwise constants, mass matrices on the CR_D and RT_N coefficients.
Vector-valued elementwise constants are stored element-major, i.e. the
entry ``d*T + k`` is component ``k`` on element ``T``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import Incompatible, QuadratureUnavailable
from .mesh import Triangulation
from .quadrature import simplex_rule
from .spaces import (
    CrFunction,
    RtField,
    barycentric_gradients,
    cr_dofs,
    cr_mass,
    rt_dofs,
    rt_local_coefficients,
    rt_mass,
)

DIV_SOLVE_TOL = 1e-11


@dataclass(frozen=True)
class Space:
    name: str
    weight: np.ndarray

    @property
    def dim(self) -> int:
        return self.weight.shape[0]


def l0_space(mesh: Triangulation, components: int = 1) -> Space:
    w = np.diag(np.repeat(mesh.volumes, components))
    return Space("L0" if components == 1 else f"L0^{components}", w)


def cr_space(mesh: Triangulation) -> Space:
    return Space("CR_D", cr_mass(mesh))


def rt_space(mesh: Triangulation) -> Space:
    return Space("RT_N", rt_mass(mesh))


@dataclass(frozen=True)
class OperatorMatrix:
    matrix: np.ndarray
    domain: Space
    codomain: Space

    def __post_init__(self):
        if self.matrix.shape != (self.codomain.dim, self.domain.dim):
            raise ValueError("operator shape does not match its spaces")

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            return OperatorMatrix(self.matrix @ other.matrix, other.domain, self.codomain)
        return self.matrix @ other

    def adjoint(self) -> "OperatorMatrix":
        """Adjoint with respect to the weighted inner products."""
        mat = np.linalg.solve(self.domain.weight, self.matrix.T @ self.codomain.weight)
        return OperatorMatrix(mat, self.codomain, self.domain)


@dataclass(frozen=True, eq=False)
class PwConst:
    """Elementwise constant scalar or vector field."""

    mesh: Triangulation
    values: np.ndarray  # (nT,) or (nT, l)

    @property
    def components(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    def flat(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float).reshape(-1)

    def inner(self, other: "PwConst") -> float:
        prod = np.asarray(self.values) * np.asarray(other.values)
        if prod.ndim == 2:
            prod = prod.sum(axis=1)
        return float(self.mesh.volumes @ prod)

    def norm(self) -> float:
        return self.inner(self) ** 0.5


def grad_matrix(mesh: Triangulation) -> OperatorMatrix:
    """Elementwise gradient CR_D -> L0^d."""
    d = mesh.dim
    dofs = cr_dofs(mesh)
    pos = -np.ones(mesh.n_sides, dtype=np.int64)
    pos[dofs] = np.arange(dofs.size)
    grads = -d * barycentric_gradients(mesh)
    mat = np.zeros((d * mesh.n_elements, dofs.size))
    for t in range(mesh.n_elements):
        for i, s in enumerate(mesh.element_sides[t]):
            if pos[s] >= 0:
                mat[d * t:d * t + d, pos[s]] = grads[t, i]
    return OperatorMatrix(mat, cr_space(mesh), l0_space(mesh, d))


def div_matrix(mesh: Triangulation) -> OperatorMatrix:
    """Divergence RT_N -> L0."""
    dofs = rt_dofs(mesh)
    pos = -np.ones(mesh.n_sides, dtype=np.int64)
    pos[dofs] = np.arange(dofs.size)
    coef = mesh.dim * rt_local_coefficients(mesh)
    mat = np.zeros((mesh.n_elements, dofs.size))
    for t in range(mesh.n_elements):
        for i, s in enumerate(mesh.element_sides[t]):
            if pos[s] >= 0:
                mat[t, pos[s]] = coef[t, i]
    return OperatorMatrix(mat, rt_space(mesh), l0_space(mesh))


def proj_cr(mesh: Triangulation) -> OperatorMatrix:
    """Barycenter evaluation CR_D -> L0."""
    dofs = cr_dofs(mesh)
    pos = -np.ones(mesh.n_sides, dtype=np.int64)
    pos[dofs] = np.arange(dofs.size)
    mat = np.zeros((mesh.n_elements, dofs.size))
    for t in range(mesh.n_elements):
        for s in mesh.element_sides[t]:
            if pos[s] >= 0:
                mat[t, pos[s]] = 1.0 / (mesh.dim + 1)
    return OperatorMatrix(mat, cr_space(mesh), l0_space(mesh))


def proj_rt(mesh: Triangulation) -> OperatorMatrix:
    """Barycenter evaluation RT_N -> L0^d."""
    d = mesh.dim
    dofs = rt_dofs(mesh)
    pos = -np.ones(mesh.n_sides, dtype=np.int64)
    pos[dofs] = np.arange(dofs.size)
    coef = rt_local_coefficients(mesh)
    mat = np.zeros((d * mesh.n_elements, dofs.size))
    for t in range(mesh.n_elements):
        xt = mesh.barycenters[t]
        for i, s in enumerate(mesh.element_sides[t]):
            if pos[s] >= 0:
                z = mesh.vertices[mesh.cells[t, i]]
                mat[d * t:d * t + d, pos[s]] = coef[t, i] * (xt - z)
    return OperatorMatrix(mat, rt_space(mesh), l0_space(mesh, d))


# --- integrals via quadrature -----------------------------------------------

def _element_values(mesh: Triangulation, obj, element: int, points: np.ndarray) -> np.ndarray:
    if isinstance(obj, (CrFunction, RtField)):
        return obj.values(element, points)
    if isinstance(obj, PwConst):
        vals = np.asarray(obj.values)[element]
        return np.broadcast_to(vals, (points.shape[0],) + np.shape(vals))
    return np.asarray(obj(points), dtype=float)


def element_integrals(mesh: Triangulation, f, degree: int = 2) -> np.ndarray:
    """Integral of ``f`` over every element, shape (nT,) or (nT, m).

    ``f`` is a CrFunction, RtField, PwConst, or a callable on (npts, d)
    arrays of points.
    """
    rule = simplex_rule(mesh.dim, degree)
    out = []
    for t in range(mesh.n_elements):
        pts = rule.physical_points(mesh.vertices[mesh.cells[t]])
        vals = _element_values(mesh, f, t, pts)
        out.append(mesh.volumes[t] * np.tensordot(rule.weights, vals, axes=(0, 0)))
    return np.array(out)


def l2_inner(mesh: Triangulation, v, w, degree: int = 2) -> float:
    """L2 inner product of two piecewise polynomial integrands."""
    rule = simplex_rule(mesh.dim, degree)
    total = 0.0
    for t in range(mesh.n_elements):
        pts = rule.physical_points(mesh.vertices[mesh.cells[t]])
        a = _element_values(mesh, v, t, pts)
        b = _element_values(mesh, w, t, pts)
        prod = a * b
        if prod.ndim == 2:
            prod = prod.sum(axis=1)
        total += mesh.volumes[t] * float(rule.weights @ prod)
    return total


def project(mesh: Triangulation, f, degree: int = 2) -> PwConst:
    """L2 projection onto elementwise constants (element averages)."""
    ints = element_integrals(mesh, f, degree)
    vol = mesh.volumes if ints.ndim == 1 else mesh.volumes[:, None]
    return PwConst(mesh, ints / vol)


def self_adjointness_check(mesh: Triangulation, v, w, degree: int = 2) -> float:
    """|(Pi v, w) - (v, Pi w)| with both sides integrated by quadrature.

    ``degree`` must cover each factor; products of the projection with an
    integrand only need the integrand's degree.
    """
    if degree > 2:
        raise QuadratureUnavailable(f"no rule of degree {degree}")
    pv = project(mesh, v, degree)
    pw = project(mesh, w, degree)
    lhs = l2_inner(mesh, pv, w, degree)
    rhs = l2_inner(mesh, v, pw, degree)
    return abs(lhs - rhs)


def integration_by_parts_residual(v: CrFunction, y: RtField) -> float:
    """|(grad_h v, y) + (v, div y) - int_{boundary} v y.n ds|."""
    mesh = v.mesh
    grad = PwConst(mesh, v.element_gradients())
    div = PwConst(mesh, y.divergence())
    volume_terms = l2_inner(mesh, grad, y) + l2_inner(mesh, v, div)
    # v is affine and y.n constant on each side: the midpoint rule is exact
    bnd = mesh.boundary_sides
    boundary = float(np.sum(mesh.side_areas[bnd] * v.side_values()[bnd] * y.side_fluxes()[bnd]))
    return abs(volume_terms - boundary)


# --- divergence preimage ----------------------------------------------------

def div_solve(mesh: Triangulation, f, *, tol: float = DIV_SOLVE_TOL) -> RtField:
    """Minimum-norm z in RT_N with div z = f.

    The norm is the L2 norm of the field.  Raises :class:`Incompatible` if
    the least-squares residual exceeds ``tol * ||f||`` (in L2), which only
    happens if f is not in the range of the divergence.
    """
    f = np.asarray(f.values if isinstance(f, PwConst) else f, dtype=float).reshape(-1)
    div = div_matrix(mesh).matrix
    if div.shape[1] == 0:
        if np.any(f != 0.0):
            raise Incompatible("RT_N is trivial, only f = 0 has a preimage")
        return RtField.zero(mesh)
    chol = np.linalg.cholesky(rt_mass(mesh))  # M = L L^T
    # z = L^{-T} q, minimize |q| subject to div L^{-T} q = f
    a = sla.solve_triangular(chol, div.T, lower=True).T
    q, *_ = sla.lstsq(a, f, lapack_driver="gelsd")
    z = sla.solve_triangular(chol.T, q, lower=False)
    res = div @ z - f
    res_norm = float(np.sqrt(mesh.volumes @ res**2))
    f_norm = float(np.sqrt(mesh.volumes @ f**2))
    if res_norm > tol * max(f_norm, np.finfo(float).tiny):
        if f_norm == 0.0:
            return RtField.zero(mesh)
        raise Incompatible(f"div z = f has no solution: relative residual {res_norm / f_norm:.3e}")
    return RtField(mesh, z)


def to_triplets(op: OperatorMatrix | np.ndarray, drop_tol: float = 0.0) -> str:
    """Nonzero entries as ``row col value`` lines."""
    mat = op.matrix if isinstance(op, OperatorMatrix) else np.asarray(op)
    rows, cols = np.nonzero(np.abs(mat) > drop_tol)
    return "".join(f"{r} {c} {mat[r, c]:.17g}\n" for r, c in zip(rows, cols))
