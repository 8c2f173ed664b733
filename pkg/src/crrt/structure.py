"""
Defect measurements for the basic properties of the CR and RT spaces.

Each function returns the largest absolute defect; zero in exact
arithmetic.  The commuting properties need the interpolated data to be
representable, so they are measured on copies of the mesh with all-Neumann
(CR) or all-Dirichlet (RT) boundary.
"""
from __future__ import annotations

import itertools

import numpy as np

from .mesh import Triangulation, build, mark_boundary
from .operators import integration_by_parts_residual, project
from .spaces import CrFunction, RtField, cr_dofs, interpolate_cr, interpolate_rt, rt_dofs


def relabel(mesh: Triangulation, boundary: str) -> Triangulation:
    """Same triangulation with different boundary markers."""
    markers = mark_boundary(mesh.dim, mesh.vertices, mesh.cells, boundary)
    return build(mesh.dim, mesh.vertices, mesh.cells, markers, name=mesh.name, boundary_label=boundary)


def kronecker_defect_cr(mesh: Triangulation) -> float:
    """max |phi_S(x_S') - delta_SS'| over all sides S' of the support of phi_S."""
    worst = 0.0
    for s in cr_dofs(mesh):
        phi = CrFunction.basis(mesh, int(s))
        for t in mesh.side_elements[s]:
            if t < 0:
                continue
            local = mesh.element_sides[t]
            vals = phi.values(t, mesh.side_midpoints[local])
            worst = max(worst, float(np.max(np.abs(vals - (local == s)))))
    return worst


def kronecker_defect_rt(mesh: Triangulation) -> float:
    """max |psi_S(x_S') . n_S' - delta_SS'| over the support of psi_S."""
    worst = 0.0
    for s in rt_dofs(mesh):
        psi = RtField.basis(mesh, int(s))
        for t in mesh.side_elements[s]:
            if t < 0:
                continue
            local = mesh.element_sides[t]
            vals = psi.values(t, mesh.side_midpoints[local])
            flux = np.einsum("kd,kd->k", vals, mesh.side_normals[local])
            worst = max(worst, float(np.max(np.abs(flux - (local == s)))))
    return worst


def monomials(dim: int, degree: int = 2) -> list[tuple[int, ...]]:
    """Exponent tuples of all monomials of total degree <= ``degree``."""
    return [e for e in itertools.product(range(degree + 1), repeat=dim) if sum(e) <= degree]


def _monomial(exps):
    exps = np.asarray(exps)

    def f(x):
        return np.prod(np.asarray(x, dtype=float) ** exps, axis=-1)

    def grad(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for k, e in enumerate(exps):
            if e:
                lowered = exps.copy()
                lowered[k] -= 1
                out[:, k] = e * np.prod(x**lowered, axis=-1)
        return out

    return f, grad


def commuting_defect_cr(mesh: Triangulation, degree: int = 2) -> float:
    """max |grad_h I_cr f - Pi_h grad f| over monomials f of degree <= 2."""
    free = relabel(mesh, "all-N")
    worst = 0.0
    for exps in monomials(mesh.dim, degree):
        f, grad = _monomial(exps)
        lhs = interpolate_cr(free, f).element_gradients()
        rhs = project(free, grad).values
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def commuting_defect_rt(mesh: Triangulation, degree: int = 2) -> float:
    """max |div I_RT g - Pi_h div g| over monomial vector fields of degree <= 2."""
    closed = relabel(mesh, "all-D")
    worst = 0.0
    for exps in monomials(mesh.dim, degree):
        f, grad = _monomial(exps)
        for k in range(mesh.dim):
            def g(x, f=f, k=k):
                out = np.zeros((len(x), mesh.dim))
                out[:, k] = f(x)
                return out

            lhs = interpolate_rt(closed, g).divergence()
            rhs = project(closed, lambda x, grad=grad, k=k: grad(x)[:, k]).values
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def ibp_defect(mesh: Triangulation, samples: int = 100, seed: int = 0) -> float:
    """Integration by parts residual over random pairs (v, y) in CR_D x RT_N."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        v = CrFunction(mesh, rng.standard_normal(cr_dofs(mesh).size))
        y = RtField(mesh, rng.standard_normal(rt_dofs(mesh).size))
        worst = max(worst, integration_by_parts_residual(v, y))
    return worst


def projection_defect(mesh: Triangulation) -> float:
    """Barycenter values against quadrature averages for every basis function."""
    worst = 0.0
    for s in cr_dofs(mesh):
        phi = CrFunction.basis(mesh, int(s))
        worst = max(worst, float(np.max(np.abs(project(mesh, phi).values - phi.barycenter_values()))))
    for s in rt_dofs(mesh):
        psi = RtField.basis(mesh, int(s))
        worst = max(worst, float(np.max(np.abs(project(mesh, psi).values - psi.barycenter_values()))))
    return worst
