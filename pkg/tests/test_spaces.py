import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crrt import mesh as M
from crrt.errors import AssertionFailed, InvalidIndex, PointOutsideElement, QuadratureUnavailable
from crrt.quadrature import simplex_rule
from crrt.spaces import (
    CrFunction,
    InterpolationWarning,
    RtField,
    cr_dofs,
    cr_mass,
    eval_cr,
    eval_rt,
    interpolate_cr,
    interpolate_rt,
    rt_dofs,
    rt_from_elementwise,
    rt_mass,
)
from crrt.structure import kronecker_defect_cr, kronecker_defect_rt

SQRT2 = np.sqrt(2.0)


@pytest.fixture
def tri():
    return M.generate("single_simplex", boundary="all-N")


def hyp_side(mesh):
    # side opposite the origin
    (s,) = [s for s in range(mesh.n_sides) if 0 not in mesh.side_vertices[s]]
    return s


# --- quadrature ---------------------------------------------------------------

@pytest.mark.parametrize("k", [1, 2, 3])
def test_rules_integrate_quadratics(k):
    rule = simplex_rule(k, 2)
    assert rule.weights.sum() == pytest.approx(1.0)
    verts = np.vstack([np.zeros(k), np.eye(k)])
    pts = rule.physical_points(verts)
    # integral of x_0^a x_1^b over the reference simplex, times k!
    for exps in itertools.product(range(3), repeat=k):
        if sum(exps) > 2:
            continue
        exact = np.prod([float(math.factorial(e)) for e in exps]) * math.factorial(k)
        exact /= math.factorial(k + sum(exps))
        approx = rule.weights @ np.prod(pts**np.array(exps), axis=1)
        assert approx == pytest.approx(exact, abs=1e-14)


def test_unavailable_degree():
    with pytest.raises(QuadratureUnavailable):
        simplex_rule(2, 5)


# --- Crouzeix-Raviart ----------------------------------------------------------

def test_cr_hypotenuse_basis(tri):
    s = hyp_side(tri)
    phi = CrFunction.basis(tri, s)
    assert eval_cr(phi, 0, [0.5, 0.5]) == pytest.approx(1.0)
    assert eval_cr(phi, 0, [0.2, 0.3]) == pytest.approx(2 * 0.2 + 2 * 0.3 - 1)
    assert phi.barycenter_values()[0] == pytest.approx(1 / 3)
    np.testing.assert_allclose(phi.element_gradients()[0], [2.0, 2.0])
    for other in range(3):
        if other != s:
            assert eval_cr(phi, 0, tri.side_midpoints[other]) == pytest.approx(0.0, abs=1e-15)


def test_constrained_side_has_no_basis_function(tri):
    with pytest.raises(InvalidIndex):
        RtField.basis(tri, 0)


def test_point_outside_element(tri):
    with pytest.raises(PointOutsideElement):
        eval_cr(CrFunction.zero(tri), 0, [1.0, 1.0])


def test_cr_constant_has_zero_gradient():
    m = M.generate("square_diag", n=2, diagonal="crisscross", boundary="all-N")
    v = CrFunction(m, np.ones(cr_dofs(m).size))
    np.testing.assert_allclose(v.element_gradients(), 0.0, atol=1e-14)


def test_cr_dirichlet_sides_eliminated():
    m = M.generate("square_diag", n=2, boundary="left")
    assert cr_dofs(m).size == m.n_sides - 2
    v = CrFunction(m, np.arange(cr_dofs(m).size, dtype=float))
    assert np.all(v.side_values()[m.dirichlet_sides] == 0.0)


def test_cr_interpolation_side_average(tri):
    v = interpolate_cr(tri, lambda x: x[:, 0] ** 2)
    s = hyp_side(tri)
    assert v.side_values()[s] == pytest.approx(1 / 3)


def test_cr_interpolation_reproduces_affine():
    m = M.generate("cube6", n=1, boundary="all-N")
    v = interpolate_cr(m, lambda x: 1 + 2 * x[:, 0] - x[:, 1] + 3 * x[:, 2])
    for t in range(m.n_elements):
        pts = m.vertices[m.cells[t]]
        np.testing.assert_allclose(v.values(t, pts), 1 + pts @ [2, -1, 3], atol=1e-13)


@pytest.mark.parametrize("kind, params", [("bary3", {}), ("cube6", dict(n=1)), ("square_diag", dict(n=2))])
def test_kronecker_properties(kind, params):
    m = M.generate(kind, boundary="bottom" if kind != "bary3" else "hyp", **params)
    assert kronecker_defect_cr(m) <= 1e-13
    assert kronecker_defect_rt(m) <= 1e-13


# --- Raviart-Thomas -----------------------------------------------------------

def test_rt_hypotenuse_basis():
    tri = M.generate("single_simplex", boundary="all-D")
    s = hyp_side(tri)
    psi = RtField.basis(tri, s)
    x = np.array([0.3, 0.4])
    np.testing.assert_allclose(eval_rt(psi, 0, x), SQRT2 * x, atol=1e-15)
    np.testing.assert_allclose(psi.side_fluxes(), np.eye(3)[s])
    assert psi.divergence()[0] == pytest.approx(2 * SQRT2)
    assert tri.volumes[0] * psi.divergence()[0] == pytest.approx(tri.side_areas[s])
    np.testing.assert_allclose(psi.barycenter_values()[0], SQRT2 * np.array([1 / 3, 1 / 3]))


def test_rt_normal_trace_continuous():
    m = M.generate("square_diag", n=2, diagonal="crisscross", boundary="left")
    rng = np.random.default_rng(3)
    y = RtField(m, rng.standard_normal(rt_dofs(m).size))
    for s in m.interior_sides:
        n = m.side_normals[s]
        tm, tp = m.side_elements[s]
        ends = m.vertices[m.side_vertices[s]]
        np.testing.assert_allclose(y.values(tm, ends) @ n, y.values(tp, ends) @ n, atol=1e-13)


def test_rt_interpolation_reproduces_constants():
    m = M.generate("two_triangles")
    y = interpolate_rt(m, lambda x: np.tile([0.7, -1.3], (len(x), 1)))
    a, b = y.elementwise()
    np.testing.assert_allclose(a, [[0.7, -1.3]] * 2, atol=1e-14)
    np.testing.assert_allclose(b, 0.0, atol=1e-14)


def test_rt_interpolation_commutes_with_divergence():
    m = M.generate("square_diag", n=1)
    y = interpolate_rt(m, lambda x: np.column_stack([x[:, 0] ** 2, 0 * x[:, 0]]))
    # element average of 2x
    expected = 2 * m.barycenters[:, 0]
    np.testing.assert_allclose(y.divergence(), expected, atol=1e-14)


def test_rt_interpolation_neumann_warning():
    m = M.generate("single_simplex", boundary="all-N")
    with pytest.warns(InterpolationWarning):
        y = interpolate_rt(m, lambda x: np.tile([1.0, 0.0], (len(x), 1)))
    assert y.coefficients.size == 0


def test_rt_from_elementwise_rejects_jumps():
    m = M.generate("square_diag", n=1)
    with pytest.raises(AssertionFailed):
        rt_from_elementwise(m, [[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0])


def test_rt_from_elementwise_keeps_local_form():
    m = M.generate("square_diag", n=2)
    rng = np.random.default_rng(5)
    y = RtField(m, rng.standard_normal(rt_dofs(m).size))
    a, b = y.elementwise()
    z = rt_from_elementwise(m, a, b)
    np.testing.assert_allclose(z.coefficients, y.coefficients, atol=1e-13)
    assert np.array_equal(z.barycenter_values(), a)


# --- mass matrices ------------------------------------------------------------

def test_mass_matrices_against_quadrature():
    m = M.generate("two_triangles", boundary="all-N")
    rule = simplex_rule(2, 2)
    n = cr_dofs(m).size
    gram = np.zeros((n, n))
    for i, j in itertools.product(range(n), repeat=2):
        fi, fj = CrFunction(m, np.eye(n)[i]), CrFunction(m, np.eye(n)[j])
        for t in range(m.n_elements):
            pts = rule.physical_points(m.vertices[m.cells[t]])
            gram[i, j] += m.volumes[t] * rule.weights @ (fi.values(t, pts) * fj.values(t, pts))
    np.testing.assert_allclose(cr_mass(m), gram, atol=1e-15)
    assert np.all(np.linalg.eigvalsh(rt_mass(M.generate("two_triangles"))) > 0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=5, max_size=5))
def test_rt_divergence_theorem(coeffs):
    m = M.generate("square_diag", n=1, boundary="all-D")
    y = RtField(m, np.array(coeffs))
    total = m.volumes @ y.divergence()
    bnd = m.boundary_sides
    assert total == pytest.approx(np.sum(m.side_areas[bnd] * y.side_fluxes()[bnd]), abs=1e-12)


def test_interpolation_of_gradient_field_warns_only_on_neumann():
    m = M.generate("square_diag", n=2, boundary="all-D")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        interpolate_rt(m, lambda x: np.column_stack([x[:, 1], x[:, 0]]))
