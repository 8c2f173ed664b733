import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crrt import duality as D
from crrt import mesh as M
from crrt.errors import AssertionFailed, SingularSystem
from crrt.spaces import CrFunction, RtField, cr_dofs, rt_dofs


def smooth_data(mesh, noise=0.0, seed=0):
    x = mesh.barycenters
    g = np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
    return g + noise * np.random.default_rng(seed).standard_normal(mesh.n_elements)


# --- integrands ---------------------------------------------------------------

vectors = st.lists(st.floats(-5, 5), min_size=2, max_size=2).map(np.array)


@settings(max_examples=100, deadline=None)
@given(vectors, vectors, st.sampled_from([0.5, 0.1, 0.02]))
def test_huber_fenchel_young(s, y, eps):
    phi = D.Huber(eps)
    s, y = s[None, :], y[None, :]
    gap = phi.value(s) + phi.conjugate(y) - np.sum(s * y, axis=1)
    assert gap[0] >= -1e-12
    y_opt = phi.gradient(s)
    eq = phi.value(s) + phi.conjugate(y_opt) - np.sum(s * y_opt, axis=1)
    assert abs(eq[0]) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(vectors, vectors)
def test_quadratic_fenchel_young(s, y):
    phi = D.Quadratic()
    s, y = s[None, :], y[None, :]
    assert (phi.value(s) + phi.conjugate(y) - np.sum(s * y))[0] >= -1e-12


def test_huber_is_c1_at_the_kink():
    phi = D.Huber(0.1)
    inside = np.array([[0.1 - 1e-9, 0.0]])
    outside = np.array([[0.1 + 1e-9, 0.0]])
    assert phi.value(inside)[0] == pytest.approx(phi.value(outside)[0], abs=1e-8)
    np.testing.assert_allclose(phi.gradient(inside), phi.gradient(outside), atol=1e-7)
    assert phi.value(np.array([[3.0, 4.0]]))[0] == pytest.approx(5.0 - 0.05)
    assert phi.value(np.array([[0.03, 0.04]]))[0] == pytest.approx(0.05**2 / 0.2)


def test_huber_conjugate_domain():
    phi = D.Huber(0.1)
    assert np.isinf(phi.conjugate(np.array([[1.5, 0.0]]))[0])
    assert phi.conjugate(np.array([[0.6, 0.8]]))[0] == pytest.approx(0.05)


def test_no_zero_order_conjugate():
    psi = D.NoZeroOrder()
    assert psi.conjugate(np.array([0.0]))[0] == 0.0
    assert np.isinf(psi.conjugate(np.array([0.1]))[0])


# --- energies -----------------------------------------------------------------

def test_energy_examples():
    m = M.generate("single_simplex", boundary="all-N")
    assert D.primal_energy(CrFunction.zero(m), D.Quadratic(), D.QuadraticFidelity(1.0, [0.0])) == 0.0
    (s,) = [s for s in range(3) if 0 not in m.side_vertices[s]]
    u = CrFunction.basis(m, s)
    assert D.primal_energy(u, D.Quadratic(), D.NoZeroOrder()) == pytest.approx(2.0)


def test_dual_energy_infeasible_for_huber():
    m = M.generate("single_simplex")
    z = RtField(m, np.array([10.0, 0.0, 0.0]))
    assert D.dual_energy(z, D.Huber(0.1), D.QuadraticFidelity(1.0, [0.0])) == -np.inf


# --- solver -------------------------------------------------------------------

def test_quadratic_needs_one_step():
    m = M.generate("square_diag", n=2)
    psi = D.QuadraticFidelity(1.0, np.random.default_rng(0).standard_normal(m.n_elements))
    sol = D.solve_primal(m, D.Quadratic(), psi)
    assert sol.iterations == 1
    assert sol.residual <= 1e-12


def test_huber_converges():
    m = M.generate("square_diag", n=2)
    psi = D.QuadraticFidelity(1.0, np.random.default_rng(0).standard_normal(m.n_elements))
    sol = D.solve_primal(m, D.Huber(0.1), psi)
    assert sol.residual <= 1e-9
    assert sol.iterations <= 50


def test_singular_without_dirichlet_or_fidelity():
    m = M.generate("square_diag", n=2, boundary="all-N")
    with pytest.raises(SingularSystem):
        D.solve_primal(m, D.Quadratic(), D.NoZeroOrder())


def test_empty_cr_space():
    m = M.generate("single_simplex")
    rep, u, _ = D.duality_report(m, D.Quadratic(), D.QuadraticFidelity(1.0, [0.3]))
    assert u.coefficients.size == 0
    assert rep.primal == pytest.approx(0.5 * 0.5 * 0.09)
    assert rep.relative_gap == 0.0


def test_strong_duality_quadratic():
    m = M.generate("square_diag", n=2)
    psi = D.QuadraticFidelity(1.0, np.random.default_rng(2).standard_normal(m.n_elements))
    rep, u, z = D.duality_report(m, D.Quadratic(), psi)
    assert rep.relative_gap <= 1e-10
    # z matches the optimality conditions elementwise
    np.testing.assert_allclose(z.barycenter_values(), u.element_gradients(), atol=1e-12)
    np.testing.assert_allclose(z.divergence(), psi.derivative(u.barycenter_values()), atol=1e-10)


@pytest.mark.parametrize("eps", [0.5, 0.1, 0.02])
@pytest.mark.parametrize("alpha", [10.0, 100.0])
def test_strong_duality_huber(eps, alpha):
    m = M.generate("square_diag", n=4, diagonal="crisscross", boundary="bottom")
    psi = D.QuadraticFidelity(alpha, smooth_data(m, 0.1))
    rep, u, z = D.duality_report(m, D.Huber(eps), psi)
    assert rep.relative_gap <= 1e-7
    assert max(rep.fenchel_gradient, rep.fenchel_zero_order, rep.membership) <= 1e-9
    # the nonsmooth branch is active somewhere
    assert np.max(np.linalg.norm(u.element_gradients(), axis=1)) > eps


def test_perturbed_solution_is_rejected():
    m = M.generate("square_diag", n=2)
    psi = D.QuadraticFidelity(1.0, smooth_data(m))
    sol = D.solve_primal(m, D.Quadratic(), psi)
    bumped = CrFunction(m, sol.u.coefficients + 0.1 * np.arange(cr_dofs(m).size))
    with pytest.raises(AssertionFailed):
        D.postprocess_dual(bumped, D.Quadratic(), psi)


def test_no_zero_order_gives_constant_dual():
    m = M.generate("square_diag", n=2)
    rep, u, z = D.duality_report(m, D.Huber(0.1), D.NoZeroOrder())
    _, b = z.elementwise()
    assert np.all(b == 0.0)
    assert rep.relative_gap == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_weak_duality(seed):
    m = M.generate("two_triangles", boundary="bottom")
    rng = np.random.default_rng(seed)
    phi, psi = D.Huber(0.1), D.QuadraticFidelity(10.0, rng.standard_normal(m.n_elements))
    u = CrFunction(m, rng.standard_normal(cr_dofs(m).size))
    z = RtField(m, rng.standard_normal(rt_dofs(m).size))
    scale = np.max(np.linalg.norm(z.barycenter_values(), axis=1))
    z = RtField(m, z.coefficients / max(scale, 1.0))
    assert D.primal_energy(u, phi, psi) >= D.dual_energy(z, phi, psi) - 1e-10


@pytest.mark.parametrize("eps", [0.1, 0.02])
def test_singular_huber_hessian(eps):
    # both elements sit in the linear branch; the Hessian has a null direction
    m = M.generate("two_triangles", boundary="all-N")
    psi = D.QuadraticFidelity(100.0, smooth_data(m, 0.1))
    rep, _, _ = D.duality_report(m, D.Huber(eps), psi)
    assert rep.relative_gap <= 1e-7
    assert rep.membership <= 1e-12


def test_relative_gap_with_vanishing_optimum():
    m = M.generate("single_simplex", boundary="all-N")
    rep, _, _ = D.duality_report(m, D.Quadratic(), D.QuadraticFidelity(1.0, [0.7]))
    assert abs(rep.primal) <= 1e-14
    assert rep.relative_gap <= 1e-12
    assert D.relative_gap(1.0, 1.0 - 1e-3) == pytest.approx(1e-3)
    assert D.relative_gap(1e-16, -1e-16, 0.5) == pytest.approx(4e-16)
