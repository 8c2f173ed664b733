import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crrt import mesh as M
from crrt import ortho as O
from crrt import subspace as sub
from crrt.errors import PreconditionViolated
from crrt.operators import proj_cr, proj_rt
from crrt.spaces import CrFunction, rt_dofs

CONFIGS = [
    ("single_simplex", {}, "all-D"),
    ("single_simplex", dict(dim=3), "all-N"),
    ("square_diag", dict(n=1), "all-D"),
    ("square_diag", dict(n=2, diagonal="crisscross"), "bottom"),
    ("square_diag", dict(n=2, diagonal="left"), "bottom,top"),
    ("bary3", {}, "all-D"),
    ("two_triangles", {}, "all-N"),
    ("cube6", dict(n=1), "x0,x1"),
]


@pytest.mark.parametrize("kind, params, boundary", CONFIGS)
def test_suite_passes(kind, params, boundary):
    report = O.run_suite(M.generate(kind, boundary=boundary, **params))
    assert report.passed, report.to_dict()
    assert report.dimensions["consistent"]


def test_identity_a_square_all_dirichlet():
    m = M.generate("square_diag", n=1)
    entry = O.verify_identity_a(m)
    assert (entry.lhs_dim, entry.rhs_dim) == (0, 0)
    assert O.projected_rt(m).dim == 4
    assert O.rt_projection_kernel(m).dim == 1


def test_identity_a_single_simplex():
    m = M.generate("single_simplex")
    assert O.projected_rt(m).dim == 2
    assert O.verify_identity_a(m).verdict == "pass"


def test_identity_b_square_is_antisymmetric_pair():
    m = M.generate("square_diag", n=1)
    entry = O.verify_identity_b(m)
    assert entry.verdict == "pass" and entry.lhs_dim == 1
    img = sub.image(O.div_matrix(m), O.rt_projection_kernel(m))
    v = img.basis[:, 0]
    assert v[0] == pytest.approx(-v[1])


def test_identity_b_trivial_with_neumann_part():
    m = M.generate("square_diag", n=2, boundary="left")
    entry = O.verify_identity_b(m)
    assert entry.verdict == "pass" and entry.lhs_dim == entry.rhs_dim == 0


@pytest.mark.parametrize(
    "kind, params, boundary, codim",
    [
        ("single_simplex", {}, "all-D", 1),
        ("square_diag", dict(n=1), "all-D", 1),
        ("bary3", {}, "all-D", 0),
        ("two_triangles", {}, "all-D", 1),
        ("square_diag", dict(n=2), "bottom", 0),
        ("cube6", dict(n=1), "all-N", 0),
    ],
)
def test_codimension(kind, params, boundary, codim):
    result = O.surjectivity_report(M.generate(kind, boundary=boundary, **params))
    assert result.codimension == codim
    assert result.verdict == "pass"


def test_decomposition_ledgers():
    d = O.verify_decomposition(M.generate("square_diag", n=1)).details
    assert (d["dim_gradients"], d["dim_divfree"]) == (1, 3)
    d = O.verify_decomposition(M.generate("single_simplex")).details
    assert (d["dim_gradients"], d["dim_divfree"]) == (0, 2)
    m = M.generate("square_diag", n=2, boundary="all-N")
    d = O.verify_decomposition(m).details
    assert d["dim_gradients"] + d["dim_divfree"] == 2 * m.n_elements


def test_report_serializes():
    rep = O.run_suite(M.generate("bary3")).to_dict()
    assert rep["codimension"] == 0
    assert {e["name"] for e in rep["entries"]} == {"identity_a", "identity_b", "decomposition", "surjectivity"}


# --- lifts --------------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lift_round_trip(seed):
    m = M.generate("square_diag", n=2, diagonal="crisscross", boundary="left")
    rng = np.random.default_rng(seed)
    y = proj_rt(m) @ rng.standard_normal(rt_dofs(m).size)
    lifted = O.lift_to_rt(m, y)
    np.testing.assert_allclose(lifted.barycenter_values().reshape(-1), y, atol=1e-12)


def test_lift_zero():
    m = M.generate("bary3")
    assert not np.any(O.lift_to_rt(m, np.zeros(6)).coefficients)


def test_lift_rejects_kernel_gradient():
    m = M.generate("square_diag", n=2, diagonal="crisscross", boundary="all-N")
    ker = O.cr_projection_kernel(m)
    v = CrFunction(m, ker.basis[:, 0])
    np.testing.assert_allclose(proj_cr(m) @ v.coefficients, 0.0, atol=1e-12)
    with pytest.raises(PreconditionViolated):
        O.lift_to_rt(m, v.element_gradients())


def test_divfree_preimage_square():
    m = M.generate("square_diag", n=1)
    w = np.array([1.0, -1.0])
    y = O.divfree_preimage(m, w)
    assert np.all(y.barycenter_values() == 0.0)
    np.testing.assert_allclose(y.divergence(), w, atol=1e-12)
    assert not np.any(O.divfree_preimage(m, np.zeros(2)).coefficients)


def test_divfree_preimage_requires_orthogonality():
    m = M.generate("square_diag", n=2, boundary="bottom")
    with pytest.raises(PreconditionViolated):
        O.divfree_preimage(m, np.ones(m.n_elements))
    m = M.generate("square_diag", n=1)
    with pytest.raises(PreconditionViolated):
        O.divfree_preimage(m, np.ones(2))
