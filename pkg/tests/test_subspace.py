import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crrt import mesh as M
from crrt import subspace as sub
from crrt.operators import OperatorMatrix, Space, div_matrix, grad_matrix


def plane(weights=(0.5, 0.5)):
    return np.diag(weights)


def test_zero_matrix():
    sp = Space("R3", np.eye(3))
    op = OperatorMatrix(np.zeros((2, 3)), sp, Space("R2", np.eye(2)))
    assert sub.range_of(op).dim == 0
    assert sub.nullspace(op).dim == 3


def test_grad_range_on_single_dof_mesh():
    assert sub.range_of(grad_matrix(M.generate("square_diag", n=1))).dim == 1


def test_div_rank_nullity_on_simplex():
    op = div_matrix(M.generate("single_simplex"))
    assert (sub.range_of(op).dim, sub.nullspace(op).dim) == (1, 2)


def test_complement_in_weighted_plane():
    w = plane()
    c = sub.complement(sub.span(np.array([[1.0], [1.0]]), w))
    assert c.dim == 1
    v = c.basis[:, 0]
    assert v[0] == pytest.approx(-v[1])
    assert v @ w @ v == pytest.approx(1.0)


def test_complement_extremes():
    w = plane()
    assert sub.complement(sub.span(np.eye(2), w)).dim == 0
    assert sub.complement(sub.span(np.zeros((2, 0)), w)).dim == 2


def test_compare_relations():
    w = plane()
    a = sub.span(np.array([[1.0], [1.0]]), w)
    b = sub.span(np.array([[1.0], [-1.0]]), w)
    rel, dist = sub.compare(a, a)
    assert rel is sub.Relation.EQUAL and dist == pytest.approx(0.0, abs=1e-15)
    rel, dist = sub.compare(a, b)
    assert rel is sub.Relation.INCOMPARABLE and dist == pytest.approx(1.0)
    e1 = sub.span(np.array([[1.0], [0.0]]), w)
    rel, _ = sub.compare(e1, sub.span(np.eye(2), w))
    assert rel is sub.Relation.SUBSET
    rel, _ = sub.compare(sub.span(np.eye(2), w), e1)
    assert rel is sub.Relation.SUPERSET


def test_unequal_weights_change_orthogonality():
    w = plane((1.0, 3.0))
    c = sub.complement(sub.span(np.array([[1.0], [1.0]]), w))
    v = c.basis[:, 0]
    assert np.array([1.0, 1.0]) @ w @ v == pytest.approx(0.0, abs=1e-15)
    assert abs(v[0] + v[1]) > 0.1


def test_image_and_principal_cosines():
    m = M.generate("square_diag", n=2, boundary="left")
    img = sub.image(grad_matrix(m), sub.span(np.eye(grad_matrix(m).shape[1]), grad_matrix(m).domain.weight))
    assert img.dim == sub.range_of(grad_matrix(m)).dim
    cos = sub.principal_cosines(img, sub.range_of(grad_matrix(m)))
    np.testing.assert_allclose(cos, 1.0, atol=1e-12)


@st.composite
def weighted_problem(draw):
    n = draw(st.integers(2, 7))
    k = draw(st.integers(0, n))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    weight = a @ a.T + n * np.eye(n)
    return weight, rng.standard_normal((n, k))


@settings(max_examples=50, deadline=None)
@given(weighted_problem())
def test_orthonormal_and_complementary(problem):
    weight, vectors = problem
    u = sub.span(vectors, weight)
    c = sub.complement(u)
    assert u.dim + c.dim == weight.shape[0]
    assert u.orthonormality_error() <= 1e-10
    assert c.orthonormality_error() <= 1e-10
    assert np.max(np.abs(u.basis.T @ weight @ c.basis), initial=0.0) <= 1e-10
    # projector is W-self-adjoint and idempotent
    p = u.projector()
    np.testing.assert_allclose(p @ p, p, atol=1e-10)
    np.testing.assert_allclose(weight @ p, (weight @ p).T, atol=1e-9)
    rel, dist = sub.compare(sub.complement(c), u)
    assert rel is sub.Relation.EQUAL and dist <= 1e-10


@settings(max_examples=30, deadline=None)
@given(weighted_problem())
def test_contains_own_vectors(problem):
    weight, vectors = problem
    u = sub.span(vectors, weight)
    for v in vectors.T:
        assert u.contains(v) <= 1e-9 * (1 + np.linalg.norm(v))
