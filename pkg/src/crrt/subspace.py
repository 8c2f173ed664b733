"""
Subspaces of coefficient spaces carrying a weighted inner product.

Everything is computed in the whitened coordinates ``q = L^T x`` where
``W = L L^T`` is the Cholesky factorization of the ambient weight, so the
weighted geometry becomes Euclidean and the SVD does the rank decisions.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .operators import OperatorMatrix

RANK_RTOL = 1e-9


class Relation(str, enum.Enum):
    EQUAL = "equal"
    SUBSET = "subset"  # U strictly inside V
    SUPERSET = "superset"  # V strictly inside U
    INCOMPARABLE = "incomparable"


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """W-orthonormal basis (columns of ``basis``) of a subspace."""

    weight: np.ndarray
    basis: np.ndarray

    @property
    def ambient_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def whitened(self) -> np.ndarray:
        return _chol(self.weight).T @ self.basis

    def projector(self) -> np.ndarray:
        """W-orthogonal projector P = B B^T W."""
        return self.basis @ self.basis.T @ self.weight

    def orthonormality_error(self) -> float:
        if self.dim == 0:
            return 0.0
        gram = self.basis.T @ self.weight @ self.basis
        return float(np.max(np.abs(gram - np.eye(self.dim))))

    def contains(self, x: np.ndarray) -> float:
        """Weighted norm of the component of ``x`` outside the subspace."""
        x = np.asarray(x, dtype=float)
        resid = x - self.projector() @ x
        return float(np.sqrt(resid @ self.weight @ resid))


def _chol(weight: np.ndarray) -> np.ndarray:
    if weight.shape[0] == 0:
        return np.zeros((0, 0))
    if np.count_nonzero(weight - np.diag(np.diagonal(weight))) == 0:
        return np.diag(np.sqrt(np.diagonal(weight)))
    return np.linalg.cholesky(weight)


def _from_whitened(weight: np.ndarray, q: np.ndarray) -> SubspaceBasis:
    chol = _chol(weight)
    if q.shape[1] == 0:
        return SubspaceBasis(weight, np.zeros((weight.shape[0], 0)))
    return SubspaceBasis(weight, sla.solve_triangular(chol.T, q, lower=False))


def _rank(s: np.ndarray, rtol: float) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def span(vectors: np.ndarray, weight: np.ndarray, rtol: float = RANK_RTOL) -> SubspaceBasis:
    """Orthonormal basis of the column span of ``vectors``."""
    vectors = np.asarray(vectors, dtype=float).reshape(weight.shape[0], -1)
    a = _chol(weight).T @ vectors
    if a.size == 0:
        return _from_whitened(weight, np.zeros((weight.shape[0], 0)))
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    return _from_whitened(weight, u[:, :_rank(s, rtol)])


def range_of(op: OperatorMatrix, rtol: float = RANK_RTOL) -> SubspaceBasis:
    return span(op.matrix, op.codomain.weight, rtol)


def nullspace(op: OperatorMatrix, rtol: float = RANK_RTOL) -> SubspaceBasis:
    weight = op.domain.weight
    n = weight.shape[0]
    if n == 0:
        return _from_whitened(weight, np.zeros((0, 0)))
    chol = _chol(weight)
    # A x = 0 with x = L^{-T} q
    a = sla.solve_triangular(chol, op.matrix.T, lower=True).T
    if a.shape[0] == 0:
        return _from_whitened(weight, np.eye(n))
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    return _from_whitened(weight, vt[_rank(s, rtol):].T)


def complement(u: SubspaceBasis) -> SubspaceBasis:
    """W-orthogonal complement."""
    n = u.ambient_dim
    if u.dim == 0:
        return _from_whitened(u.weight, np.eye(n))
    q = u.whitened()
    # left singular vectors of I - q q^T with singular value one
    uu, _, _ = np.linalg.svd(np.eye(n) - q @ q.T)
    return _from_whitened(u.weight, uu[:, :n - u.dim])


def image(op: OperatorMatrix, sub: SubspaceBasis, rtol: float = RANK_RTOL) -> SubspaceBasis:
    """Orthonormal basis of op(sub) in the codomain."""
    return span(op.matrix @ sub.basis, op.codomain.weight, rtol)


def projector_distance(u: SubspaceBasis, v: SubspaceBasis) -> float:
    """Operator norm, in the W-norm, of the difference of the projectors."""
    qu, qv = u.whitened(), v.whitened()
    diff = qu @ qu.T - qv @ qv.T
    if diff.size == 0:
        return 0.0
    return float(np.linalg.norm(diff, 2))


def _leak(u: SubspaceBasis, v: SubspaceBasis) -> float:
    """Norm of (I - P_V) restricted to U."""
    if u.dim == 0:
        return 0.0
    qu, qv = u.whitened(), v.whitened()
    return float(np.linalg.norm(qu - qv @ (qv.T @ qu), 2))


def compare(u: SubspaceBasis, v: SubspaceBasis, tol: float = 1e-10) -> tuple[Relation, float]:
    """Decide the inclusion relation of two subspaces and their distance."""
    dist = projector_distance(u, v)
    u_in_v = _leak(u, v) <= tol
    v_in_u = _leak(v, u) <= tol
    if u_in_v and v_in_u:
        rel = Relation.EQUAL
    elif u_in_v:
        rel = Relation.SUBSET
    elif v_in_u:
        rel = Relation.SUPERSET
    else:
        rel = Relation.INCOMPARABLE
    return rel, dist


def principal_cosines(u: SubspaceBasis, v: SubspaceBasis) -> np.ndarray:
    """Cosines of the principal angles, largest first."""
    if u.dim == 0 or v.dim == 0:
        return np.zeros(0)
    return np.linalg.svd(u.whitened().T @ v.whitened(), compute_uv=False)
