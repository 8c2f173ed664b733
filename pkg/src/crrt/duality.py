"""
Discrete primal and dual convex problems and their duality gap.

The primal energy on CR_D is

    I_h(u) = sum_T |T| ( phi(grad_h u|_T) + psi_T(Pi_h u|_T) )

and the dual energy on RT_N is

    D_h(z) = -sum_T |T| ( phi*(Pi_h z|_T) + psi_T*(div z|_T) ).

The primal problem is solved by a damped Newton method; a dual maximizer
is then obtained elementwise from the primal solution by
:func:`postprocess_dual`, without solving the dual problem.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .errors import NoConvergence, SingularSystem
from .mesh import Triangulation
from .operators import grad_matrix, proj_cr
from .spaces import CrFunction, RtField, membership_residual, rt_from_elementwise

DOMAIN_TOL = 1e-9


# --- integrands -------------------------------------------------------------

class ConvexIntegrand:
    """Convex function of the elementwise gradient, vectorized over elements.

    Arguments ``s`` and ``y`` are arrays of shape (nT, d).
    """

    name = "abstract"
    params: dict = {}

    def value(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def conjugate(self, y: np.ndarray) -> np.ndarray:
        """Convex conjugate, +inf outside the effective domain."""
        raise NotImplementedError


class Quadratic(ConvexIntegrand):
    name = "quadratic"

    def __init__(self):
        self.params = {}

    def value(self, s):
        return 0.5 * np.sum(s**2, axis=-1)

    def gradient(self, s):
        return np.array(s, dtype=float)

    def hessian(self, s):
        n, d = s.shape
        return np.broadcast_to(np.eye(d), (n, d, d)).copy()

    def conjugate(self, y):
        return 0.5 * np.sum(y**2, axis=-1)


class Huber(ConvexIntegrand):
    """C^1 regularization of the Euclidean norm.

    phi(s) = |s|^2 / (2 eps) for |s| <= eps and |s| - eps/2 otherwise, with
    conjugate eps |y|^2 / 2 on the closed unit ball.
    """

    name = "huber"

    def __init__(self, eps: float):
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.eps = float(eps)
        self.params = {"eps": self.eps}

    def value(self, s):
        r = np.linalg.norm(s, axis=-1)
        return np.where(r <= self.eps, r**2 / (2 * self.eps), r - self.eps / 2)

    def gradient(self, s):
        r = np.linalg.norm(s, axis=-1, keepdims=True)
        return np.where(r <= self.eps, s / self.eps, s / np.maximum(r, self.eps))

    def hessian(self, s):
        n, d = s.shape
        r = np.linalg.norm(s, axis=-1)
        eye = np.eye(d)
        out = np.empty((n, d, d))
        inner = r <= self.eps  # the kink uses the quadratic branch
        out[inner] = eye / self.eps
        outer = ~inner
        if np.any(outer):
            sh = s[outer] / r[outer, None]
            out[outer] = (eye - sh[:, :, None] * sh[:, None, :]) / r[outer, None, None]
        return out

    def conjugate(self, y):
        r = np.linalg.norm(y, axis=-1)
        return np.where(r <= 1.0 + DOMAIN_TOL, 0.5 * self.eps * r**2, np.inf)


class ZeroOrderTerm:
    """Elementwise convex function psi_T(v) of the elementwise average."""

    name = "abstract"
    params: dict = {}
    strongly_convex = False

    def value(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def second_derivative(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def conjugate(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class QuadraticFidelity(ZeroOrderTerm):
    """psi_T(v) = alpha/2 (v - g_T)^2."""

    name = "quadratic"
    strongly_convex = True

    def __init__(self, alpha: float, g):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.alpha = float(alpha)
        self.g = np.asarray(g, dtype=float)
        self.params = {"alpha": self.alpha}

    def value(self, v):
        return 0.5 * self.alpha * (v - self.g) ** 2

    def derivative(self, v):
        return self.alpha * (v - self.g)

    def second_derivative(self, v):
        return np.full_like(np.asarray(v, dtype=float), self.alpha)

    def conjugate(self, w):
        return w**2 / (2 * self.alpha) + self.g * w


class NoZeroOrder(ZeroOrderTerm):
    """psi = 0, whose conjugate is the indicator of {0}."""

    name = "none"

    def __init__(self):
        self.params = {}

    def value(self, v):
        return np.zeros_like(np.asarray(v, dtype=float))

    def derivative(self, v):
        return np.zeros_like(np.asarray(v, dtype=float))

    def second_derivative(self, v):
        return np.zeros_like(np.asarray(v, dtype=float))

    def conjugate(self, w):
        w = np.asarray(w, dtype=float)
        return np.where(np.abs(w) <= DOMAIN_TOL, 0.0, np.inf)


# --- energies ---------------------------------------------------------------

def primal_energy(u: CrFunction, phi: ConvexIntegrand, psi: ZeroOrderTerm) -> float:
    mesh = u.mesh
    vals = phi.value(u.element_gradients()) + psi.value(u.barycenter_values())
    return float(mesh.volumes @ vals)


def dual_energy(z: RtField, phi: ConvexIntegrand, psi: ZeroOrderTerm) -> float:
    """Dual energy; ``-inf`` outside the effective domain."""
    mesh = z.mesh
    vals = phi.conjugate(z.barycenter_values()) + psi.conjugate(z.divergence())
    if not np.all(np.isfinite(vals)):
        return -np.inf
    return -float(mesh.volumes @ vals)


# --- primal solver ----------------------------------------------------------

@dataclass
class NewtonParams:
    tol: float = 1e-11
    max_iter: int = 100
    armijo: float = 1e-4
    backtrack: float = 0.5
    min_step: float = 1e-12
    # Huber only: solve a sequence eps * factor^k, k = stages-1..0, warm-started
    continuation_factor: float = 4.0
    continuation_stages: int = 4


@dataclass
class PrimalSolution:
    u: CrFunction
    iterations: int
    residual: float
    history: list[float] = field(default_factory=list)


class _Problem:
    def __init__(self, mesh: Triangulation, phi: ConvexIntegrand, psi: ZeroOrderTerm):
        self.mesh, self.phi, self.psi = mesh, phi, psi
        self.d = mesh.dim
        self.grad = grad_matrix(mesh).matrix
        self.proj = proj_cr(mesh).matrix
        self.vol = mesh.volumes
        wd = np.repeat(self.vol, self.d)
        metric = self.grad.T @ (wd[:, None] * self.grad) + self.proj.T @ (self.vol[:, None] * self.proj)
        self.metric_matrix = metric
        self.metric = sla.cho_factor(metric)

    def split(self, c):
        return (self.grad @ c).reshape(-1, self.d), self.proj @ c

    def energy(self, c):
        s, v = self.split(c)
        return float(self.vol @ (self.phi.value(s) + self.psi.value(v)))

    def residual(self, c):
        s, v = self.split(c)
        gs = (self.vol[:, None] * self.phi.gradient(s)).reshape(-1)
        return self.grad.T @ gs + self.proj.T @ (self.vol * self.psi.derivative(v))

    def hessian(self, c):
        s, v = self.split(c)
        n = self.vol.size
        blocks = self.vol[:, None, None] * self.phi.hessian(s)
        hs = np.zeros((self.d * n, self.d * n))
        for t in range(n):
            hs[self.d * t:self.d * t + self.d, self.d * t:self.d * t + self.d] = blocks[t]
        hv = self.vol * self.psi.second_derivative(v)
        return self.grad.T @ hs @ self.grad + self.proj.T @ (hv[:, None] * self.proj)

    def dual_norm(self, f):
        return float(np.sqrt(max(f @ sla.cho_solve(self.metric, f), 0.0)))


def _line_search(prob: _Problem, c, step, slope, params: NewtonParams) -> float | None:
    e0 = prob.energy(c)
    slack = 1e-14 * (1.0 + abs(e0))
    t = 1.0
    while prob.energy(c + t * step) > e0 + params.armijo * t * slope + slack:
        t *= params.backtrack
        if t < params.min_step:
            return None
    return t


def _newton(prob: _Problem, c: np.ndarray, params: NewtonParams, history: list[float]) -> tuple[np.ndarray, int]:
    for it in range(params.max_iter + 1):
        f = prob.residual(c)
        res = prob.dual_norm(f)
        history.append(res)
        if res <= params.tol:
            return c, it
        if it == params.max_iter:
            break
        hess = prob.hessian(c)
        # plain Newton, then a Levenberg-Marquardt shift for (nearly) singular
        # Hessians, then the preconditioned gradient
        for shift in (0.0, max(res, 1e-10), None):
            mat = prob.metric_matrix if shift is None else hess + shift * prob.metric_matrix
            try:
                step = -sla.cho_solve(sla.cho_factor(mat), f)
            except np.linalg.LinAlgError:
                continue
            slope = float(f @ step)
            if slope >= 0:
                continue
            t = _line_search(prob, c, step, slope, params)
            if t is not None:
                c = c + t * step
                break
        else:
            raise NoConvergence(f"line search failed at iteration {it} (residual {res:.3e})")
    raise NoConvergence(f"no convergence in {params.max_iter} iterations (residual {history[-1]:.3e})")


def solve_primal(
    mesh: Triangulation,
    phi: ConvexIntegrand,
    psi: ZeroOrderTerm,
    params: NewtonParams | None = None,
    initial: CrFunction | None = None,
) -> PrimalSolution:
    """Minimize I_h over CR_D with a damped Newton method.

    The residual is the optimality system measured in the dual norm of the
    broken H1 metric ``|grad_h v|^2 + |Pi_h v|^2``.  Where the Hessian is not
    positive definite the step falls back to the preconditioned gradient.
    For :class:`Huber` the regularization parameter is reduced in stages,
    each warm-started from the previous one; only the final stage is solved
    to ``params.tol``.  ``iterations`` counts Newton steps over all stages.
    """
    params = params or NewtonParams()
    if not psi.strongly_convex and mesh.dirichlet_sides.size == 0:
        raise SingularSystem("constants are in the kernel: psi is not strongly convex and there is no Dirichlet boundary")
    c = np.zeros(proj_cr(mesh).shape[1]) if initial is None else initial.coefficients.copy()
    stages = [phi]
    if isinstance(phi, Huber) and initial is None:
        stages = [Huber(phi.eps * params.continuation_factor**k) for k in range(params.continuation_stages - 1, 0, -1)]
        stages.append(phi)
    history: list[float] = []
    total = 0
    for k, stage in enumerate(stages):
        last = k == len(stages) - 1
        stage_params = params if last else replace(params, tol=max(params.tol, 1e-6))
        c, its = _newton(_Problem(mesh, stage, psi), c, stage_params, history)
        total += its
    return PrimalSolution(CrFunction(mesh, c), total, history[-1], history)


# --- dual recovery ----------------------------------------------------------

def postprocess_dual(
    u: CrFunction, phi: ConvexIntegrand, psi: ZeroOrderTerm, tol: float = 1e-9
) -> RtField:
    """Dual field z|_T = phi'(grad u) + psi'(Pi u) (x - x_T) / d.

    Raises :class:`AssertionFailed` if z is not in RT_N, which means u was
    not optimal to sufficient accuracy.
    """
    mesh = u.mesh
    a = phi.gradient(u.element_gradients())
    b = psi.derivative(u.barycenter_values()) / mesh.dim
    return rt_from_elementwise(mesh, a, b, tol=tol)


@dataclass
class DualityReport:
    primal: float
    dual: float
    gap: float
    relative_gap: float
    fenchel_gradient: float
    fenchel_zero_order: float
    membership: float
    iterations: int
    newton_residual: float
    phi: str
    psi: str
    params: dict

    def to_dict(self) -> dict:
        return asdict(self)


def fenchel_residuals(u: CrFunction, z: RtField, phi: ConvexIntegrand, psi: ZeroOrderTerm) -> tuple[float, float]:
    """Largest elementwise defects in the two Fenchel equalities."""
    s = u.element_gradients()
    pz = z.barycenter_values()
    v = u.barycenter_values()
    w = z.divergence()
    r1 = np.abs(np.sum(s * pz, axis=1) - phi.value(s) - phi.conjugate(pz))
    r2 = np.abs(v * w - psi.value(v) - psi.conjugate(w))
    return float(np.max(r1)), float(np.max(r2))


def relative_gap(primal: float, dual: float, reference: float = 0.0) -> float:
    """Gap relative to ``max(|primal|, |dual|, |reference|)``.

    ``reference`` guards against optima with (numerically) zero energy; the
    report passes the energy of the zero function.
    """
    scale = max(abs(primal), abs(dual), abs(reference))
    return 0.0 if scale == 0.0 else abs(primal - dual) / scale


def duality_report(
    mesh: Triangulation,
    phi: ConvexIntegrand,
    psi: ZeroOrderTerm,
    params: NewtonParams | None = None,
) -> tuple[DualityReport, CrFunction, RtField]:
    sol = solve_primal(mesh, phi, psi, params)
    z = postprocess_dual(sol.u, phi, psi)
    primal = primal_energy(sol.u, phi, psi)
    dual = dual_energy(z, phi, psi)
    f1, f2 = fenchel_residuals(sol.u, z, phi, psi)
    report = DualityReport(
        primal=primal,
        dual=dual,
        gap=primal - dual,
        relative_gap=relative_gap(primal, dual, primal_energy(CrFunction.zero(mesh), phi, psi)),
        fenchel_gradient=f1,
        fenchel_zero_order=f2,
        membership=membership_residual(mesh, *z.local),
        iterations=sol.iterations,
        newton_residual=sol.residual,
        phi=phi.name,
        psi=psi.name,
        params={**phi.params, **psi.params},
    )
    return report, sol.u, z
