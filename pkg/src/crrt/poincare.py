"""
Discrete Poincare lemma: potentials of elementwise constant fields.

A field w in L0^d that is orthogonal to all divergence-free RT_N fields
is the elementwise gradient of a CR_D function, provided Gamma_D is empty
or d = 2 and Gamma_D is connected.  The potential is built by summing
w|_T . (x_S' - x_S) along a spanning tree of the side graph (sides are
adjacent when they share an element).  Closed element chains carry
divergence-free fields whose pairing with w is exactly the sum around the
chain, which is why the construction is consistent.
"""
from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np

from . import subspace as sub
from .errors import (
    AssertionFailed,
    CycleInconsistent,
    InvalidChain,
    PreconditionViolated,
    UnsupportedBoundary,
)
from .mesh import Triangulation, element_adjacency
from .operators import div_matrix, proj_rt
from .ortho import CheckEntry, kernel_gradients, projected_rt, verify_identity_a
from .spaces import (
    CrFunction,
    RtField,
    _local_from_fluxes,
    barycentric_gradients,
    cr_dofs,
    rt_dofs,
    rt_from_elementwise,
)

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class ElementChain:
    """Elements T_1..T_J with sides S_0..S_J, S_j shared by T_j and T_{j+1}.

    S_0 is a side of T_1 and S_J a side of T_J.  A closed chain has
    S_J == S_0.  The empty chain has no elements and no sides.
    """

    elements: tuple[int, ...]
    sides: tuple[int, ...]

    @property
    def closed(self) -> bool:
        return len(self.elements) > 0 and self.sides[0] == self.sides[-1]

    def __len__(self) -> int:
        return len(self.elements)


def validate_chain(mesh: Triangulation, chain: ElementChain) -> None:
    j = len(chain.elements)
    if j == 0:
        if chain.sides:
            raise InvalidChain("empty chain cannot have sides")
        return
    if len(chain.sides) != j + 1:
        raise InvalidChain(f"chain of {j} elements needs {j + 1} sides, got {len(chain.sides)}")
    if len(set(chain.elements)) != j:
        raise InvalidChain("chain elements must be unique")
    for k, t in enumerate(chain.elements):
        local = set(mesh.element_sides[t].tolist())
        if chain.sides[k] not in local or chain.sides[k + 1] not in local:
            raise InvalidChain(f"element {t} does not contain sides {chain.sides[k]}, {chain.sides[k + 1]}")
        if chain.sides[k] == chain.sides[k + 1]:
            raise InvalidChain(f"element {t} enters and leaves through the same side")
    for k in range(j - 1):
        s = chain.sides[k + 1]
        if set(mesh.side_elements[s].tolist()) != {chain.elements[k], chain.elements[k + 1]}:
            raise InvalidChain(f"side {s} is not shared by elements {chain.elements[k]}, {chain.elements[k + 1]}")


def chain_from_cycle(mesh: Triangulation, nodes: list[int]) -> ElementChain:
    """Closed chain through the given cycle of the element adjacency graph."""
    if not nodes:
        return ElementChain((), ())
    g = element_adjacency(mesh)
    j = len(nodes)
    shared = [g.edges[nodes[k], nodes[(k + 1) % j]]["side"] for k in range(j)]
    return ElementChain(tuple(nodes), (shared[-1],) + tuple(shared))


def dual_cycle_chains(mesh: Triangulation) -> list[ElementChain]:
    """Chains for a cycle basis of the element adjacency graph."""
    return [chain_from_cycle(mesh, c) for c in nx.cycle_basis(element_adjacency(mesh))]


def _chain_coefficients(mesh: Triangulation, chain: ElementChain) -> np.ndarray:
    """Fluxes on all sides of the chain field, scaled by 1/|S|."""
    fluxes = np.zeros(mesh.n_sides)
    sides = chain.sides[:-1] if chain.closed else chain.sides
    for k, s in enumerate(sides):
        # flow leaves the previous element through S_k; S_0 of an open chain
        # has the exterior as its previous element
        prev = chain.elements[k - 1] if k > 0 else (chain.elements[-1] if chain.closed else -1)
        sign = 1.0 if mesh.side_elements[s, 0] == prev else -1.0
        fluxes[s] += sign / mesh.side_areas[s]
    return fluxes


def cycle_field(mesh: Triangulation, chain: ElementChain) -> RtField:
    """Divergence-free RT_N field carried by a chain.

    The chain must be closed, or open with both end sides on the Dirichlet
    boundary (a path through the exterior).  The flux across S_j is
    1/|S_j| in the direction of the chain.
    """
    validate_chain(mesh, chain)
    if len(chain) == 0:
        return RtField.zero(mesh)
    if not chain.closed:
        ends = (chain.sides[0], chain.sides[-1])
        if any(mesh.side_markers[s] != "D" for s in ends):
            raise InvalidChain("open chains must start and end on Dirichlet sides")
    fluxes = _chain_coefficients(mesh, chain)
    if np.any(fluxes[mesh.neumann_sides] != 0):
        raise InvalidChain("chain crosses a Neumann side")
    return RtField(mesh, fluxes[rt_dofs(mesh)])


def chain_pairing(mesh: Triangulation, chain: ElementChain, w: np.ndarray) -> np.ndarray:
    """Per chain element: (int_T w . y, w_T . (x_{S_j} - x_{S_{j-1}})).

    ``y`` is the chain field; both columns agree exactly in exact arithmetic.
    """
    w = np.asarray(w, dtype=float).reshape(mesh.n_elements, mesh.dim)
    a, _ = _local_from_fluxes(mesh, _chain_coefficients(mesh, chain))
    out = []
    for k, t in enumerate(chain.elements):
        lhs = mesh.volumes[t] * float(w[t] @ a[t])
        step = mesh.side_midpoints[chain.sides[k + 1]] - mesh.side_midpoints[chain.sides[k]]
        out.append((lhs, float(w[t] @ step)))
    return np.array(out).reshape(len(chain), 2)


def rotated_hat_fields(mesh: Triangulation) -> dict[int, RtField]:
    """(grad phi_z)^perp for every vertex z where it lies in RT_N (d = 2).

    phi_z is the conforming P1 hat function; (a1, a2)^perp = (-a2, a1).
    The field is elementwise constant, so it lies in RT_N exactly when no
    Neumann side contains z.
    """
    if mesh.dim != 2:
        raise UnsupportedBoundary("rotated hat fields exist only in two dimensions")
    grads = barycentric_gradients(mesh)
    on_neumann = set(mesh.side_vertices[mesh.neumann_sides].ravel().tolist())
    fields = {}
    for z in range(mesh.n_vertices):
        if z in on_neumann:
            continue
        a = np.zeros((mesh.n_elements, 2))
        rows, locs = np.nonzero(mesh.cells == z)
        g = grads[rows, locs]
        a[rows] = np.column_stack([-g[:, 1], g[:, 0]])
        fields[z] = rt_from_elementwise(mesh, a, np.zeros(mesh.n_elements))
    return fields


def dirichlet_components(mesh: Triangulation) -> int:
    """Connected components of Gamma_D; sides are joined across shared (d-2)-faces."""
    g = nx.Graph()
    dsides = mesh.dirichlet_sides.tolist()
    g.add_nodes_from(dsides)
    by_face: dict[tuple[int, ...], list[int]] = {}
    for s in dsides:
        verts = mesh.side_vertices[s].tolist()
        for drop in range(len(verts)):
            face = tuple(v for i, v in enumerate(verts) if i != drop)
            by_face.setdefault(face, []).append(s)
    for group in by_face.values():
        for s, t in zip(group, group[1:]):
            g.add_edge(s, t)
    return nx.number_connected_components(g)


def check_hypotheses(mesh: Triangulation) -> None:
    if mesh.dirichlet_sides.size == 0:
        return
    if mesh.dim != 2:
        raise UnsupportedBoundary("a nonempty Dirichlet boundary is only supported for d = 2")
    if dirichlet_components(mesh) > 1:
        raise UnsupportedBoundary("the Dirichlet boundary is not connected")


def side_graph(mesh: Triangulation) -> nx.Graph:
    """Sides as nodes, joined when they belong to a common element."""
    g = nx.Graph()
    g.add_nodes_from(range(mesh.n_sides))
    for t, local in enumerate(mesh.element_sides):
        for i in range(len(local)):
            for j in range(i + 1, len(local)):
                g.add_edge(int(local[i]), int(local[j]), element=t)
    return g


def reconstruct(mesh: Triangulation, w, tol: float = DEFAULT_TOL) -> CrFunction:
    """CR_D function v with grad_h v = w by path integration.

    Raises :class:`UnsupportedBoundary` outside the lemma's hypotheses,
    :class:`PreconditionViolated` if w is not orthogonal to the
    divergence-free RT_N fields and :class:`CycleInconsistent` if the path
    sums do not close.
    """
    check_hypotheses(mesh)
    d = mesh.dim
    w = np.asarray(getattr(w, "values", w), dtype=float).reshape(mesh.n_elements, d)
    wd = np.repeat(mesh.volumes, d)
    w_norm = float(np.sqrt(wd @ w.reshape(-1) ** 2))

    divfree = sub.nullspace(div_matrix(mesh))
    if divfree.dim:
        averages = proj_rt(mesh).matrix @ divfree.basis
        defect = float(np.linalg.norm(averages.T @ (wd * w.reshape(-1))))
        if defect > tol * max(w_norm, 1.0):
            raise PreconditionViolated(f"w is not orthogonal to divergence-free fields (defect {defect:.3e})")

    g = side_graph(mesh)
    dirichlet = mesh.dirichlet_sides
    root = int(dirichlet.min()) if dirichlet.size else 0
    x = mesh.side_midpoints
    vals = np.zeros(mesh.n_sides)
    for s, s_next in nx.bfs_edges(g, root):
        t = g.edges[s, s_next]["element"]
        vals[s_next] = vals[s] + w[t] @ (x[s_next] - x[s])

    scale = 1.0 + float(np.max(np.abs(w), initial=0.0)) * float(np.ptp(mesh.vertices, axis=0).max())
    worst = 0.0
    for s, s_next, t in g.edges(data="element"):
        worst = max(worst, abs(vals[s_next] - vals[s] - w[t] @ (x[s_next] - x[s])))
    if worst > tol * scale:
        raise CycleInconsistent(f"path sums do not close: residual {worst:.3e}")

    if dirichlet.size:
        spread = float(np.ptp(vals[dirichlet]))
        if spread > tol * scale:
            raise CycleInconsistent(f"potential is not constant on the Dirichlet boundary (spread {spread:.3e})")
        vals -= vals[dirichlet].mean()

    v = CrFunction(mesh, vals[cr_dofs(mesh)])
    err = float(np.max(np.abs(v.element_gradients() - w), initial=0.0))
    if err > tol * scale:
        raise AssertionFailed(f"reconstructed gradient misses w by {err:.3e}")
    return v


def derive_identity_a_via_poincare(mesh: Triangulation, tol: float = DEFAULT_TOL) -> CheckEntry:
    """Certify (Pi RT_N)^perp inside grad_h(ker Pi|CR_D) through potentials.

    Every basis field w of (Pi RT_N)^perp is integrated to a potential v;
    pairing with psi_S shows that Pi v agrees across interior sides and
    vanishes next to Dirichlet sides, so v minus a constant lies in the
    kernel of Pi.  The result is cross-checked with the subspace route.
    """
    check_hypotheses(mesh)
    perp = sub.complement(projected_rt(mesh))
    gradients = []
    certified = 0
    worst = 0.0
    for w in perp.basis.T:
        v = reconstruct(mesh, w, tol)
        pv = v.barycenter_values()
        inner = mesh.interior_sides
        jumps = np.abs(pv[mesh.side_elements[inner, 0]] - pv[mesh.side_elements[inner, 1]])
        at_dirichlet = np.abs(pv[mesh.side_elements[mesh.dirichlet_sides, 0]])
        defect = float(max(np.max(jumps, initial=0.0), np.max(at_dirichlet, initial=0.0)))
        if mesh.dirichlet_sides.size == 0:
            shift = float(pv.mean())
            v = CrFunction(mesh, v.coefficients - shift)
        kernel_defect = float(np.max(np.abs(v.barycenter_values()), initial=0.0))
        worst = max(worst, defect, kernel_defect)
        if defect <= tol and kernel_defect <= tol:
            certified += 1
        gradients.append(v.element_gradients().reshape(-1))

    weight = np.diag(np.repeat(mesh.volumes, mesh.dim))
    basis = np.array(gradients).T if gradients else np.zeros((weight.shape[0], 0))
    via_potentials = sub.span(basis, weight)
    rel, dist = sub.compare(via_potentials, kernel_gradients(mesh), tol)
    ortho = verify_identity_a(mesh, tol)
    ok = certified == perp.dim and rel is sub.Relation.EQUAL and dist <= tol
    return CheckEntry(
        "identity_a_poincare",
        perp.dim,
        via_potentials.dim,
        dist,
        rel.value,
        "pass" if ok else "fail",
        {
            "certified": certified,
            "max_defect": worst,
            "ortho_verdict": ortho.verdict,
            "agrees_with_ortho": ok == (ortho.verdict == "pass"),
            "dirichlet_components": dirichlet_components(mesh),
            "note": "connectedness of the Dirichlet boundary is decided combinatorially "
            "(sides sharing a (d-2)-face)",
        },
    )
