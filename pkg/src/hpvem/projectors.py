"""Per-element dof-to-polynomial projectors.

For every element the H1-seminorm projector onto degree-p polynomials is
assembled from the dofs alone: the right-hand side a^E(v, q) is evaluated by
integration by parts, reading the volume part off the internal moments
(the Laplacian of a degree-p polynomial has degree p-2) and integrating the
known polynomial boundary trace edge by edge with Gauss-Legendre rules.
The kernel of constants is fixed by the zero-mean-on-the-boundary constraint,
imposed through one (scaled) Lagrange row.

All polynomial coefficients are carried in the element's L2-orthonormal
basis; internal moments are taken against the scale-normalized members
|E|^(1/2) q_beta, so every dof is invariant under homothety.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import polyquad
from .errors import DegenerateElementError
from .mesh import PolyMesh
from .polyquad import MonomialBasis, OrthoBasis, QuadRule
from .vemspace import DegreeMap, DofMap, ElementDofs


@dataclass
class LocalOperators:
    """Dof-to-polynomial maps and bookkeeping of one element."""

    element_id: int
    degree: int
    n_local: int
    area: float
    mono: MonomialBasis
    ortho: OrthoBasis
    quad: QuadRule
    pinabla: np.ndarray  # (dim P_p, n_local), orthonormal coordinates
    pizero: np.ndarray  # (dim P_{p-2}, n_local)
    pinabla_dof: np.ndarray  # (n_local, n_local)
    stiffness_ortho: np.ndarray  # grad-grad Gram of the orthonormal members
    boundary_row: np.ndarray  # integral of each canonical function over dE
    loop_coords: np.ndarray
    trace_nodes: list[np.ndarray]  # internal GL node coords per loop edge
    condition: float

    @property
    def n_moments(self) -> int:
        return self.pizero.shape[0]


def laplacian_in_ortho(ortho: OrthoBasis) -> np.ndarray:
    """Matrix L with L[:, i] = orthonormal coefficients of Laplacian(q_i)."""
    p = ortho.degree
    n2 = polyquad.n_poly_2d(p - 2)
    if n2 == 0:
        return np.zeros((0, ortho.n_members))
    dxx, dyy = polyquad._second_derivative_maps(p)
    lap_mono = (dxx + dyy) @ ortho.coeffs.T / ortho.mono.scale**2
    c2 = ortho.coeffs[:n2, :n2]
    return solve_triangular(c2.T, lap_mono, lower=False)


def compute_local_operators(mesh: PolyMesh, deg: DegreeMap, dofmap: DofMap,
                            eid: int) -> LocalOperators:
    elem = mesh.elements[eid]
    p = int(deg.p_elem[eid])
    edofs = dofmap.element(eid)
    n = edofs.n_local
    loop = elem.vertex_loop
    coords = mesh.vertices[loop]
    area = elem.area
    sqrt_area = np.sqrt(area)

    mono = MonomialBasis(p, elem.barycenter, elem.diameter)
    quad = polyquad.element_quadrature(mesh, eid, 2 * p + 2)
    ortho = polyquad.orthonormalize(mono, quad)
    ortho.element_id = eid
    n_p = ortho.n_members
    n2 = polyquad.n_poly_2d(p - 2)

    gx, gy = ortho.grad(quad.points)
    stiff = (gx * quad.weights) @ gx.T + (gy * quad.weights) @ gy.T
    stiff = 0.5 * (stiff + stiff.T)

    rhs = np.zeros((n_p, n))
    boundary_row = np.zeros(n)
    c_bnd = np.zeros(n_p)
    trace_nodes: list[np.ndarray] = []
    nv = len(loop)
    for k in range(nv):
        edge_id = int(edofs.edge_ids[k])
        pe = int(deg.p_edge[edge_id])
        a = coords[k]
        b = coords[(k + 1) % nv]
        tang = b - a
        length = float(np.linalg.norm(tang))
        n_out = np.array([tang[1], -tang[0]]) / length

        gl = polyquad.gauss_lobatto(pe)
        xq, wq = polyquad.gauss_legendre(p + pe + 2)
        pts = 0.5 * (a + b)[None, :] + 0.5 * np.outer(xq, tang)
        w = wq * (length / 2.0)
        lag = polyquad.lagrange_matrix(gl.nodes, xq)  # (nq, pe + 1)

        block = edofs.edge_slices[k]
        trace_locals = np.array([k] + list(range(block.start, block.stop))
                                + [(k + 1) % nv], dtype=int)
        ogx, ogy = ortho.grad(pts)
        dn = n_out[0] * ogx + n_out[1] * ogy
        rhs[:, trace_locals] += dn @ (w[:, None] * lag)
        c_bnd += ortho.eval(pts) @ w
        boundary_row[trace_locals] += w @ lag
        trace_nodes.append(0.5 * (a + b)[None, :] + 0.5 * np.outer(gl.nodes[1:-1], tang))

    lap = laplacian_in_ortho(ortho)
    if n2:
        rhs[:, edofs.moment_slice] -= sqrt_area * lap.T

    theta = max(np.trace(stiff) / n_p, 1.0)
    system = np.zeros((n_p + 1, n_p + 1))
    system[:n_p, :n_p] = stiff
    system[:n_p, n_p] = theta * c_bnd
    system[n_p, :n_p] = theta * c_bnd
    full_rhs = np.vstack([rhs, theta * boundary_row[None, :]])
    try:
        solution = np.linalg.solve(system, full_rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateElementError(
            f"element {eid}: singular projector system ({exc})") from None
    pinabla = solution[:n_p]
    condition = float(np.linalg.cond(system))

    pizero = np.zeros((n2, n))
    if n2:
        pizero[:, edofs.moment_slice] = sqrt_area * np.eye(n2)

    # dofs of the orthonormal members, for re-expanding projected polynomials
    dofs_of_q = np.zeros((n, n_p))
    dofs_of_q[:nv] = ortho.eval(coords).T
    for k in range(nv):
        block = edofs.edge_slices[k]
        if block.stop > block.start:
            dofs_of_q[block] = ortho.eval(trace_nodes[k]).T
    if n2:
        dofs_of_q[edofs.moment_slice, :n2] = np.eye(n2) / sqrt_area
    pinabla_dof = dofs_of_q @ pinabla

    return LocalOperators(
        element_id=eid, degree=p, n_local=n, area=area, mono=mono, ortho=ortho,
        quad=quad, pinabla=pinabla, pizero=pizero, pinabla_dof=pinabla_dof,
        stiffness_ortho=stiff, boundary_row=boundary_row, loop_coords=coords,
        trace_nodes=trace_nodes, condition=condition,
    )


def build_local_operators(mesh: PolyMesh, deg: DegreeMap, dofmap: DofMap) -> list[LocalOperators]:
    return [compute_local_operators(mesh, deg, dofmap, eid) for eid in range(mesh.n_elements)]


def compute_pinabla(mesh: PolyMesh, deg: DegreeMap, dofmap: DofMap, eid: int) -> np.ndarray:
    """H1 projector of one element as a dof -> orthonormal-coefficient matrix."""
    return compute_local_operators(mesh, deg, dofmap, eid).pinabla


def compute_pizero(mesh: PolyMesh, deg: DegreeMap, dofmap: DofMap, eid: int) -> np.ndarray:
    """L2 projector onto degree p-2; empty matrix when p = 1."""
    return compute_local_operators(mesh, deg, dofmap, eid).pizero


def polynomial_local_dofs(ops: LocalOperators, edofs: ElementDofs,
                          mono_coeffs: np.ndarray) -> np.ndarray:
    """Local dof vector of a polynomial given by monomial coefficients."""
    mono_coeffs = np.asarray(mono_coeffs, dtype=float)
    full = np.zeros(ops.ortho.n_members)
    full[:len(mono_coeffs)] = mono_coeffs
    dofs = np.zeros(ops.n_local)
    vals = ops.mono.eval(ops.loop_coords)
    dofs[:edofs.n_vertices] = full @ vals
    for k, block in enumerate(edofs.edge_slices):
        if block.stop > block.start:
            dofs[block] = full @ ops.mono.eval(ops.trace_nodes[k])
    n2 = ops.n_moments
    if n2:
        ortho_coeffs = ops.ortho.from_monomial(full)
        dofs[edofs.moment_slice] = ortho_coeffs[:n2] / np.sqrt(ops.area)
    return dofs


def interpolate(mesh: PolyMesh, deg: DegreeMap, dofmap: DofMap,
                ops: list[LocalOperators], f) -> np.ndarray:
    """Global dof vector interpolating a function: pointwise at vertex and
    edge nodes, by quadrature for the internal moments."""
    u = np.zeros(dofmap.n_dofs)
    u[:mesh.n_vertices] = f(mesh.vertices[:, 0], mesh.vertices[:, 1])
    for e in mesh.edges:
        nodes = dofmap.edge_node_coords(e.id)
        if len(nodes):
            u[dofmap.edge_offset[e.id]:dofmap.edge_offset[e.id + 1]] = \
                f(nodes[:, 0], nodes[:, 1])
    for op in ops:
        n2 = op.n_moments
        if not n2:
            continue
        fv = f(op.quad.points[:, 0], op.quad.points[:, 1])
        q_vals = op.ortho.eval(op.quad.points)[:n2]
        moments = q_vals @ (op.quad.weights * fv) / np.sqrt(op.area)
        u[dofmap.moment_offset[op.element_id]:dofmap.moment_offset[op.element_id + 1]] = moments
    return u
