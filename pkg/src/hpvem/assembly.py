"""Local stiffness with D-recipe stabilization, load vectors, global sparse
assembly, Dirichlet elimination and the linear solve.

The local discrete form is the consistency part a^E(Pi v, Pi w) plus the
diagonal D-recipe stabilization acting on (I - Pi): D_ii = max(1, C_ii) with
C the consistency matrix in dof coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import polyquad
from .errors import SolverError
from .mesh import PolyMesh
from .projectors import LocalOperators, build_local_operators
from .vemspace import DegreeMap, DofMap, build_dofmap, interpolate_boundary


@dataclass
class LocalStiffness:
    element_id: int
    consistency: np.ndarray
    stabilization: np.ndarray
    d_recipe: np.ndarray  # diagonal max(1, C_ii) of the D-recipe
    matrix: np.ndarray
    load: np.ndarray


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix  # free-dof block, SPD after elimination
    rhs: np.ndarray
    free: np.ndarray
    lift: np.ndarray  # full-length vector holding the boundary values
    n_dofs: int


@dataclass
class Solution:
    mesh: PolyMesh
    deg: DegreeMap
    dofmap: DofMap
    ops: list[LocalOperators]
    local_systems: list[LocalStiffness]
    system: LinearSystem
    u: np.ndarray
    f: object

    def pinabla_coeffs(self, eid: int) -> np.ndarray:
        """Orthonormal coefficients of the projected discrete solution."""
        op = self.ops[eid]
        d = self.u[self.dofmap.element(eid).global_ids]
        return op.pinabla @ d


def local_stiffness(ops: LocalOperators, f=None, p_edge=None) -> LocalStiffness:
    """Consistency + D-recipe stabilization; load included when f is given."""
    consistency = ops.pinabla.T @ ops.stiffness_ortho @ ops.pinabla
    consistency = 0.5 * (consistency + consistency.T)
    d_recipe = np.maximum(1.0, np.diag(consistency))
    residual = np.eye(ops.n_local) - ops.pinabla_dof
    stabilization = residual.T @ (d_recipe[:, None] * residual)
    stabilization = 0.5 * (stabilization + stabilization.T)
    load = np.zeros(ops.n_local) if f is None else local_load(ops, f)
    return LocalStiffness(
        element_id=ops.element_id,
        consistency=consistency,
        stabilization=stabilization,
        d_recipe=d_recipe,
        matrix=consistency + stabilization,
        load=load,
    )


def local_load(ops: LocalOperators, f) -> np.ndarray:
    """Discrete right-hand side: (f, Pi0 phi_i) for p >= 2, the
    boundary-average pairing for p = 1."""
    fv = np.asarray(f(ops.quad.points[:, 0], ops.quad.points[:, 1]), dtype=float)
    if ops.degree >= 2:
        n2 = ops.n_moments
        f_moments = ops.ortho.eval(ops.quad.points)[:n2] @ (ops.quad.weights * fv)
        return ops.pizero.T @ f_moments
    f_int = float(ops.quad.weights @ fv)
    # boundary_row applied to the constant-1 dof vector is the perimeter
    perimeter = float(ops.boundary_row @ np.ones(ops.n_local))
    return f_int * ops.boundary_row / perimeter


def assemble(mesh: PolyMesh, deg: DegreeMap, dofmap: DofMap, f, g=None,
             ops: list[LocalOperators] | None = None
             ) -> tuple[LinearSystem, list[LocalOperators], list[LocalStiffness]]:
    """Assemble the global system, eliminating Dirichlet dofs symmetrically."""
    if ops is None:
        ops = build_local_operators(mesh, deg, dofmap)
    n = dofmap.n_dofs
    rows, cols, vals = [], [], []
    b = np.zeros(n)
    local_systems = []
    for op in ops:
        loc = local_stiffness(op, f=f)
        local_systems.append(loc)
        gids = dofmap.element(op.element_id).global_ids
        if len(gids) != op.n_local:
            raise SolverError(f"element {op.element_id}: dof count mismatch")
        grid = np.meshgrid(gids, gids, indexing="ij")
        rows.append(grid[0].ravel())
        cols.append(grid[1].ravel())
        vals.append(loc.matrix.ravel())
        b[gids] += loc.load
    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n)).tocsr()

    lift = np.zeros(n)
    if g is not None:
        lift = interpolate_boundary(g, mesh, deg, dofmap)
    lift[~dofmap.boundary] = 0.0
    free = np.nonzero(~dofmap.boundary)[0]
    reduced = matrix[free][:, free].tocsr()
    rhs = b[free] - matrix[free] @ lift
    return LinearSystem(matrix=reduced, rhs=rhs, free=free, lift=lift, n_dofs=n), ops, local_systems


def solve(system: LinearSystem, tol: float = 1e-12, method: str = "direct") -> np.ndarray:
    """Solve for the free dofs; returns the full dof vector with boundary lift."""
    u = system.lift.copy()
    if len(system.free) == 0:
        return u
    a = system.matrix.tocsc()
    if method == "direct":
        x = spla.spsolve(a, system.rhs)
        if not np.all(np.isfinite(x)):
            raise SolverError("sparse factorization produced non-finite values")
    elif method == "cg":
        inv_diag = 1.0 / a.diagonal()
        precond = spla.LinearOperator(a.shape, matvec=lambda v: inv_diag * v)
        x, info = spla.cg(a, system.rhs, rtol=tol, maxiter=20 * a.shape[0], M=precond)
        if info != 0:
            raise SolverError(f"conjugate gradients did not converge (info={info})")
    else:
        raise ValueError(f"unknown solver method {method!r}")
    res = np.linalg.norm(a @ x - system.rhs)
    ref = np.linalg.norm(system.rhs)
    if ref > 0 and res > 1e-8 * ref:
        raise SolverError(f"linear solve residual too large: {res:.3e} vs rhs {ref:.3e}")
    u[system.free] = x
    return u


def solve_poisson(mesh: PolyMesh, deg: DegreeMap, f, g=None, method: str = "direct",
                  dofmap: DofMap | None = None,
                  ops: list[LocalOperators] | None = None) -> Solution:
    """Assemble-and-solve convenience wrapper used by the drivers."""
    if dofmap is None:
        dofmap = build_dofmap(mesh, deg)
    system, ops, local_systems = assemble(mesh, deg, dofmap, f, g, ops=ops)
    u = solve(system, method=method)
    return Solution(mesh=mesh, deg=deg, dofmap=dofmap, ops=ops,
                    local_systems=local_systems, system=system, u=u, f=f)


# -- stability diagnostic ----------------------------------------------------


def _refined_fan_triangulation(mesh: PolyMesh, eid: int, levels: int):
    """Red-refined fan triangulation of one element; exact midpoint dedup."""
    sub = mesh.subtriangulate(eid)
    coords = [tuple(p) for p in sub.local_coords]
    index = {c: i for i, c in enumerate(coords)}
    tris = [tuple(t) for t in sub.triangles]

    def node(p):
        if p not in index:
            index[p] = len(coords)
            coords.append(p)
        return index[p]

    for _ in range(levels):
        next_tris = []
        for (a, b, c) in tris:
            pa, pb, pc = coords[a], coords[b], coords[c]
            ab = node(((pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0))
            bc = node(((pb[0] + pc[0]) / 2.0, (pb[1] + pc[1]) / 2.0))
            ca = node(((pc[0] + pa[0]) / 2.0, (pc[1] + pa[1]) / 2.0))
            next_tris.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
        tris = next_tris
    return np.array(coords), np.array(tris, dtype=int)


def virtual_energy_matrix(mesh: PolyMesh, deg: DegreeMap, dofmap: DofMap,
                          ops: LocalOperators, levels: int = 3) -> np.ndarray:
    """Gram matrix of the H1 energies of the local virtual basis functions,
    approximated with P1 finite elements on a refined subtriangulation.

    Each virtual function solves -Laplace(v) in P_{p-2} with its boundary
    trace and internal moments prescribed; the FE surrogate enforces the
    trace at boundary nodes and the moments through Lagrange multipliers.
    """
    eid = ops.element_id
    elem = mesh.elements[eid]
    p = ops.degree
    edofs = dofmap.element(eid)
    n = ops.n_local
    pts, tris = _refined_fan_triangulation(mesh, eid, levels)
    n_nodes = len(pts)

    rows, cols, vals = [], [], []
    n2 = ops.n_moments
    moment_mat = np.zeros((n2, n_nodes)) if n2 else np.zeros((0, n_nodes))
    ref_rule = polyquad.triangle_quadrature(max(p, 2))
    for t in tris:
        v = pts[t]
        e1 = v[1] - v[0]
        e2 = v[2] - v[0]
        det = e1[0] * e2[1] - e1[1] * e2[0]
        area = abs(det) / 2.0
        grads = np.array([
            [v[1][1] - v[2][1], v[2][0] - v[1][0]],
            [v[2][1] - v[0][1], v[0][0] - v[2][0]],
            [v[0][1] - v[1][1], v[1][0] - v[0][0]],
        ]) / det
        ke = area * grads @ grads.T
        for i in range(3):
            for j in range(3):
                rows.append(t[i])
                cols.append(t[j])
                vals.append(ke[i, j])
        if n2:
            qpts, qw = polyquad.map_to_triangle(ref_rule, v)
            qv = ops.ortho.eval(qpts)[:n2]
            lam = np.empty((3, len(qw)))
            lam[1] = ((qpts - v[0]) @ np.array([e2[1], -e2[0]])) / det
            lam[2] = ((qpts - v[0]) @ np.array([-e1[1], e1[0]])) / det
            lam[0] = 1.0 - lam[1] - lam[2]
            for i in range(3):
                moment_mat[:, t[i]] += qv @ (qw * lam[i])
    stiff = sp.coo_matrix((vals, (rows, cols)), shape=(n_nodes, n_nodes)).tocsr()

    # classify FE nodes: which polygon edge (if any) carries them
    loop = elem.vertex_loop
    nv = len(loop)
    coords = ops.loop_coords
    boundary_of = np.full(n_nodes, -1, dtype=int)
    boundary_t = np.zeros(n_nodes)
    for k in range(nv):
        a = coords[k]
        b = coords[(k + 1) % nv]
        seg = b - a
        L2 = seg @ seg
        t_par = ((pts - a) @ seg) / L2
        dist = np.abs((pts[:, 0] - a[0]) * seg[1] - (pts[:, 1] - a[1]) * seg[0]) / np.sqrt(L2)
        on = (dist <= 1e-12 * np.sqrt(L2)) & (t_par >= -1e-12) & (t_par <= 1 + 1e-12)
        boundary_of[on] = k
        boundary_t[on] = t_par[on]
    bnd_nodes = np.nonzero(boundary_of >= 0)[0]
    int_nodes = np.nonzero(boundary_of < 0)[0]

    # boundary traces of the canonical basis at the boundary FE nodes
    traces = np.zeros((n_nodes, n))
    for k in range(nv):
        sel = bnd_nodes[boundary_of[bnd_nodes] == k]
        if not len(sel):
            continue
        pe = int(deg.p_edge[int(edofs.edge_ids[k])])
        gl = polyquad.gauss_lobatto(pe)
        tau = 2.0 * boundary_t[sel] - 1.0
        lag = polyquad.lagrange_matrix(gl.nodes, tau)
        block = edofs.edge_slices[k]
        trace_locals = [k] + list(range(block.start, block.stop)) + [(k + 1) % nv]
        traces[sel[:, None], np.array(trace_locals)[None, :]] = lag

    a_ii = stiff[int_nodes][:, int_nodes]
    a_ib = stiff[int_nodes][:, bnd_nodes]
    m_i = moment_mat[:, int_nodes]
    m_b = moment_mat[:, bnd_nodes]
    saddle = sp.bmat([[a_ii, m_i.T], [m_i, None]], format="csc") if n2 else a_ii.tocsc()
    lu = spla.splu(saddle)

    v_b = traces[bnd_nodes]
    rhs_top = -(a_ib @ v_b)
    fields = np.zeros((n_nodes, n))
    fields[bnd_nodes] = v_b
    if n2:
        moments = np.zeros((n2, n))
        moments[:, edofs.moment_slice] = np.sqrt(ops.area) * np.eye(n2)
        rhs = np.vstack([rhs_top, moments - m_b @ v_b])
        sol = lu.solve(rhs)
        fields[int_nodes] = sol[:len(int_nodes)]
    else:
        fields[int_nodes] = lu.solve(rhs_top)
    return fields.T @ (stiff @ fields)


def stability_bounds(mesh: PolyMesh, deg: DegreeMap, dofmap: DofMap,
                     ops: LocalOperators, local: LocalStiffness,
                     levels: int = 3) -> tuple[float, float]:
    """Generalized eigenvalue range of the discrete local form against the
    FE-approximated exact energy, on the complement of constants.

    Diagnostic only: a numerical surrogate of the local stability bounds."""
    from scipy.linalg import eigh, null_space

    energy = virtual_energy_matrix(mesh, deg, dofmap, ops, levels=levels)
    ones = np.zeros(ops.n_local)
    ones[:ops.pinabla_dof.shape[0] - ops.n_moments] = 1.0
    n2 = ops.n_moments
    if n2:
        ones[-n2:] = 0.0
        edofs = dofmap.element(ops.element_id)
        mono = np.zeros(ops.ortho.n_members)
        mono[0] = 1.0
        ones[edofs.moment_slice] = ops.ortho.from_monomial(mono)[:n2] / np.sqrt(ops.area)
    basis = null_space(ones[None, :])
    k_c = basis.T @ local.matrix @ basis
    h_c = basis.T @ energy @ basis
    vals = eigh(k_c, 0.5 * (h_c + h_c.T), eigvals_only=True)
    return float(vals.min()), float(vals.max())
