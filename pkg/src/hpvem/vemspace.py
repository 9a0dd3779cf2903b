"""Degree-of-accuracy distribution and global degree-of-freedom management.

Per element the local dofs are, in order: the values at the loop vertices,
the values at the internal Gauss-Lobatto nodes of every loop edge (walked in
loop direction), and the internal moments against the element's orthonormal
moment basis.  Edge dofs are numbered once, along the edge's canonical
direction v0 -> v1; an element traversing the edge backwards reverses its
local view, which is what keeps the conforming coupling a pure index map.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import polyquad
from .mesh import PolyMesh


@dataclass
class DegreeMap:
    p_elem: np.ndarray
    p_edge: np.ndarray
    p_vertex: np.ndarray


def assign_degrees(mesh: PolyMesh, p_elem, gap_warn: int = 2) -> DegreeMap:
    """Derive edge and vertex degrees from per-element degrees by the max rule.

    Emits a warning (never an error) when elements sharing a vertex differ in
    degree by more than `gap_warn`; the adaptive loop may transiently create
    such gaps and the method tolerates them.
    """
    p_elem = np.asarray(p_elem, dtype=int)
    if len(p_elem) != mesh.n_elements:
        raise ValueError("one degree per element required")
    if np.any(p_elem < 1):
        raise ValueError("element degrees must be >= 1")
    p_edge = np.empty(mesh.n_edges, dtype=int)
    for e in mesh.edges:
        p_edge[e.id] = max(p_elem[el] for el in e.elems)
    p_vertex = np.zeros(mesh.n_vertices, dtype=int)
    spread = np.full(mesh.n_vertices, np.iinfo(np.int64).max)
    for elem in mesh.elements:
        p = p_elem[elem.id]
        for v in elem.vertex_loop:
            p_vertex[v] = max(p_vertex[v], p)
            spread[v] = min(spread[v], p)
    gaps = p_vertex - np.where(spread == np.iinfo(np.int64).max, p_vertex, spread)
    worst = int(gaps.max()) if len(gaps) else 0
    if worst > gap_warn:
        warnings.warn(
            f"neighbouring element degrees differ by up to {worst} "
            f"(threshold {gap_warn})", RuntimeWarning, stacklevel=2)
    return DegreeMap(p_elem=p_elem, p_edge=p_edge, p_vertex=p_vertex)


@dataclass
class ElementDofs:
    """Local dof layout of one element (gather list plus edge walk data)."""

    element_id: int
    global_ids: np.ndarray
    n_vertices: int
    edge_slices: list[slice]  # local slices of the internal edge-node blocks
    moment_slice: slice
    edge_ids: np.ndarray
    edge_forward: np.ndarray  # loop direction == canonical v0 -> v1 direction

    @property
    def n_local(self) -> int:
        return len(self.global_ids)


class DofMap:
    """Global numbering: all vertex dofs, then edge dofs, then moment dofs."""

    def __init__(self, mesh: PolyMesh, deg: DegreeMap):
        self.mesh = mesh
        self.deg = deg
        nv = mesh.n_vertices
        self.edge_offset = np.empty(mesh.n_edges + 1, dtype=int)
        self.edge_offset[0] = nv
        for e in mesh.edges:
            self.edge_offset[e.id + 1] = self.edge_offset[e.id] + (deg.p_edge[e.id] - 1)
        self.moment_offset = np.empty(mesh.n_elements + 1, dtype=int)
        self.moment_offset[0] = self.edge_offset[-1]
        for elem in mesh.elements:
            p = deg.p_elem[elem.id]
            self.moment_offset[elem.id + 1] = self.moment_offset[elem.id] + polyquad.n_poly_2d(p - 2)
        self.n_dofs = int(self.moment_offset[-1])

        self.boundary = np.zeros(self.n_dofs, dtype=bool)
        self.boundary[:nv] = mesh.boundary_vertex
        for e in mesh.edges:
            if e.is_boundary:
                self.boundary[self.edge_offset[e.id]:self.edge_offset[e.id + 1]] = True

        self._element_dofs = [self._build_element(eid) for eid in range(mesh.n_elements)]

    def _build_element(self, eid: int) -> ElementDofs:
        mesh = self.mesh
        elem = mesh.elements[eid]
        loop = elem.vertex_loop
        ids = [int(v) for v in loop]
        edge_slices = []
        forward = np.empty(len(loop), dtype=bool)
        cursor = len(loop)
        for k, edge_id in enumerate(elem.edge_loop):
            e = mesh.edges[int(edge_id)]
            fw = int(loop[k]) == e.v0
            forward[k] = fw
            block = np.arange(self.edge_offset[e.id], self.edge_offset[e.id + 1])
            if not fw:
                block = block[::-1]
            ids.extend(int(d) for d in block)
            edge_slices.append(slice(cursor, cursor + len(block)))
            cursor += len(block)
        n_mom = self.moment_offset[eid + 1] - self.moment_offset[eid]
        ids.extend(range(self.moment_offset[eid], self.moment_offset[eid + 1]))
        return ElementDofs(
            element_id=eid,
            global_ids=np.array(ids, dtype=int),
            n_vertices=len(loop),
            edge_slices=edge_slices,
            moment_slice=slice(cursor, cursor + n_mom),
            edge_ids=elem.edge_loop.copy(),
            edge_forward=forward,
        )

    def element(self, eid: int) -> ElementDofs:
        return self._element_dofs[eid]

    def edge_node_coords(self, edge_id: int) -> np.ndarray:
        """Internal Gauss-Lobatto node positions, canonical v0 -> v1 order."""
        e = self.mesh.edges[edge_id]
        p = int(self.deg.p_edge[edge_id])
        rule = polyquad.gauss_lobatto(p)
        tau = rule.nodes[1:-1]
        pa = self.mesh.vertices[e.v0]
        pb = self.mesh.vertices[e.v1]
        return 0.5 * (pa + pb)[None, :] + 0.5 * np.outer(tau, pb - pa)


def build_dofmap(mesh: PolyMesh, deg: DegreeMap) -> DofMap:
    return DofMap(mesh, deg)


def interpolate_boundary(g, mesh: PolyMesh, deg: DegreeMap, dofmap: DofMap) -> np.ndarray:
    """Boundary data: g at boundary vertices and at the mapped internal
    Gauss-Lobatto nodes of every boundary edge.  Returns a full-length dof
    vector, zero away from the boundary."""
    values = np.zeros(dofmap.n_dofs)
    for v in np.nonzero(mesh.boundary_vertex)[0]:
        x, y = mesh.vertices[v]
        values[v] = g(x, y)
    for e in mesh.edges:
        if not e.is_boundary:
            continue
        nodes = dofmap.edge_node_coords(e.id)
        if len(nodes):
            values[dofmap.edge_offset[e.id]:dofmap.edge_offset[e.id + 1]] = \
                np.asarray(g(nodes[:, 0], nodes[:, 1]), dtype=float)
    return values
