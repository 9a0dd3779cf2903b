"""Conforming polygonal meshes.

Hanging nodes are ordinary vertices: an element adjacent to refined
neighbours simply gains vertices in its loop, and each element partitions
its boundary into maximal collinear runs of mesh edges ("straight edges").
Refinement connects the barycenter of a marked element with the midpoint of
every straight edge, producing one child per straight edge.

Meshes are immutable after construction; refinement returns a new mesh.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import MeshError

# straight-edge grouping tolerance (radians); refinement midpoints are exact
# halves of existing coordinates, the tolerance only absorbs roundoff
COLLINEAR_TOL = 1e-10


@dataclass
class Vertex:
    id: int
    x: float
    y: float


@dataclass
class Edge:
    id: int
    v0: int
    v1: int
    elems: tuple[int, ...]
    unit_normal: np.ndarray
    is_boundary: bool
    elem_plus: int | None = None  # element traversing v0 -> v1 in its CCW loop


@dataclass
class Element:
    id: int
    vertex_loop: np.ndarray
    edge_loop: np.ndarray
    straight_edges: list[np.ndarray]  # groups of edge ids, loop order
    straight_spans: list[np.ndarray]  # same groups as positions in edge_loop
    diameter: float
    barycenter: np.ndarray
    area: float

    @property
    def n_straight(self) -> int:
        return len(self.straight_edges)


@dataclass
class SubTriangulation:
    """Fan subtriangulation of one element around an interior star point."""

    parent: int
    star_point: np.ndarray
    local_coords: np.ndarray  # element vertices followed by the star point
    triangles: np.ndarray  # (n, 3) local vertex indices

    def triangle_coords(self) -> np.ndarray:
        return self.local_coords[self.triangles]


@dataclass
class MeshQuality:
    inradius_ratio: np.ndarray
    min_edge_ratio: np.ndarray
    convex: np.ndarray
    max_interior_angle: np.ndarray


@dataclass
class RefinementResult:
    mesh: "PolyMesh"
    parent_children: dict[int, list[int]]
    carried: dict[int, int]  # old id -> new id for elements that were not split


def _signed_area(coords: np.ndarray) -> float:
    x = coords[:, 0]
    y = coords[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _centroid(coords: np.ndarray, area: float) -> np.ndarray:
    x = coords[:, 0]
    y = coords[:, 1]
    xn = np.roll(x, -1)
    yn = np.roll(y, -1)
    cross = x * yn - xn * y
    cx = np.sum((x + xn) * cross) / (6.0 * area)
    cy = np.sum((y + yn) * cross) / (6.0 * area)
    return np.array([cx, cy])


def _is_convex(coords: np.ndarray, tol: float = 1e-10) -> bool:
    vec = np.roll(coords, -1, axis=0) - coords
    cross = vec[:, 0] * np.roll(vec[:, 1], -1) - vec[:, 1] * np.roll(vec[:, 0], -1)
    scale = np.linalg.norm(vec, axis=1) * np.linalg.norm(np.roll(vec, -1, axis=0), axis=1)
    return bool(np.all(cross >= -tol * scale))


def _straight_groups(coords: np.ndarray) -> list[np.ndarray]:
    """Positions of maximal collinear edge runs in a CCW loop (circular)."""
    n = len(coords)
    vec = np.roll(coords, -1, axis=0) - coords
    lens = np.linalg.norm(vec, axis=1)
    corners = []
    for k in range(n):
        u = vec[k - 1]
        v = vec[k]
        cross = u[0] * v[1] - u[1] * v[0]
        dot = u[0] * v[0] + u[1] * v[1]
        if abs(cross) > COLLINEAR_TOL * lens[k - 1] * lens[k] or dot <= 0.0:
            corners.append(k)
    if not corners:
        raise MeshError("degenerate element: boundary is a single straight line")
    groups = []
    for i, c in enumerate(corners):
        nxt = corners[(i + 1) % len(corners)]
        span = (nxt - c) % n
        if span == 0:
            span = n
        groups.append(np.array([(c + j) % n for j in range(span)], dtype=int))
    return groups


class PolyMesh:
    """Conforming polygonal mesh with fixed edge normals."""

    def __init__(self, vertices: np.ndarray, edges: list[Edge], elements: list[Element],
                 boundary_vertex: np.ndarray):
        self.vertices = vertices
        self.edges = edges
        self.elements = elements
        self.boundary_vertex = boundary_vertex

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def element_coords(self, element_id: int) -> np.ndarray:
        return self.vertices[self.elements[element_id].vertex_loop]

    def total_area(self) -> float:
        return float(sum(e.area for e in self.elements))

    def subtriangulate(self, element_id: int) -> SubTriangulation:
        """Fan triangulation joining the element vertices to its barycenter.

        The star point must see every boundary edge (guaranteed for convex
        elements, whose barycenter lies in the kernel).
        """
        elem = self.elements[element_id]
        coords = self.element_coords(element_id)
        star = elem.barycenter
        n = len(coords)
        tris = np.array([[i, (i + 1) % n, n] for i in range(n)], dtype=int)
        local = np.vstack([coords, star[None, :]])
        areas = np.array([_signed_area(local[t]) for t in tris])
        if np.any(areas <= 0.0):
            raise MeshError(
                f"element {element_id}: star point outside kernel, cannot subtriangulate"
            )
        if abs(areas.sum() - elem.area) > 1e-12 * elem.area:
            raise MeshError(f"element {element_id}: subtriangulation does not tile the element")
        return SubTriangulation(parent=element_id, star_point=star, local_coords=local,
                                triangles=tris)

    @staticmethod
    def from_polygons(coords: np.ndarray, loops: list[list[int]]) -> "PolyMesh":
        """Build a mesh from vertex coordinates and CCW vertex loops."""
        coords = np.asarray(coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise MeshError("vertex array must have shape (n, 2)")
        if not np.all(np.isfinite(coords)):
            raise MeshError("vertex coordinates must be finite")
        nv = len(coords)
        used = np.zeros(nv, dtype=bool)

        edge_ids: dict[tuple[int, int], int] = {}
        edges: list[Edge] = []
        incidence: list[list[int]] = []
        forward: list[int | None] = []
        elements: list[Element] = []

        for el_id, loop in enumerate(loops):
            loop = np.asarray(loop, dtype=int)
            if len(loop) < 3:
                raise MeshError(f"element {el_id}: fewer than 3 vertices")
            if np.any(loop < 0) or np.any(loop >= nv):
                raise MeshError(f"element {el_id}: vertex id out of range")
            if len(set(loop.tolist())) != len(loop):
                raise MeshError(f"element {el_id}: repeated vertex in loop")
            used[loop] = True
            pts = coords[loop]
            area = _signed_area(pts)
            if area <= 0.0:
                raise MeshError(f"element {el_id}: loop is not counterclockwise")

            edge_loop = np.empty(len(loop), dtype=int)
            for k in range(len(loop)):
                a = int(loop[k])
                b = int(loop[(k + 1) % len(loop)])
                key = (a, b) if a < b else (b, a)
                eid = edge_ids.get(key)
                if eid is None:
                    eid = len(edges)
                    edge_ids[key] = eid
                    t = coords[key[1]] - coords[key[0]]
                    ln = np.linalg.norm(t)
                    if ln <= 0.0:
                        raise MeshError(f"zero-length edge between vertices {a}, {b}")
                    normal = np.array([t[1], -t[0]]) / ln
                    edges.append(Edge(id=eid, v0=key[0], v1=key[1], elems=(),
                                      unit_normal=normal, is_boundary=False))
                    incidence.append([])
                    forward.append(None)
                if len(incidence[eid]) >= 2:
                    raise MeshError(f"edge {eid} shared by more than two elements")
                incidence[eid].append(el_id)
                if (a, b) == (edges[eid].v0, edges[eid].v1):
                    if forward[eid] is not None:
                        raise MeshError(
                            f"edge {eid}: inconsistent orientation between elements "
                            f"{forward[eid]} and {el_id}"
                        )
                    forward[eid] = el_id
                edge_loop[k] = eid

            spans = _straight_groups(pts)
            groups = [edge_loop[s] for s in spans]
            diam = 0.0
            for i in range(len(pts)):
                d = np.linalg.norm(pts[i + 1:] - pts[i], axis=1)
                if len(d):
                    diam = max(diam, float(d.max()))
            elements.append(Element(
                id=el_id, vertex_loop=loop, edge_loop=edge_loop,
                straight_edges=groups, straight_spans=spans,
                diameter=diam, barycenter=_centroid(pts, area), area=area,
            ))

        if not np.all(used):
            orphans = np.nonzero(~used)[0]
            raise MeshError(f"orphan vertices not referenced by any element: {orphans[:5]}")

        boundary_vertex = np.zeros(nv, dtype=bool)
        for e in edges:
            e.elems = tuple(incidence[e.id])
            e.is_boundary = len(e.elems) == 1
            e.elem_plus = forward[e.id]
            if e.is_boundary:
                boundary_vertex[e.v0] = True
                boundary_vertex[e.v1] = True
        return PolyMesh(coords, edges, elements, boundary_vertex)

    # -- serialization ----------------------------------------------------

    def to_dict(self, degrees: np.ndarray | None = None) -> dict:
        doc = {
            "vertices": [[float(x), float(y)] for x, y in self.vertices],
            "elements": [e.vertex_loop.tolist() for e in self.elements],
            "boundary_vertices": np.nonzero(self.boundary_vertex)[0].tolist(),
        }
        if degrees is not None:
            doc["degrees"] = [int(p) for p in degrees]
        return doc

    def to_json(self, degrees: np.ndarray | None = None) -> str:
        return json.dumps(self.to_dict(degrees))

    @staticmethod
    def from_dict(doc: dict) -> tuple["PolyMesh", np.ndarray | None]:
        try:
            coords = np.asarray(doc["vertices"], dtype=float)
            loops = [list(map(int, loop)) for loop in doc["elements"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise MeshError(f"malformed mesh document: {exc}") from None
        mesh = PolyMesh.from_polygons(coords, loops)
        if "boundary_vertices" in doc:
            stored = np.zeros(mesh.n_vertices, dtype=bool)
            ids = np.asarray(doc["boundary_vertices"], dtype=int)
            if len(ids) and (ids.min() < 0 or ids.max() >= mesh.n_vertices):
                raise MeshError("boundary vertex id out of range")
            stored[ids] = True
            if not np.array_equal(stored, mesh.boundary_vertex):
                raise MeshError("stored boundary vertices disagree with mesh topology")
        degrees = None
        if "degrees" in doc:
            degrees = np.asarray(doc["degrees"], dtype=int)
            if len(degrees) != mesh.n_elements:
                raise MeshError("degrees array length does not match element count")
        return mesh, degrees

    @staticmethod
    def from_json(text: str) -> tuple["PolyMesh", np.ndarray | None]:
        return PolyMesh.from_dict(json.loads(text))


# -- builders --------------------------------------------------------------


def build_cartesian(nx: int, ny: int, domain=(0.0, 0.0, 1.0, 1.0)) -> PolyMesh:
    """nx-by-ny Cartesian mesh of an axis-aligned rectangle."""
    if nx < 1 or ny < 1:
        raise MeshError(f"cell counts must be >= 1, got {nx} x {ny}")
    x0, y0, x1, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise MeshError("empty rectangle domain")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    coords = np.array([[x, y] for y in ys for x in xs])
    loops = []
    for j in range(ny):
        for i in range(nx):
            v = j * (nx + 1) + i
            loops.append([v, v + 1, v + nx + 2, v + nx + 1])
    return PolyMesh.from_polygons(coords, loops)


def build_lshape(n: int) -> PolyMesh:
    """Cartesian mesh of the L-shaped domain [-1,1]^2 minus [-1,0]^2.

    n squares per unit length; the re-entrant corner at the origin is a mesh
    vertex by construction.
    """
    if n < 1:
        raise MeshError(f"resolution must be >= 1, got {n}")
    m = 2 * n
    xs = np.linspace(-1.0, 1.0, m + 1)
    ys = np.linspace(-1.0, 1.0, m + 1)
    grid_id = {}
    coords = []
    loops = []

    def vid(i, j):
        key = (i, j)
        if key not in grid_id:
            grid_id[key] = len(coords)
            coords.append([xs[i], ys[j]])
        return grid_id[key]

    for j in range(m):
        for i in range(m):
            cx = 0.5 * (xs[i] + xs[i + 1])
            cy = 0.5 * (ys[j] + ys[j + 1])
            if cx < 0.0 and cy < 0.0:
                continue
            loops.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
    return PolyMesh.from_polygons(np.array(coords), loops)


def _clip_halfplane(poly: np.ndarray, point: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Keep the part of a convex CCW polygon with (x - point) . direction <= 0."""
    if len(poly) == 0:
        return poly
    d = (poly - point) @ direction
    out = []
    n = len(poly)
    for k in range(n):
        a, da = poly[k], d[k]
        b, db = poly[(k + 1) % n], d[(k + 1) % n]
        if da <= 0.0:
            out.append(a)
        if da * db < 0.0:
            t = da / (da - db)
            out.append(a + t * (b - a))
    return np.array(out) if out else np.zeros((0, 2))


def _clipped_voronoi(seeds: np.ndarray, bbox: tuple[float, float, float, float]) -> list[np.ndarray]:
    """Voronoi cells clipped to a rectangle, by direct halfplane clipping."""
    x0, y0, x1, y1 = bbox
    box = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    n = len(seeds)
    cells = []
    for i in range(n):
        cell = box
        d2 = np.sum((seeds - seeds[i]) ** 2, axis=1)
        order = np.argsort(d2, kind="stable")
        for j in order:
            if j == i:
                continue
            radius2 = np.max(np.sum((cell - seeds[i]) ** 2, axis=1))
            if d2[j] >= 4.0 * radius2:
                break
            mid = 0.5 * (seeds[i] + seeds[j])
            cell = _clip_halfplane(cell, mid, seeds[j] - seeds[i])
            if len(cell) < 3:
                raise MeshError("empty Voronoi cell; seed set degenerate")
        cells.append(cell)
    return cells


def _subtract_corner_quadrant(poly: np.ndarray) -> list[np.ndarray]:
    """Intersect a convex polygon with the L-shape: remove [-1,0]^2.

    Splits along the ray {x = 0, y >= 0} from the re-entrant corner, so every
    returned piece is convex.
    """
    ex = np.array([1.0, 0.0])
    ey = np.array([0.0, 1.0])
    origin = np.zeros(2)
    right = _clip_halfplane(poly, origin, -ex)  # x >= 0
    left = _clip_halfplane(poly, origin, ex)  # x <= 0
    left = _clip_halfplane(left, origin, -ey)  # y >= 0
    pieces = []
    for piece in (right, left):
        if len(piece) >= 3 and abs(_signed_area(piece)) > 1e-14:
            pieces.append(piece)
    return pieces


def _piece_list(cell: np.ndarray, lshape: bool) -> list[np.ndarray]:
    return _subtract_corner_quadrant(cell) if lshape else [cell]


def _pieces_centroid(pieces: list[np.ndarray]) -> np.ndarray:
    total = 0.0
    acc = np.zeros(2)
    for piece in pieces:
        a = abs(_signed_area(piece))
        total += a
        acc += a * _centroid(piece, _signed_area(piece))
    return acc / total


def _merge_vertices(points: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Cluster near-identical points; returns (unique points, index map)."""
    from scipy.spatial import cKDTree

    tree = cKDTree(points)
    pairs = sorted(tree.query_pairs(tol))
    parent = np.arange(len(points))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(len(points))])
    unique_roots, index_map = np.unique(roots, return_inverse=True)
    merged = np.empty((len(unique_roots), 2))
    for k, r in enumerate(unique_roots):
        merged[k] = points[roots == r].mean(axis=0)
    return merged, index_map


def _insert_hanging(points: np.ndarray, loops: list[list[int]], tol: float) -> list[list[int]]:
    """Insert vertices lying in the interior of polygon edges (T-junction fix)."""
    out = []
    for loop in loops:
        new_loop = []
        n = len(loop)
        for k in range(n):
            a = loop[k]
            b = loop[(k + 1) % n]
            pa, pb = points[a], points[b]
            seg = pb - pa
            L2 = seg @ seg
            new_loop.append(a)
            if L2 == 0.0:
                continue
            t = ((points - pa) @ seg) / L2
            perp = np.abs((points[:, 0] - pa[0]) * seg[1] - (points[:, 1] - pa[1]) * seg[0])
            on = (perp <= tol * np.sqrt(L2)) & (t > 1e-9) & (t < 1.0 - 1e-9)
            on[a] = False
            on[b] = False
            inside = np.nonzero(on)[0]
            for vid in inside[np.argsort(t[inside], kind="stable")]:
                new_loop.append(int(vid))
        out.append(new_loop)
    return out


def build_voronoi(n_seeds: int, lloyd_iters: int, rng_seed: int,
                  domain=(0.0, 0.0, 1.0, 1.0)) -> PolyMesh:
    """Clipped Voronoi mesh of Lloyd-relaxed random seeds.

    `domain` is an axis-aligned rectangle (x0, y0, x1, y1) or the string
    "lshape" for [-1,1]^2 minus [-1,0]^2.  On the L-shape, cells crossing the
    removed quadrant are split along the vertical ray from the re-entrant
    corner, so all cells stay convex.  Deterministic for a fixed rng_seed.
    """
    if n_seeds < 1:
        raise MeshError(f"need at least one seed, got {n_seeds}")
    lshape = isinstance(domain, str) and domain == "lshape"
    if isinstance(domain, str) and not lshape:
        raise MeshError(f"unknown domain tag {domain!r}")
    bbox = (-1.0, -1.0, 1.0, 1.0) if lshape else tuple(map(float, domain))
    x0, y0, x1, y1 = bbox
    scale = max(x1 - x0, y1 - y0)
    rng = np.random.default_rng(rng_seed)

    def sample(n):
        pts = np.empty((n, 2))
        for k in range(n):
            while True:
                p = rng.uniform((x0, y0), (x1, y1))
                if not (lshape and p[0] < 0.0 and p[1] < 0.0):
                    pts[k] = p
                    break
        return pts

    seeds = sample(n_seeds)
    for attempt in range(2):
        d_min = np.inf
        if n_seeds > 1:
            from scipy.spatial import cKDTree

            d, _ = cKDTree(seeds).query(seeds, k=2)
            d_min = d[:, 1].min()
        if d_min > 1e-12 * scale:
            break
        if attempt == 1:
            raise MeshError("coincident Voronoi seeds persisted after perturbation")
        seeds = seeds + rng.normal(scale=1e-9 * scale, size=seeds.shape)

    for _ in range(lloyd_iters):
        cells = _clipped_voronoi(seeds, bbox)
        new_seeds = np.empty_like(seeds)
        for i, cell in enumerate(cells):
            pieces = _piece_list(cell, lshape)
            if not pieces:
                new_seeds[i] = seeds[i]
                continue
            c = _pieces_centroid(pieces)
            if lshape and c[0] < 0.0 and c[1] < 0.0:
                areas = [abs(_signed_area(p)) for p in pieces]
                big = pieces[int(np.argmax(areas))]
                c = _centroid(big, _signed_area(big))
            new_seeds[i] = c
        seeds = new_seeds

    cells = _clipped_voronoi(seeds, bbox)
    polygons = []
    for cell in cells:
        polygons.extend(_piece_list(cell, lshape))

    all_pts = np.vstack(polygons)
    merge_tol = 1e-9 * scale
    merged, index_map = _merge_vertices(all_pts, merge_tol)
    loops = []
    offset = 0
    for poly in polygons:
        ids = index_map[offset:offset + len(poly)]
        offset += len(poly)
        loop = [int(ids[0])]
        for v in ids[1:]:
            if int(v) != loop[-1]:
                loop.append(int(v))
        while len(loop) > 1 and loop[0] == loop[-1]:
            loop.pop()
        if len(loop) < 3:
            raise MeshError("degenerate Voronoi cell after vertex merge")
        if _signed_area(merged[loop]) < 0.0:
            loop.reverse()
        loops.append(loop)

    loops = _insert_hanging(merged, loops, merge_tol)
    used = sorted({v for loop in loops for v in loop})
    remap = {v: k for k, v in enumerate(used)}
    coords = merged[used]
    loops = [[remap[v] for v in loop] for loop in loops]
    mesh = PolyMesh.from_polygons(coords, loops)

    domain_area = (x1 - x0) * (y1 - y0) - (1.0 if lshape else 0.0)
    if abs(mesh.total_area() - domain_area) > 1e-10 * domain_area:
        raise MeshError("Voronoi cells do not tile the domain")
    return mesh


# -- refinement -------------------------------------------------------------


def subtriangulate(mesh: PolyMesh, element_id: int) -> SubTriangulation:
    return mesh.subtriangulate(element_id)


def refine_elements(mesh: PolyMesh, marked) -> RefinementResult:
    """Refine the marked elements by the barycenter/straight-edge-midpoint rule.

    Each marked element is replaced by one "quadrilateral" child per straight
    edge.  Midpoints are taken of whole straight edges; if a midpoint falls in
    the interior of a mesh edge the edge is split, and all elements sharing it
    absorb the new vertex as a hanging node.  Returns the new mesh together
    with the parent -> children map and the id map for untouched elements.
    """
    marked = sorted(set(int(m) for m in marked))
    for eid in marked:
        if eid < 0 or eid >= mesh.n_elements:
            raise MeshError(f"marked element {eid} out of range")
        if not _is_convex(mesh.element_coords(eid)):
            raise MeshError(f"element {eid} is not convex; cannot h-refine")

    # pass 1: per straight edge, find the midpoint vertex or the edge to split
    splits: dict[int, list[float]] = {}
    midpoint_plan: dict[tuple[int, int], tuple] = {}
    for eid in marked:
        elem = mesh.elements[eid]
        loop = elem.vertex_loop
        n = len(loop)
        for g, span in enumerate(elem.straight_spans):
            chain = [int(loop[span[0]])] + [int(loop[(k + 1) % n]) for k in span]
            pa = mesh.vertices[chain[0]]
            pb = mesh.vertices[chain[-1]]
            mid = 0.5 * (pa + pb)
            tol = 1e-12 * elem.diameter
            hit = None
            for v in chain:
                if abs(mesh.vertices[v][0] - mid[0]) <= tol and \
                        abs(mesh.vertices[v][1] - mid[1]) <= tol:
                    hit = v
                    break
            if hit is not None:
                midpoint_plan[(eid, g)] = ("vertex", hit)
                continue
            placed = False
            for j, pos in enumerate(span):
                u = mesh.vertices[chain[j]]
                w = mesh.vertices[chain[j + 1]]
                seg = w - u
                t = float((mid - u) @ seg / (seg @ seg))
                if -1e-12 < t < 1.0 + 1e-12 and 0.0 < t < 1.0:
                    edge_id = int(elem.edge_loop[pos])
                    edge = mesh.edges[edge_id]
                    t_canon = t if chain[j] == edge.v0 else 1.0 - t
                    splits.setdefault(edge_id, []).append(t_canon)
                    midpoint_plan[(eid, g)] = ("edge", edge_id, t_canon)
                    placed = True
                    break
            if not placed:
                raise MeshError(f"element {eid}: straight-edge midpoint not located")

    # pass 2: create split vertices (dedup per edge) and barycenters
    new_coords = [mesh.vertices]
    next_vid = mesh.n_vertices
    split_vid: dict[tuple[int, int], int] = {}
    edge_params: dict[int, list[tuple[float, int]]] = {}
    for edge_id in sorted(splits):
        ts = sorted(splits[edge_id])
        dedup: list[float] = []
        for t in ts:
            if not dedup or t - dedup[-1] > 1e-12:
                dedup.append(t)
        edge = mesh.edges[edge_id]
        pa = mesh.vertices[edge.v0]
        pb = mesh.vertices[edge.v1]
        entries = []
        for k, t in enumerate(dedup):
            vid = next_vid
            next_vid += 1
            new_coords.append((pa + t * (pb - pa))[None, :])
            split_vid[(edge_id, k)] = vid
            entries.append((t, vid))
        edge_params[edge_id] = entries

    center_vid: dict[int, int] = {}
    for eid in marked:
        center_vid[eid] = next_vid
        next_vid += 1
        new_coords.append(mesh.elements[eid].barycenter[None, :])
    coords = np.vstack(new_coords)

    def locate_split(edge_id: int, t: float) -> int:
        for tt, vid in edge_params[edge_id]:
            if abs(tt - t) <= 1e-12:
                return vid
        raise MeshError("internal refinement bookkeeping error")

    def edge_chain(edge_id: int, start_vertex: int) -> list[int]:
        """Vertices along an edge from `start_vertex`, including both ends."""
        edge = mesh.edges[edge_id]
        inner = [vid for _, vid in edge_params.get(edge_id, [])]
        if start_vertex == edge.v0:
            return [edge.v0] + inner + [edge.v1]
        return [edge.v1] + inner[::-1] + [edge.v0]

    # pass 3: rebuild loops
    new_loops: list[list[int]] = []
    parent_children: dict[int, list[int]] = {}
    carried: dict[int, int] = {}
    marked_set = set(marked)
    for elem in mesh.elements:
        loop = elem.vertex_loop
        n = len(loop)
        if elem.id not in marked_set:
            out: list[int] = []
            for k in range(n):
                chain = edge_chain(int(elem.edge_loop[k]), int(loop[k]))
                out.extend(chain[:-1])
            carried[elem.id] = len(new_loops)
            new_loops.append(out)
            continue

        # refined vertex chains per straight edge, each from corner to corner
        group_chains: list[list[int]] = []
        mid_index: list[int] = []
        for g, span in enumerate(elem.straight_spans):
            chain: list[int] = []
            for j, pos in enumerate(span):
                sub = edge_chain(int(elem.edge_loop[pos]), int(loop[pos]))
                chain.extend(sub if j == len(span) - 1 else sub[:-1])
            plan = midpoint_plan[(elem.id, g)]
            if plan[0] == "vertex":
                mid_v = plan[1]
            else:
                mid_v = locate_split(plan[1], plan[2])
            if mid_v not in chain:
                raise MeshError("straight-edge midpoint missing from refined chain")
            group_chains.append(chain)
            mid_index.append(chain.index(mid_v))

        children = []
        n_groups = len(group_chains)
        center = center_vid[elem.id]
        for g in range(n_groups):
            nxt = (g + 1) % n_groups
            child = group_chains[g][mid_index[g]:]
            child.extend(group_chains[nxt][1:mid_index[nxt] + 1])
            child.append(center)
            children.append(len(new_loops))
            new_loops.append(child)
        parent_children[elem.id] = children

    new_mesh = PolyMesh.from_polygons(coords, new_loops)

    # refinement postconditions
    for eid, kids in parent_children.items():
        parent = mesh.elements[eid]
        kid_area = sum(new_mesh.elements[k].area for k in kids)
        if abs(kid_area - parent.area) > 1e-12 * parent.area:
            raise MeshError(f"element {eid}: children do not tile the parent")
        if len(kids) != parent.n_straight:
            raise MeshError(f"element {eid}: child count differs from straight-edge count")
        for k in kids:
            if new_mesh.elements[k].area <= 0.0:
                raise MeshError(f"element {eid}: zero-area child")
            if not _is_convex(new_mesh.element_coords(k)):
                raise MeshError(f"element {eid}: nonconvex child {k}")

    old_boundary = [e for e in mesh.edges if e.is_boundary]
    for e in new_mesh.edges:
        if not e.is_boundary:
            continue
        mid = 0.5 * (new_mesh.vertices[e.v0] + new_mesh.vertices[e.v1])
        ok = False
        for old in old_boundary:
            pa = mesh.vertices[old.v0]
            pb = mesh.vertices[old.v1]
            seg = pb - pa
            L2 = seg @ seg
            t = float((mid - pa) @ seg / L2)
            if -1e-9 <= t <= 1.0 + 1e-9:
                d = abs((mid[0] - pa[0]) * seg[1] - (mid[1] - pa[1]) * seg[0]) / np.sqrt(L2)
                if d <= 1e-9 * np.sqrt(L2):
                    ok = True
                    break
        if not ok:
            raise MeshError("refinement broke conformity: interior edge flagged as boundary")

    return RefinementResult(mesh=new_mesh, parent_children=parent_children, carried=carried)


# -- validation -------------------------------------------------------------


def validate(mesh: PolyMesh) -> MeshQuality:
    """Topological consistency checks plus per-element quality measures.

    Small edges and modest star-shapedness are reported, never fatal; only
    topological inconsistencies raise.
    """
    incidence: dict[int, list[int]] = {e.id: [] for e in mesh.edges}
    for elem in mesh.elements:
        coords = mesh.element_coords(elem.id)
        if _signed_area(coords) <= 0.0:
            raise MeshError(f"element {elem.id}: orientation flipped")
        for eid in elem.edge_loop:
            incidence[int(eid)].append(elem.id)
    for e in mesh.edges:
        found = incidence[e.id]
        if len(found) == 0:
            raise MeshError(f"dangling edge {e.id}")
        if sorted(found) != sorted(e.elems):
            raise MeshError(f"edge {e.id}: stored incidence disagrees with element loops")
        if not e.is_boundary and len(found) != 2:
            raise MeshError(f"internal edge {e.id} with {len(found)} incident elements")
        if abs(np.linalg.norm(e.unit_normal) - 1.0) > 1e-12:
            raise MeshError(f"edge {e.id}: normal not unit length")

    nel = mesh.n_elements
    inr = np.empty(nel)
    mer = np.empty(nel)
    cvx = np.empty(nel, dtype=bool)
    ang = np.empty(nel)
    for elem in mesh.elements:
        coords = mesh.element_coords(elem.id)
        n = len(coords)
        vec = np.roll(coords, -1, axis=0) - coords
        lens = np.linalg.norm(vec, axis=1)
        mer[elem.id] = lens.min() / elem.diameter
        cvx[elem.id] = _is_convex(coords)
        # distance from the barycenter to each boundary segment
        c = elem.barycenter
        dmin = np.inf
        for k in range(n):
            seg = vec[k]
            t = np.clip((c - coords[k]) @ seg / (seg @ seg), 0.0, 1.0)
            dmin = min(dmin, float(np.linalg.norm(coords[k] + t * seg - c)))
        inr[elem.id] = dmin / elem.diameter
        turns = np.empty(n)
        for k in range(n):
            u = vec[k - 1]
            v = vec[k]
            turns[k] = np.arctan2(u[0] * v[1] - u[1] * v[0], u @ v)
        ang[elem.id] = float(np.max(np.pi - turns))
    return MeshQuality(inradius_ratio=inr, min_edge_ratio=mer, convex=cvx,
                       max_interior_angle=ang)
