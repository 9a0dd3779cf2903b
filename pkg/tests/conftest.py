import numpy as np
import pytest

from hpvem import mesh as meshmod
from hpvem.mesh import PolyMesh


def single_element_mesh(coords) -> PolyMesh:
    coords = np.asarray(coords, dtype=float)
    return PolyMesh.from_polygons(coords, [list(range(len(coords)))])


def regular_polygon(n_sides: int, radius: float = 1.0, phase: float = 0.0,
                    center=(0.0, 0.0)) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(n_sides) / n_sides + phase
    return np.column_stack([center[0] + radius * np.cos(angles),
                            center[1] + radius * np.sin(angles)])


@pytest.fixture(scope="session")
def unit_square_mesh():
    return meshmod.build_cartesian(1, 1)


@pytest.fixture(scope="session")
def cartesian_4x4():
    return meshmod.build_cartesian(4, 4)


@pytest.fixture(scope="session")
def voronoi_32():
    return meshmod.build_voronoi(32, 20, 42, (0.0, 0.0, 1.0, 1.0))


@pytest.fixture(scope="session")
def test_shapes():
    """Five element shapes used by the projector suite.

    A unit square, a stretched rectangle, a regular pentagon and hexagon,
    and one Lloyd-relaxed Voronoi cell extracted as a standalone mesh."""
    shapes = {
        "square": single_element_mesh([[0, 0], [1, 0], [1, 1], [0, 1]]),
        "rectangle": single_element_mesh([[0, 0], [2.5, 0], [2.5, 0.5], [0, 0.5]]),
        "pentagon": single_element_mesh(regular_polygon(5, phase=0.2)),
        "hexagon": single_element_mesh(regular_polygon(6, radius=0.5)),
    }
    voro = meshmod.build_voronoi(12, 3, 5, (0.0, 0.0, 1.0, 1.0))
    interior = [e.id for e in voro.elements
                if not any(voro.boundary_vertex[v] for v in e.vertex_loop)]
    eid = interior[0] if interior else 0
    loop = voro.elements[eid].vertex_loop
    local = {int(v): k for k, v in enumerate(loop)}
    shapes["voronoi_cell"] = PolyMesh.from_polygons(
        voro.vertices[loop], [[local[int(v)] for v in loop]])
    return shapes
