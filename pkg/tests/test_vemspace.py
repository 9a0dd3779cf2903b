import numpy as np
import pytest

from hpvem import mesh as mm, vemspace as vs
from hpvem.polyquad import n_poly_2d

from conftest import regular_polygon, single_element_mesh


def test_edge_degree_is_max_of_neighbours():
    m = mm.build_cartesian(2, 1)
    deg = vs.assign_degrees(m, [2, 4])
    shared = [e for e in m.edges if not e.is_boundary]
    assert len(shared) == 1
    assert deg.p_edge[shared[0].id] == 4
    for e in m.edges:
        if e.is_boundary:
            assert deg.p_edge[e.id] == deg.p_elem[e.elems[0]]


def test_uniform_degree_map():
    m = mm.build_cartesian(2, 2)
    deg = vs.assign_degrees(m, np.full(4, 3))
    assert np.all(deg.p_edge == 3)
    assert np.all(deg.p_vertex == 3)


def test_vertex_degree_is_max_of_incident():
    m = mm.build_lshape(1)  # three squares meeting at the origin
    deg = vs.assign_degrees(m, [2, 3, 4])
    origin = int(np.nonzero(np.all(np.abs(m.vertices) < 1e-14, axis=1))[0][0])
    assert deg.p_vertex[origin] == 4


def test_degree_gap_warning():
    m = mm.build_cartesian(2, 1)
    with pytest.warns(RuntimeWarning):
        vs.assign_degrees(m, [2, 6])
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        vs.assign_degrees(m, [2, 4])  # gap 2 is fine by default


def test_degrees_must_be_positive():
    m = mm.build_cartesian(1, 1)
    with pytest.raises(ValueError):
        vs.assign_degrees(m, [0])


# -- dof counting ------------------------------------------------------------


def test_local_count_square_p2(unit_square_mesh):
    deg = vs.assign_degrees(unit_square_mesh, [2])
    dm = vs.build_dofmap(unit_square_mesh, deg)
    assert dm.element(0).n_local == 4 + 4 * 1 + 1 == 9


def test_global_count_2x2_p1():
    m = mm.build_cartesian(2, 2)
    dm = vs.build_dofmap(m, vs.assign_degrees(m, np.full(4, 1)))
    assert dm.n_dofs == 9


def test_local_count_pentagon_p3():
    m = single_element_mesh(regular_polygon(5))
    dm = vs.build_dofmap(m, vs.assign_degrees(m, [3]))
    assert dm.element(0).n_local == 5 + 5 * 2 + 3 == 18


def test_global_count_identity(voronoi_32):
    rng = np.random.default_rng(4)
    p = rng.integers(2, 5, size=voronoi_32.n_elements)
    deg = vs.assign_degrees(voronoi_32, p)
    dm = vs.build_dofmap(voronoi_32, deg)
    expected = voronoi_32.n_vertices \
        + int(np.sum(deg.p_edge - 1)) \
        + int(sum(n_poly_2d(q - 2) for q in deg.p_elem))
    assert dm.n_dofs == expected


def test_conforming_coupling_across_shared_edge():
    m = mm.build_cartesian(2, 1)
    deg = vs.assign_degrees(m, [3, 3])
    dm = vs.build_dofmap(m, deg)
    shared = [e for e in m.edges if not e.is_boundary][0]
    views = []
    for eid in shared.elems:
        edofs = dm.element(eid)
        k = list(edofs.edge_ids).index(shared.id)
        block = edofs.global_ids[edofs.edge_slices[k]]
        if not edofs.edge_forward[k]:
            block = block[::-1]
        views.append(block)
    # both elements address the same globals in the canonical direction
    assert np.array_equal(views[0], views[1])


def test_boundary_flags():
    m = mm.build_cartesian(2, 2)
    deg = vs.assign_degrees(m, np.full(4, 2))
    dm = vs.build_dofmap(m, deg)
    center = int(np.nonzero(np.all(np.abs(m.vertices - 0.5) < 1e-14, axis=1))[0][0])
    assert not dm.boundary[center]
    assert dm.boundary[:m.n_vertices].sum() == 8
    # moment dofs are never boundary dofs
    assert not dm.boundary[dm.moment_offset[0]:].any()


# -- boundary interpolation --------------------------------------------------


def test_interpolate_boundary_zero(cartesian_4x4):
    deg = vs.assign_degrees(cartesian_4x4, np.full(16, 3))
    dm = vs.build_dofmap(cartesian_4x4, deg)
    values = vs.interpolate_boundary(lambda x, y: 0.0 * x, cartesian_4x4, deg, dm)
    assert np.all(values == 0.0)


def test_interpolate_boundary_linear_exact(cartesian_4x4):
    deg = vs.assign_degrees(cartesian_4x4, np.full(16, 3))
    dm = vs.build_dofmap(cartesian_4x4, deg)
    values = vs.interpolate_boundary(lambda x, y: x + y, cartesian_4x4, deg, dm)
    for e in cartesian_4x4.edges:
        if not e.is_boundary:
            continue
        nodes = dm.edge_node_coords(e.id)
        got = values[dm.edge_offset[e.id]:dm.edge_offset[e.id + 1]]
        assert np.abs(got - (nodes[:, 0] + nodes[:, 1])).max() < 1e-14


def test_interpolate_boundary_p1_midpoint_error():
    # g = x^2 with p_e = 1: endpoint interpolation only; at the edge center
    # the linear interpolant misses by (edge length)^2 / 4
    m = mm.build_cartesian(1, 1, (0.0, 0.0, 2.0, 1.0))
    deg = vs.assign_degrees(m, [1])
    dm = vs.build_dofmap(m, deg)
    values = vs.interpolate_boundary(lambda x, y: x**2, m, deg, dm)
    bottom = [e for e in m.edges
              if np.allclose(m.vertices[[e.v0, e.v1], 1], 0.0)][0]
    xa, xb = sorted(m.vertices[[bottom.v0, bottom.v1], 0])
    mid = 0.5 * (xa + xb)
    interp_mid = 0.5 * (values[bottom.v0] + values[bottom.v1])
    assert abs(interp_mid - mid**2 - (xb - xa) ** 2 / 4.0) < 1e-14


def test_unisolvence_conditioning_up_to_p10(test_shapes):
    from hpvem import projectors as pj

    for name, mesh in test_shapes.items():
        for p in (6, 10):
            deg = vs.assign_degrees(mesh, [p])
            dm = vs.build_dofmap(mesh, deg)
            ops = pj.compute_local_operators(mesh, deg, dm, 0)
            assert np.isfinite(ops.condition), (name, p)
            assert ops.condition < 1e12, (name, p)
