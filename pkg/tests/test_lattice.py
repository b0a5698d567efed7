import numpy as np
import pytest

from qclat.lattice import (
    Box, CellBox, Disk, DiscreteLattice, LatticeError, Polygon, Prism,
    TopologyError, build_topology, instantiate_region,
)

from conftest import CATALOG_FACTS
from reference_models import (
    beam_table_pairs, brute_force_beam_pairs, convex_polygon_contains,
    node_degrees,
)


# ---------------------------------------------------------------------------
# catalog contents
# ---------------------------------------------------------------------------

def test_catalog_names(catalog):
    assert sorted(catalog) == sorted(CATALOG_FACTS)


def test_catalog_counts(topology_name, topology):
    dim, n_nodes, n_int, n_nb, degree = CATALOG_FACTS[topology_name]
    assert topology.dimension == dim
    assert topology.n_nodes == n_nodes
    assert topology.n_internal == n_int
    assert topology.n_neighbor == n_nb
    assert np.all(node_degrees(topology) == degree)


def test_catalog_unit_strut(topology):
    # catalog entries are stored at unit strut length and uniform struts
    np.testing.assert_allclose(topology.beam_lengths, 1.0, rtol=1e-12)
    np.testing.assert_allclose(
        np.linalg.norm(topology.beam_axes, axis=1), 1.0, rtol=1e-12)
    assert topology.uc_size == pytest.approx(1.0)


def test_strut_scaling(topology_name):
    base = build_topology(topology_name, strut_length=1.0)
    scaled = build_topology(topology_name, strut_length=2.5)
    np.testing.assert_allclose(scaled.basis, 2.5 * base.basis)
    np.testing.assert_allclose(scaled.beam_lengths, 2.5, rtol=1e-12)
    np.testing.assert_allclose(
        scaled.cell_volume, 2.5 ** base.dimension * base.cell_volume)
    assert scaled.uc_size == pytest.approx(2.5)


def test_stencil_weights_cover_each_beam_once(topology):
    # summing stencil weights over one cell of an infinite tiling must count
    # every beam exactly once
    total = topology.stencil_weight.sum()
    assert total == pytest.approx(topology.n_internal + topology.n_neighbor)
    for b in range(topology.n_beams):
        rows = topology.stencil_beam == b
        assert topology.stencil_weight[rows].sum() == pytest.approx(1.0)


def test_stencil_crossing_rows_are_paired(topology):
    topo = topology
    for k, (i, off, j) in enumerate(topo.neighbor_beams):
        b = topo.n_internal + k
        rows = np.nonzero(topo.stencil_beam == b)[0]
        assert len(rows) == 2
        owned = rows[topo.stencil_owned[rows]][0]
        mirrored = rows[~topo.stencil_owned[rows]][0]
        assert topo.stencil_i[owned] == i and topo.stencil_j[owned] == j
        assert topo.stencil_i[mirrored] == j and topo.stencil_j[mirrored] == i
        np.testing.assert_array_equal(
            topo.stencil_off[mirrored], -topo.stencil_off[owned])


# ---------------------------------------------------------------------------
# tiling against brute-force distance matching
# ---------------------------------------------------------------------------

def test_finite_block_matches_distance_search(topology):
    hi = (2,) * topology.dimension if topology.dimension == 2 else (1,) * 3
    lattice = instantiate_region(topology, CellBox((0,) * topology.dimension, hi))
    assert beam_table_pairs(lattice) == brute_force_beam_pairs(lattice)


def test_larger_planar_block_matches_distance_search():
    topo = build_topology("star", strut_length=1.0)
    lattice = instantiate_region(topo, CellBox((0, 0), (3, 3)))
    assert beam_table_pairs(lattice) == brute_force_beam_pairs(lattice)


def test_beam_table_counts_shared_beams_once(topology):
    lattice = instantiate_region(
        topology, CellBox((0,) * topology.dimension, (2,) * topology.dimension))
    ca, na, cb, nb, bid, alive = lattice.beam_table()
    keys = set()
    for row in zip(ca, na, cb, nb, bid):
        assert row not in keys
        keys.add(row)
    # interior-cell beam count per cell equals the stencil weight total
    n = lattice.n_cells
    assert len(ca) <= n * (topology.n_internal + topology.n_neighbor)


# ---------------------------------------------------------------------------
# region instantiation
# ---------------------------------------------------------------------------

def test_square_box_counts():
    topo = build_topology("square", strut_length=1.0)
    lattice = instantiate_region(topo, Box((-0.25, -0.25), (4.25, 4.25)))
    assert lattice.n_cells == 25
    assert lattice.n_active_nodes() == 25


def test_octet_cellbox_counts():
    topo = build_topology("octet", strut_length=1.0)
    lattice = instantiate_region(topo, CellBox((0, 0, 0), (2, 2, 2)))
    assert lattice.n_cells == 27
    assert lattice.n_active_nodes() == 27 * 4


def test_disk_region_matches_predicate():
    topo = build_topology("triangular", strut_length=1.0)
    region = Disk((0.0, 0.0), 3.0)
    lattice = instantiate_region(topo, region)
    centers = lattice.centers()
    assert np.all(np.linalg.norm(centers, axis=1) <= 3.0 + 1e-9)
    # no anchor satisfying the predicate may be missing
    for c1 in range(-5, 6):
        for c2 in range(-5, 6):
            inside = np.linalg.norm(np.array([c1, c2]) @ topo.basis) <= 3.0
            assert lattice.contains((c1, c2)) == inside


def test_polygon_region_against_convex_oracle():
    # tapered panel outline, shifted so no anchor falls on an edge
    verts = np.array([[0.0, 0.0], [12.0, 11.0], [12.0, 15.0], [0.0, 11.0]])
    verts += [-0.31, -0.23]
    topo = build_topology("square", strut_length=1.0)
    lattice = instantiate_region(topo, Polygon(verts))
    expected = {
        (x, y)
        for x in range(-2, 15) for y in range(-2, 17)
        if convex_polygon_contains(verts, (x, y))
    }
    assert {tuple(c) for c in lattice.cells} == expected


def test_prism_region_extrudes_a_section():
    topo = build_topology("octet", strut_length=1.0)
    region = Prism(Box((-0.1, -0.1), (2.1, 2.1)), -0.1, 1.1)
    lattice = instantiate_region(topo, region)
    # basis is sqrt(2) I at unit strut, so anchors sit on a sqrt(2) grid and
    # only k = 0 fits under z = 1.1
    expected = {(i, j, 0) for i in range(2) for j in range(2)}
    assert {tuple(c) for c in lattice.cells} == expected


def test_cellbox_exclusion():
    topo = build_topology("square", strut_length=1.0)
    region = CellBox((0, 0), (2, 2), exclude={(1, 1)})
    lattice = instantiate_region(topo, region)
    assert lattice.n_cells == 8
    assert not lattice.contains((1, 1))


def test_origin_shift():
    topo = build_topology("square", strut_length=1.0)
    lattice = instantiate_region(topo, Box((9.9, 19.9), (12.1, 22.1)),
                                 origin=(10.0, 20.0))
    assert lattice.n_cells == 9
    np.testing.assert_allclose(lattice.uc_center((0, 0)), [10.0, 20.0])


def test_empty_region_rejected():
    topo = build_topology("square", strut_length=1.0)
    with pytest.raises(LatticeError):
        instantiate_region(topo, Box((0.2, 0.2), (0.8, 0.8)))


# ---------------------------------------------------------------------------
# lattice queries, removal flags, cell dropping
# ---------------------------------------------------------------------------

def test_cells_are_lexicographically_sorted(topology):
    lattice = instantiate_region(
        topology, CellBox((0,) * topology.dimension, (2,) * topology.dimension))
    cells = [tuple(c) for c in lattice.cells]
    assert cells == sorted(cells)


def test_uc_center_arithmetic():
    topo = build_topology("hexagonal", strut_length=1.0)
    lattice = instantiate_region(topo, CellBox((0, 0), (4, 4)))
    np.testing.assert_allclose(
        lattice.uc_center((2, 3)), 2 * topo.basis[0] + 3 * topo.basis[1])


def test_neighbor_cells_interior_and_edge():
    topo = build_topology("square", strut_length=1.0)
    lattice = instantiate_region(topo, CellBox((0, 0), (2, 2)))
    assert sorted(lattice.neighbor_cells((1, 1))) == [(0, 1), (1, 0), (1, 2), (2, 1)]
    assert sorted(lattice.neighbor_cells((0, 0))) == [(0, 1), (1, 0)]
    with pytest.raises(LatticeError):
        lattice.neighbor_cells((5, 5))


def test_dangling_beams_dropped():
    topo = build_topology("square", strut_length=1.0)
    lattice = instantiate_region(topo, CellBox((0, 0), (1, 0)))
    ca, na, cb, nb, bid, alive = lattice.beam_table()
    assert len(ca) == 1 and alive.all()
    assert lattice.n_active_nodes() == 2


def test_removal_is_shared_between_sides():
    topo = build_topology("square", strut_length=1.0)
    lattice = instantiate_region(topo, CellBox((0, 0), (1, 0)))
    bid = next(b for b in range(topo.n_beams)
               if topo.beam_endpoints(b)[1] == (1, 0))
    assert lattice.beam_exists((0, 0), bid)
    assert lattice.beam_exists((1, 0), bid, reversed_side=True)
    lattice.remove_beam((1, 0), bid, reversed_side=True)
    assert lattice.is_removed((0, 0), bid)
    assert not lattice.beam_exists((0, 0), bid)
    assert not lattice.beam_exists((1, 0), bid, reversed_side=True)
    _, _, _, _, _, alive = lattice.beam_table()
    assert not alive.any()
    assert lattice.n_active_nodes() == 0


def test_beam_exists_handles_missing_remote_cell():
    topo = build_topology("square", strut_length=1.0)
    lattice = instantiate_region(topo, CellBox((0, 0), (1, 0)))
    bid_y = next(b for b in range(topo.n_beams)
                 if topo.beam_endpoints(b)[1] == (0, 1))
    assert not lattice.beam_exists((0, 0), bid_y)
    assert not lattice.beam_exists((3, 3), 0)


def test_drop_cell_reindexes_removal_flags():
    topo = build_topology("square", strut_length=1.0)
    lattice = instantiate_region(topo, CellBox((0, 0), (2, 0)))
    bid = next(b for b in range(topo.n_beams)
               if topo.beam_endpoints(b)[1] == (1, 0))
    lattice.remove_beam((1, 0), bid)     # beam (1,0)-(2,0), owned by (1,0)
    lattice.drop_cell((0, 0))
    assert lattice.n_cells == 2
    assert lattice.is_removed((1, 0), bid)
    assert not lattice.beam_exists((1, 0), bid)
    with pytest.raises(LatticeError):
        lattice.drop_cell((0, 0))


def test_duplicate_cells_rejected():
    topo = build_topology("square", strut_length=1.0)
    with pytest.raises(LatticeError):
        DiscreteLattice(topo, [(0, 0), (0, 0)])


# ---------------------------------------------------------------------------
# topology validation errors
# ---------------------------------------------------------------------------

def _minimal_doc(**overrides):
    doc = {
        "name": "probe", "dimension": 2, "basis": [[1.0, 0.0], [0.0, 1.0]],
        "nodes": [[0.0, 0.0]], "internal_beams": [],
        "neighbor_beams": [[0, [1, 0], 0], [0, [0, 1], 0]],
    }
    doc.update(overrides)
    return doc


def test_unknown_name_rejected():
    with pytest.raises(TopologyError, match="unknown topology"):
        build_topology("kagome")


def test_singular_basis_rejected():
    with pytest.raises(TopologyError, match="linearly dependent"):
        build_topology(_minimal_doc(basis=[[1.0, 0.0], [2.0, 0.0]]))


def test_coincident_nodes_rejected():
    with pytest.raises(TopologyError, match="coincide"):
        build_topology(_minimal_doc(nodes=[[0.0, 0.0], [1.0, 1.0]]))


def test_reverse_duplicate_neighbor_beam_rejected():
    doc = _minimal_doc(neighbor_beams=[[0, [1, 0], 0], [0, [-1, 0], 0]])
    with pytest.raises(TopologyError, match="once"):
        build_topology(doc)


def test_zero_offset_neighbor_beam_rejected():
    with pytest.raises(TopologyError, match="zero offset"):
        build_topology(_minimal_doc(neighbor_beams=[[0, [0, 0], 0]]))


def test_self_loop_internal_beam_rejected():
    doc = _minimal_doc(nodes=[[0.0, 0.0], [0.5, 0.5]],
                       internal_beams=[[1, 1]])
    with pytest.raises(TopologyError, match="itself"):
        build_topology(doc)


def test_declared_dimension_must_match():
    with pytest.raises(TopologyError, match="dimension"):
        build_topology(_minimal_doc(dimension=3))


def test_missing_field_rejected():
    doc = _minimal_doc()
    del doc["nodes"]
    with pytest.raises(TopologyError, match="missing"):
        build_topology(doc)


def test_nonpositive_strut_rejected():
    with pytest.raises(TopologyError, match="strut_length"):
        build_topology("square", strut_length=0.0)


def test_cellbox_dimension_mismatch():
    topo = build_topology("square", strut_length=1.0)
    with pytest.raises(LatticeError, match="dimension"):
        instantiate_region(topo, CellBox((0, 0, 0), (1, 1, 1)))
