"""Periodic beam-lattice topologies and finite lattice instantiation.

A topology is a unit cell: Bravais basis, in-cell nodes (fractional
coordinates), beams inside the cell and beams reaching into neighbor
cells.  A :class:`DiscreteLattice` is a finite set of occupied cells
(integer Bravais coordinates) obtained by clipping the infinite tiling
against a region predicate; beams with a missing end cell are dropped
entirely rather than kept as stubs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import yaml


class TopologyError(ValueError):
    pass


class LatticeError(ValueError):
    pass


_CATALOG_PATH = os.path.join(os.path.dirname(__file__), "data", "topologies.yaml")
_SCHEMA_VERSION = 1


def load_catalog(path=None):
    """Read the topology catalog file and return {name: raw document}."""
    with open(path or _CATALOG_PATH) as fh:
        docs = [d for d in yaml.safe_load_all(fh) if d is not None]
    catalog = {}
    for doc in docs:
        if doc.get("schema") != _SCHEMA_VERSION:
            raise TopologyError(
                f"catalog document {doc.get('name')!r} has schema "
                f"{doc.get('schema')!r}, expected {_SCHEMA_VERSION}"
            )
        catalog[doc["name"]] = doc
    return catalog


class UnitCellTopology:
    """Validated unit-cell topology.

    Attributes
    ----------
    basis : (d, d) array
        Row j is the Bravais vector a_j.
    nodes : (n_nodes, d) array
        In-cell node offsets in fractional (basis) coordinates.
    internal_beams : (n_int, 2) int array
        Node index pairs connected inside one cell.
    neighbor_beams : list of (i, offset, j)
        Canonical shared beams: node i of cell c to node j of cell
        c + offset, each physical beam stored once.
    """

    def __init__(self, name, basis, nodes, internal_beams, neighbor_beams,
                 uc_size=None):
        self.name = name
        self.basis = np.asarray(basis, dtype=float)
        self.dimension = self.basis.shape[0]
        self.nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
        self.internal_beams = (
            np.asarray(internal_beams, dtype=int).reshape(-1, 2)
        )
        self.neighbor_beams = [
            (int(i), tuple(int(o) for o in off), int(j))
            for (i, off, j) in neighbor_beams
        ]
        self.n_nodes = len(self.nodes)
        self.uc_size = float(uc_size) if uc_size is not None else None
        self._validate()
        self._build_tables()

    # -- validation ---------------------------------------------------------

    def _validate(self):
        d = self.dimension
        if self.basis.shape != (d, d):
            raise TopologyError("basis must be square")
        if abs(np.linalg.det(self.basis)) < 1e-12:
            raise TopologyError("basis vectors are linearly dependent")
        if self.nodes.shape[1] != d:
            raise TopologyError("node offsets must match dimension")
        # every node must belong to exactly one cell: offsets distinct mod 1
        wrapped = np.mod(self.nodes + 1e-9, 1.0)
        for a in range(self.n_nodes):
            for b in range(a + 1, self.n_nodes):
                if np.all(np.abs(wrapped[a] - wrapped[b]) < 1e-8):
                    raise TopologyError(
                        f"nodes {a} and {b} coincide modulo the lattice"
                    )
        seen = set()
        for i, j in self.internal_beams:
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise TopologyError("internal beam references unknown node")
            if i == j:
                raise TopologyError("internal beam connects a node to itself")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise TopologyError(f"duplicate internal beam {key}")
            seen.add(key)
        seen = set()
        for i, off, j in self.neighbor_beams:
            if len(off) != d:
                raise TopologyError("neighbor offset has wrong dimension")
            if all(o == 0 for o in off):
                raise TopologyError("neighbor beam with zero offset")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise TopologyError("neighbor beam references unknown node")
            rev = (j, tuple(-o for o in off), i)
            if rev in seen:
                raise TopologyError(
                    f"neighbor beam {(i, off, j)} duplicates the reverse "
                    f"image of {rev}; store each shared beam once"
                )
            if (i, off, j) in seen:
                raise TopologyError(f"duplicate neighbor beam {(i, off, j)}")
            seen.add((i, off, j))

    # -- derived tables -------------------------------------------------------

    def _build_tables(self):
        d = self.dimension
        self.node_offsets = self.nodes @ self.basis        # physical, per cell
        self.cell_volume = abs(np.linalg.det(self.basis))
        self.n_internal = len(self.internal_beams)
        self.n_neighbor = len(self.neighbor_beams)
        self.n_beams = self.n_internal + self.n_neighbor   # canonical count

        # canonical beam geometry: internal first, then neighbor beams
        axes = []
        lengths = []
        for i, j in self.internal_beams:
            v = self.node_offsets[j] - self.node_offsets[i]
            lengths.append(np.linalg.norm(v))
            axes.append(v / np.linalg.norm(v))
        for i, off, j in self.neighbor_beams:
            v = self.node_offsets[j] + np.asarray(off) @ self.basis - self.node_offsets[i]
            lengths.append(np.linalg.norm(v))
            axes.append(v / np.linalg.norm(v))
        self.beam_lengths = np.array(lengths) if lengths else np.zeros(0)
        self.beam_axes = np.array(axes) if axes else np.zeros((0, d))
        self.total_strut_length = float(self.beam_lengths.sum())
        if self.uc_size is None:
            self.uc_size = float(self.beam_lengths.min()) if self.n_beams else 1.0

        # full per-cell energy stencil: internal beams once (weight 1),
        # every crossing beam from both sides (weight 1/2 each); the half
        # weight avoids double counting when summing over cells.
        st_i, st_j, st_off, st_w, st_beam, st_own = [], [], [], [], [], []
        for k, (i, j) in enumerate(self.internal_beams):
            st_i.append(i)
            st_j.append(j)
            st_off.append((0,) * d)
            st_w.append(1.0)
            st_beam.append(k)
            st_own.append(True)
        for k, (i, off, j) in enumerate(self.neighbor_beams):
            b = self.n_internal + k
            st_i.append(i)
            st_j.append(j)
            st_off.append(off)
            st_w.append(0.5)
            st_beam.append(b)
            st_own.append(True)
            st_i.append(j)
            st_j.append(i)
            st_off.append(tuple(-o for o in off))
            st_w.append(0.5)
            st_beam.append(b)
            st_own.append(False)
        self.stencil_i = np.array(st_i, dtype=int)
        self.stencil_j = np.array(st_j, dtype=int)
        self.stencil_off = np.array(st_off, dtype=int).reshape(-1, d)
        self.stencil_weight = np.array(st_w)
        self.stencil_beam = np.array(st_beam, dtype=int)
        self.stencil_owned = np.array(st_own, dtype=bool)
        self.n_stencil = len(st_i)

        offs = {tuple(o) for o in self.stencil_off if any(o)}
        self.neighbor_offsets = np.array(sorted(offs), dtype=int).reshape(-1, d)

    # -- queries -------------------------------------------------------------

    @property
    def dofs_per_node(self):
        # planar beams carry (u_x, u_y, theta); spatial ones (u, rotation vector)
        return 3 if self.dimension == 2 else 6

    def cell_center(self, cells):
        """Physical anchor position of Bravais coordinate(s) c: c @ basis."""
        return np.asarray(cells, dtype=float) @ self.basis

    def node_positions(self, cells):
        """Physical node positions, shape (..., n_nodes, d)."""
        anchors = self.cell_center(cells)
        return anchors[..., None, :] + self.node_offsets

    def beam_endpoints(self, beam_id):
        """(node_i, offset, node_j) of a canonical beam id."""
        if beam_id < self.n_internal:
            i, j = self.internal_beams[beam_id]
            return int(i), (0,) * self.dimension, int(j)
        i, off, j = self.neighbor_beams[beam_id - self.n_internal]
        return i, off, j


def build_topology(spec, strut_length=1.0, catalog_path=None):
    """Build a validated topology from a catalog name or an explicit document.

    Parameters
    ----------
    spec : str or dict
        Catalog entry name, or a dict with the catalog document fields.
    strut_length : float
        Target strut length; the catalog basis is scaled accordingly.
    """
    if isinstance(spec, str):
        catalog = load_catalog(catalog_path)
        if spec not in catalog:
            raise TopologyError(
                f"unknown topology {spec!r}; catalog has {sorted(catalog)}"
            )
        doc = catalog[spec]
    elif isinstance(spec, dict):
        doc = spec
    else:
        raise TopologyError(f"topology spec must be a name or dict, got {type(spec)}")
    required = {"name", "dimension", "basis", "nodes", "internal_beams", "neighbor_beams"}
    missing = required - set(doc)
    if missing:
        raise TopologyError(f"topology document missing fields {sorted(missing)}")
    if strut_length <= 0:
        raise TopologyError("strut_length must be positive")
    basis = np.asarray(doc["basis"], dtype=float) * strut_length
    topo = UnitCellTopology(
        doc["name"], basis, doc["nodes"], doc["internal_beams"],
        doc["neighbor_beams"], uc_size=doc.get("uc_size", strut_length),
    )
    if topo.dimension != int(doc["dimension"]):
        raise TopologyError("declared dimension does not match basis")
    return topo


# --------------------------------------------------------------------------
# region predicates (physical space unless noted)
# --------------------------------------------------------------------------

@dataclass
class Box:
    lo: tuple
    hi: tuple

    def contains(self, points):
        p = np.atleast_2d(points)
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        return np.all((p >= lo - 1e-12) & (p <= hi + 1e-12), axis=1)

    def bounds(self):
        return np.asarray(self.lo, float), np.asarray(self.hi, float)


@dataclass
class Disk:
    center: tuple
    radius: float

    def contains(self, points):
        p = np.atleast_2d(points) - np.asarray(self.center, dtype=float)
        return np.einsum("ij,ij->i", p, p) <= self.radius**2 + 1e-12

    def bounds(self):
        c = np.asarray(self.center, float)
        return c - self.radius, c + self.radius


@dataclass
class Polygon:
    """Simple polygon, vertices in order; even-odd ray casting."""

    vertices: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)

    def contains(self, points):
        p = np.atleast_2d(points)
        v = self.vertices
        n = len(v)
        inside = np.zeros(len(p), dtype=bool)
        x, y = p[:, 0], p[:, 1]
        for k in range(n):
            x1, y1 = v[k]
            x2, y2 = v[(k + 1) % n]
            crosses = (y1 > y) != (y2 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (x < np.where(crosses, xint, np.inf))
        return inside

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass
class Prism:
    """2D region extruded along the last axis over [z_lo, z_hi]."""

    section: object
    z_lo: float
    z_hi: float

    def contains(self, points):
        p = np.atleast_2d(points)
        ok_z = (p[:, -1] >= self.z_lo - 1e-12) & (p[:, -1] <= self.z_hi + 1e-12)
        return self.section.contains(p[:, :-1]) & ok_z

    def bounds(self):
        lo, hi = self.section.bounds()
        return np.append(lo, self.z_lo), np.append(hi, self.z_hi)


@dataclass
class CellBox:
    """Axis-aligned box of Bravais coordinates, inclusive bounds, with
    optional excluded coordinates (e.g. a removed crack layer)."""

    lo: tuple
    hi: tuple
    exclude: set = field(default_factory=set)

    def cells(self):
        lo = np.asarray(self.lo, dtype=int)
        hi = np.asarray(self.hi, dtype=int)
        grids = np.meshgrid(*(np.arange(l, h + 1) for l, h in zip(lo, hi)),
                            indexing="ij")
        cells = np.stack([g.ravel() for g in grids], axis=1)
        if self.exclude:
            keep = np.array([tuple(c) not in self.exclude for c in cells])
            cells = cells[keep]
        return cells


def instantiate_region(topology, region, origin=None):
    """Fill a region with unit cells.

    Cells are kept when their anchor point (c @ basis + origin) satisfies
    the region predicate; for a :class:`CellBox` the Bravais coordinates are
    enumerated directly.  Beams to cells outside the set are dropped.
    """
    origin = np.zeros(topology.dimension) if origin is None else np.asarray(origin, float)
    if isinstance(region, CellBox):
        cells = region.cells()
        if cells.shape[1] != topology.dimension:
            raise LatticeError("CellBox dimension does not match topology")
    else:
        lo, hi = region.bounds()
        # map the physical bounding box to Bravais space by its corners
        corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(
            topology.dimension, -1).T
        cb = (corners - origin) @ np.linalg.inv(topology.basis)
        clo = np.floor(cb.min(axis=0)).astype(int) - 1
        chi = np.ceil(cb.max(axis=0)).astype(int) + 1
        grids = np.meshgrid(*(np.arange(l, h + 1) for l, h in zip(clo, chi)),
                            indexing="ij")
        cand = np.stack([g.ravel() for g in grids], axis=1)
        centers = cand @ topology.basis + origin
        cells = cand[region.contains(centers)]
    if len(cells) == 0:
        raise LatticeError("region contains no unit cells")
    return DiscreteLattice(topology, cells, origin=origin)


class DiscreteLattice:
    """Finite collection of occupied unit cells with beam removal flags."""

    def __init__(self, topology, cells, origin=None):
        self.topology = topology
        cells = np.asarray(cells, dtype=int).reshape(-1, topology.dimension)
        order = np.lexsort(cells.T[::-1])       # deterministic cell ordering
        self.cells = cells[order]
        self.origin = (np.zeros(topology.dimension) if origin is None
                       else np.asarray(origin, float))
        self.cell_index = {tuple(c): k for k, c in enumerate(self.cells)}
        if len(self.cell_index) != len(self.cells):
            raise LatticeError("duplicate cells in lattice")
        # removed beams keyed by canonical owner: (owner_cell_index, beam_id)
        self.removed = set()
        self._beam_table = None

    @property
    def n_cells(self):
        return len(self.cells)

    def uc_center(self, cell):
        """Physical anchor of one Bravais coordinate."""
        return np.asarray(cell, float) @ self.topology.basis + self.origin

    def centers(self):
        return self.cells @ self.topology.basis + self.origin

    def node_positions(self):
        """(n_cells, n_nodes, d) physical node positions."""
        return self.centers()[:, None, :] + self.topology.node_offsets

    def contains(self, cell):
        return tuple(int(x) for x in cell) in self.cell_index

    def neighbor_cells(self, cell):
        """Occupied cells connected to `cell` by at least one beam."""
        c = np.asarray(cell, dtype=int)
        if tuple(c) not in self.cell_index:
            raise LatticeError(f"cell {tuple(c)} is not part of the lattice")
        out = []
        for off in self.topology.neighbor_offsets:
            nb = tuple(int(x) for x in c + off)
            if nb in self.cell_index:
                out.append(nb)
        return out

    # -- canonical beam enumeration -------------------------------------------

    def beam_table(self):
        """All existing beams, each once.

        Returns arrays (cell_a, node_a, cell_b, node_b, beam_id, alive) where
        cell indices refer to rows of ``self.cells``; beams whose remote cell
        is missing were dropped at instantiation.
        """
        if self._beam_table is None:
            topo = self.topology
            n = self.n_cells
            ca, na, cb, nb, bid = [], [], [], [], []
            for k, (i, j) in enumerate(topo.internal_beams):
                ca.append(np.arange(n))
                na.append(np.full(n, i))
                cb.append(np.arange(n))
                nb.append(np.full(n, j))
                bid.append(np.full(n, k))
            for k, (i, off, j) in enumerate(topo.neighbor_beams):
                remote = self.cells + np.asarray(off, dtype=int)
                ridx = np.array([self.cell_index.get(tuple(c), -1) for c in remote])
                keep = ridx >= 0
                ca.append(np.nonzero(keep)[0])
                na.append(np.full(keep.sum(), i))
                cb.append(ridx[keep])
                nb.append(np.full(keep.sum(), j))
                bid.append(np.full(keep.sum(), topo.n_internal + k))
            self._beam_table = tuple(
                np.concatenate(v) if v else np.zeros(0, dtype=int)
                for v in (ca, na, cb, nb, bid)
            )
        ca, na, cb, nb, bid = self._beam_table
        alive = np.array([(a, b) not in self.removed for a, b in zip(ca, bid)])
        return ca, na, cb, nb, bid, alive

    def active_nodes(self):
        """(n_cells, n_nodes) mask of nodes touched by at least one live beam."""
        ca, na, cb, nb, bid, alive = self.beam_table()
        mask = np.zeros((self.n_cells, self.topology.n_nodes), dtype=bool)
        mask[ca[alive], na[alive]] = True
        mask[cb[alive], nb[alive]] = True
        return mask

    def n_active_nodes(self):
        return int(self.active_nodes().sum())

    # -- removal flags ---------------------------------------------------------

    def _canonical_key(self, cell, beam_id, reversed_side=False):
        """Resolve (cell, beam) to its canonical owner key.

        `reversed_side` means `cell` sits at the far (j) end of the canonical
        neighbor beam, so the owner is cell - offset.
        """
        topo = self.topology
        c = np.asarray(cell, dtype=int)
        if beam_id < topo.n_internal or not reversed_side:
            owner = tuple(c)
        else:
            i, off, j = topo.neighbor_beams[beam_id - topo.n_internal]
            owner = tuple(c - np.asarray(off, dtype=int))
        if owner not in self.cell_index:
            raise LatticeError(f"beam owner cell {owner} is not occupied")
        return (self.cell_index[owner], int(beam_id))

    def remove_beam(self, cell, beam_id, reversed_side=False):
        """Flag one beam as removed; shared beams vanish from both sides."""
        self.removed.add(self._canonical_key(cell, beam_id, reversed_side))

    def is_removed(self, cell, beam_id, reversed_side=False):
        return self._canonical_key(cell, beam_id, reversed_side) in self.removed

    def beam_exists(self, cell, beam_id, reversed_side=False):
        """Beam exists: remote cell occupied and not flagged removed."""
        topo = self.topology
        c = np.asarray(cell, dtype=int)
        if tuple(c) not in self.cell_index:
            return False
        if beam_id >= topo.n_internal:
            i, off, j = topo.neighbor_beams[beam_id - topo.n_internal]
            off = np.asarray(off, dtype=int)
            remote = tuple(c - off) if reversed_side else tuple(c + off)
            if remote not in self.cell_index:
                return False
        return not self.is_removed(cell, beam_id, reversed_side)

    def drop_cell(self, cell):
        """Remove a cell and all its incident beams.  Invalidates caches."""
        key = tuple(int(x) for x in cell)
        if key not in self.cell_index:
            raise LatticeError(f"cell {key} is not part of the lattice")
        old_index = self.cell_index[key]
        keep = np.ones(self.n_cells, dtype=bool)
        keep[old_index] = False
        remap = np.cumsum(keep) - 1
        # beams incident to the cell cease to exist with it; stale flags on
        # surviving owners are reindexed
        new_removed = set()
        for (ci, bid) in self.removed:
            if ci != old_index:
                new_removed.add((int(remap[ci]), bid))
        self.cells = self.cells[keep]
        self.cell_index = {tuple(cc): kk for kk, cc in enumerate(self.cells)}
        self.removed = new_removed
        self._beam_table = None
