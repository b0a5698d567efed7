"""Coarse simplicial meshes over unit-cell lattices.

A mesh partitions the occupied cell coordinates into integer-vertex
simplices.  Element vertices (and the mid-edge nodes of quadratic elements)
are the representative cells that carry degrees of freedom; all other cells
are interpolated.  Construction is structured:

* core: axis-aligned blocks of the chosen spacing, fully occupied, meshed
  with a fixed simplex pattern (2 triangles / 6 path tetrahedra per block),
  which is translation periodic and therefore conforming across blocks,
* belt: every occupied cell not covered by core blocks is meshed with
  unit-sized simplices, making the belt fully resolved,
* conformization: vertices hanging on longer edges are eliminated by
  bisecting the edge at a snapped midpoint simultaneously in every element
  that shares it, repeating until the only remaining hanging nodes are
  quadratic mid-edge nodes facing linear elements (the one sanctioned
  mixed-order interface pattern).

Quadratic elements keep all corner coordinates even so every mid-edge node
is an integer lattice site, and bisection at even sites is closed under
that invariant.  A quadratic element whose covered cells are all nodes
carries no coarsening benefit and is converted into its linear children on
sight; the same conversion resolves hanging nodes on edges too short to
bisect at an even site.

Adaptive refinement reuses the bisection primitive: flagged elements are
bisected along their longest edge, the new vertex snapped to the closest
admissible occupied site on that edge, then conformity is restored.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from qclat.sampling import (
    face_interior_sites, segment_interior_sites, simplex_interior_sites,
)


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class RefinementConfig:
    """Adaptive refinement control.

    An element is flagged when its size-weighted distance of the second
    invariant of the deformation gradient from the undeformed value exceeds
    ``threshold``; the threshold shrinks by ``reduction`` per stage.
    """

    threshold: float
    reduction: float = 0.2
    max_stages: int = 3

    def __post_init__(self):
        if self.threshold <= 0:
            raise MeshError("refinement threshold must be positive")
        if not 0 <= self.reduction < 1:
            raise MeshError("refinement reduction must lie in [0, 1)")
        if self.max_stages < 0:
            raise MeshError("max_stages must be non-negative")

    def stage_threshold(self, stage):
        return self.threshold * (1.0 - self.reduction) ** stage


def second_invariant(grad):
    """Second principal invariant of one or more square matrices."""
    grad = np.asarray(grad, dtype=float)
    tr = np.trace(grad, axis1=-2, axis2=-1)
    tr_sq = np.trace(grad @ grad, axis1=-2, axis2=-1)
    return 0.5 * (tr ** 2 - tr_sq)


def refinement_flags(mesh, gradients, threshold):
    """Flag elements whose deformation departs from affine-undeformed.

    ``gradients`` holds one deformation gradient per element; the indicator
    is the element size (volume to the power 1/d) times the shift of the
    second invariant from its undeformed value.
    """
    gradients = np.asarray(gradients, dtype=float)
    d = mesh.dimension
    if gradients.shape != (len(mesh.elements), d, d):
        raise MeshError(
            f"expected {(len(mesh.elements), d, d)} gradients, "
            f"got {gradients.shape}")
    reference = second_invariant(np.eye(d))
    shift = np.abs(second_invariant(gradients) - reference)
    sizes = np.array([mesh.element_volume(e) ** (1.0 / d)
                      for e in mesh.elements])
    return sizes * shift > threshold


EDGE_PAIRS = {2: ((0, 1), (1, 2), (0, 2)),
                3: ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))}
_FACE_COMBOS = {3: ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3))}


def _site(c):
    return tuple(int(x) for x in c)


@dataclass(frozen=True)
class MeshElement:
    """One integer-vertex simplex with an interpolation order.

    ``corners`` are Bravais coordinates; quadratic elements additionally use
    the three/six edge midpoints as nodes.  ``resolved`` marks elements that
    cover no cells beyond their own nodes, which refinement must skip.
    """

    corners: tuple
    order: int
    resolved: bool

    @property
    def dimension(self):
        return len(self.corners) - 1

    def edges(self):
        c = self.corners
        return tuple(tuple(sorted((c[i], c[j])))
                     for i, j in EDGE_PAIRS[self.dimension])

    def midpoints(self):
        """Mid-edge node sites, in edge order (quadratic elements only)."""
        c = np.asarray(self.corners, dtype=int)
        out = []
        for i, j in EDGE_PAIRS[self.dimension]:
            s = c[i] + c[j]
            if np.any(s % 2):
                raise MeshError(
                    f"quadratic element {self.corners} has a non-integer "
                    f"mid-edge node on edge {i}-{j}")
            out.append(_site(s // 2))
        return out

    def node_sites(self):
        sites = [_site(c) for c in self.corners]
        if self.order == 2:
            sites.extend(self.midpoints())
        return sites


def _covered_sites(corners):
    """Every lattice site in the closed simplex that is not a corner."""
    v = np.asarray(corners, dtype=int)
    d = v.shape[1]
    sites = [_site(s) for s in simplex_interior_sites(v)]
    for i, j in EDGE_PAIRS[d]:
        sites.extend(map(_site, segment_interior_sites(v[i], v[j])))
    if d == 3:
        for f in _FACE_COMBOS[3]:
            sites.extend(map(_site, face_interior_sites(v[list(f)])))
    return sites


def _make_element(corners, order):
    """Build one element, degrading a quadratic one to its linear children
    when quadratic interpolation has no cells left to coarsen."""
    corners = tuple(_site(c) for c in corners)
    if order == 2:
        elem = MeshElement(corners, 2, False)
        covered = _covered_sites(corners)
        nodes = set(corners) | set(elem.midpoints())
        if all(s in nodes for s in covered):
            out = []
            for child in split_to_linear(corners):
                out.extend(_make_element(child, 1))
            return out
        return [elem]
    return [MeshElement(corners, 1, not _covered_sites(corners))]


def split_to_linear(corners):
    """Split a quadratic simplex into 4 (2D) / 8 (3D) linear children.

    Children reuse the parent's corner and mid-edge nodes only.  In 3D the
    four corner tetrahedra leave an octahedron, split along its shortest
    interior diagonal (ties by lexicographic vertex order).
    """
    v = np.asarray(corners, dtype=int)
    d = v.shape[1]
    if np.any((v[np.newaxis, 0] + v) % 2):
        raise MeshError("quadratic corners must have matching parity")
    c = [_site(x) for x in v]
    if d == 2:
        m01 = _site((v[0] + v[1]) // 2)
        m12 = _site((v[1] + v[2]) // 2)
        m02 = _site((v[0] + v[2]) // 2)
        return [
            (c[0], m01, m02),
            (m01, c[1], m12),
            (m02, m12, c[2]),
            (m01, m12, m02),
        ]
    mid = {e: _site((v[e[0]] + v[e[1]]) // 2) for e in EDGE_PAIRS[3]}
    children = [
        (c[0], mid[(0, 1)], mid[(0, 2)], mid[(0, 3)]),
        (c[1], mid[(0, 1)], mid[(1, 2)], mid[(1, 3)]),
        (c[2], mid[(0, 2)], mid[(1, 2)], mid[(2, 3)]),
        (c[3], mid[(0, 3)], mid[(1, 3)], mid[(2, 3)]),
    ]
    # octahedron diagonals pair midpoints of opposite edges
    diagonals = [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))]

    def diag_key(pair):
        a, b = mid[pair[0]], mid[pair[1]]
        length = float(np.sum((np.array(a) - np.array(b)) ** 2))
        return (length, a, b)

    ea, eb = min(diagonals, key=diag_key)
    da, db = mid[ea], mid[eb]
    equator = [mid[e] for e in EDGE_PAIRS[3] if e not in (ea, eb)]
    # order the square cross-section cyclically around the diagonal
    axis = np.array(db, dtype=float) - np.array(da)
    center = 0.5 * (np.array(da, dtype=float) + np.array(db))
    ref = np.array(equator[0]) - center
    ref = ref - (ref @ axis) * axis / (axis @ axis)
    nrm = np.cross(axis, ref)

    def angle(p):
        r = np.array(p) - center
        return math.atan2(r @ nrm, (r @ ref) * math.sqrt(axis @ axis))

    equator.sort(key=lambda p: (angle(p), p))
    for k in range(4):
        children.append((da, db, equator[k], equator[(k + 1) % 4]))
    return children


def select_coarse_repucs(lattice, spacing):
    """Occupied cells on the sub-grid of the given spacing (all coordinates
    divisible by it).  Spacing 1 returns every occupied cell."""
    if spacing < 1:
        raise MeshError("spacing must be at least 1")
    cells = lattice.cells
    extent = cells.max(axis=0) - cells.min(axis=0)
    if spacing > 1 and np.all(extent < spacing):
        raise MeshError(
            f"spacing {spacing} exceeds the domain extent {tuple(extent)}")
    mask = np.all(cells % spacing == 0, axis=1)
    return [_site(c) for c in cells[mask]]


# ---------------------------------------------------------------------------
# structured construction
# ---------------------------------------------------------------------------

def _block_elements(anchor, sizes):
    """Fixed simplex pattern for one box block; translation periodic, so
    equal-size neighbors conform without further work."""
    a = np.asarray(anchor, dtype=int)
    d = a.shape[0]
    steps = np.diag(np.broadcast_to(np.asarray(sizes, dtype=int), (d,)))
    if d == 2:
        return [
            (a, a + steps[0], a + steps[1]),
            (a + steps[0], a + steps[0] + steps[1], a + steps[1]),
        ]
    out = []
    for perm in itertools.permutations(range(3)):
        p1 = a + steps[perm[0]]
        p2 = p1 + steps[perm[1]]
        out.append((a, p1, p2, p2 + steps[perm[2]]))
    return out


def build_qc_mesh(lattice, spacing, order=1, resolve_regions=()):
    """Structured coarse mesh over the occupied cells.

    ``spacing`` sets the coarse block size in Bravais steps (scalar or
    per-axis); quadratic order requires even spacing so mid-edge nodes land
    on lattice sites.  Occupied cells inside any of ``resolve_regions``
    (region predicates on physical coordinates) are kept out of the core
    and hence fully resolved.
    """
    topo = lattice.topology
    d = topo.dimension
    spacing_vec = np.broadcast_to(np.asarray(spacing, dtype=int), (d,)).copy()
    if np.any(spacing_vec < 1):
        raise MeshError("spacing must be at least 1")
    if order not in (1, 2):
        raise MeshError(f"element order must be 1 or 2, got {order}")
    if order == 2 and np.any(spacing_vec % 2):
        raise MeshError("quadratic meshing needs even spacing")

    occupied = lattice.cell_index
    cells = lattice.cells

    def cell_resolved(site):
        if not resolve_regions:
            return False
        center = lattice.uc_center(site)
        return any(bool(np.atleast_1d(r.contains(center[None, :]))[0])
                   for r in resolve_regions)

    core = set()
    if np.any(spacing_vec > 1):
        anchors = np.unique(
            spacing_vec * np.floor_divide(cells, spacing_vec), axis=0)
        corner_offsets = np.stack(np.meshgrid(
            *(np.arange(0, s + 1) for s in spacing_vec),
            indexing="ij")).reshape(d, -1).T
        for a in anchors:
            block_sites = [_site(s) for s in a + corner_offsets]
            if not all(s in occupied for s in block_sites):
                continue
            if any(cell_resolved(s) for s in block_sites):
                continue
            core.add(_site(a))

    elements = []
    for a in sorted(core):
        for corners in _block_elements(a, spacing_vec):
            elements.extend(_make_element(corners, order))

    # belt: unit blocks whose containing spacing-block is not core
    unit_offsets = np.stack(np.meshgrid(*([np.arange(2)] * d),
                                        indexing="ij")).reshape(d, -1).T
    for c in cells:
        if _site(spacing_vec * np.floor_divide(c, spacing_vec)) in core:
            continue
        if not all(_site(c + o) in occupied for o in unit_offsets):
            continue
        for corners in _block_elements(c, 1):
            elements.extend(_make_element(corners, 1))

    if not elements:
        raise MeshError("no mesh elements; domain too small for the spacing")
    mesh = QCMesh(lattice, elements, spacing=spacing_vec, order=order,
                  resolve_regions=tuple(resolve_regions))
    mesh.conformize()
    return mesh


def fully_resolve_region(mesh, region):
    """New mesh whose occupied cells inside the region are all repUCs."""
    return build_qc_mesh(mesh.lattice, mesh.spacing, order=mesh.order,
                         resolve_regions=mesh.resolve_regions + (region,))


# ---------------------------------------------------------------------------
# the mesh container
# ---------------------------------------------------------------------------

class QCMesh:
    """Conforming mixed-order simplicial mesh over a lattice."""

    def __init__(self, lattice, elements, spacing=1, order=1,
                 resolve_regions=()):
        self.lattice = lattice
        self.elements = list(elements)
        self.spacing = np.atleast_1d(np.asarray(spacing, dtype=int))
        self.order = order
        self.resolve_regions = tuple(resolve_regions)
        self._nodes = None
        self._owners = None

    @property
    def dimension(self):
        return self.lattice.topology.dimension

    def _invalidate(self):
        self._nodes = None
        self._owners = None

    def node_sites(self):
        """Sorted Bravais coordinates of every repUC (corner or mid-edge)."""
        if self._nodes is None:
            sites = set()
            for e in self.elements:
                sites.update(e.node_sites())
            self._nodes = sorted(sites)
        return self._nodes

    def node_index(self):
        return {s: k for k, s in enumerate(self.node_sites())}

    def corner_arrays(self):
        """Element corners as integer arrays (the sampling-scheme input)."""
        return [np.asarray(e.corners, dtype=int) for e in self.elements]

    def site_owners(self):
        """Deterministic cell-to-element attribution.

        Sites shared by several elements (corners, edge sites) go to the
        first element in list order, so interpolated values are well defined
        even where element fields disagree off the nodes.
        """
        if self._owners is None:
            owners = {}
            for ei, e in enumerate(self.elements):
                for s in e.corners:
                    owners.setdefault(_site(s), ei)
                for s in _covered_sites(e.corners):
                    owners.setdefault(s, ei)
            self._owners = owners
        return self._owners

    def element_volume(self, element):
        v = np.asarray(element.corners, dtype=float) \
            @ self.lattice.topology.basis
        return abs(np.linalg.det(v[1:] - v[0])) \
            / math.factorial(self.dimension)

    def total_volume(self):
        return float(sum(self.element_volume(e) for e in self.elements))

    def n_resolved(self):
        return sum(1 for e in self.elements if e.resolved)

    # -- conformity ---------------------------------------------------------

    def _hanging_edges(self):
        """Edges carrying another element's vertex that is not sanctioned.

        The sanctioned pattern: a quadratic element's mid-edge node that is
        a vertex of linear elements only.  Everything else must be bisected.
        """
        quad_corners = set()
        linear_corners = set()
        for e in self.elements:
            target = quad_corners if e.order == 2 else linear_corners
            target.update(_site(c) for c in e.corners)
        all_corners = quad_corners | linear_corners
        hanging = set()
        for e in self.elements:
            for edge in e.edges():
                mid = None
                if e.order == 2:
                    s = np.asarray(edge[0]) + np.asarray(edge[1])
                    mid = _site(s // 2)
                for s in map(_site, segment_interior_sites(*edge)):
                    if s not in all_corners:
                        continue
                    if s == mid and s in linear_corners \
                            and s not in quad_corners:
                        continue
                    hanging.add(edge)
                    break
        return hanging

    def conformize(self, max_rounds=64):
        """Bisect away unsanctioned hanging vertices until none remain."""
        for _ in range(max_rounds):
            hanging = sorted(self._hanging_edges())
            if not hanging:
                return
            for edge in hanging:
                if any(edge in e.edges() for e in self.elements):
                    self._bisect_edge(edge)
        raise MeshError("conformization did not terminate")

    def _edge_snap_site(self, edge, order):
        """Closest admissible occupied site to the edge midpoint, or None.

        Quadratic bisection must keep corners even, so only even sites
        qualify; ties go to the lexicographically smaller coordinate.
        """
        a = np.asarray(edge[0], dtype=int)
        b = np.asarray(edge[1], dtype=int)
        sites = segment_interior_sites(a, b)
        if order == 2:
            sites = sites[~np.any(sites % 2, axis=1)]
        candidates = [s for s in map(_site, sites)
                      if s in self.lattice.cell_index]
        if not candidates:
            return None
        basis = self.lattice.topology.basis
        midpoint = 0.5 * (a + b) @ basis
        return min(candidates, key=lambda s: (
            float(np.linalg.norm(np.asarray(s, dtype=float) @ basis
                                 - midpoint)),
            s))

    def _replace(self, replacements):
        out = []
        for ei, e in enumerate(self.elements):
            out.extend(replacements.get(ei, [e]))
        self.elements = out
        self._invalidate()

    def _bisect_edge(self, edge):
        """Split every element sharing the edge at one snapped node.

        Simultaneous splitting keeps the mesh conforming without hanging
        bookkeeping.  When a quadratic sharer sits on an edge too short to
        hold an even site, that sharer is converted to its linear children
        instead, which turns the offending vertex into a corner.
        """
        sharers = [ei for ei, e in enumerate(self.elements)
                   if edge in e.edges()]
        if not sharers:
            raise MeshError(f"edge {edge} is not part of the mesh")
        order = max(self.elements[ei].order for ei in sharers)
        node = self._edge_snap_site(edge, order)
        if node is None and order == 2:
            replacements = {}
            for ei in sharers:
                e = self.elements[ei]
                if e.order != 2:
                    continue
                children = []
                for child in split_to_linear(e.corners):
                    children.extend(_make_element(child, 1))
                replacements[ei] = children
            self._replace(replacements)
            sharers = [ei for ei, e in enumerate(self.elements)
                       if edge in e.edges()]
            if not sharers:
                return None
            node = self._edge_snap_site(edge, 1)
        if node is None:
            raise MeshError(f"edge {edge} has no admissible bisection site")
        replacements = {}
        for ei in sharers:
            e = self.elements[ei]
            children = []
            for drop in (0, 1):
                corners = tuple(node if _site(c) == edge[drop] else _site(c)
                                for c in e.corners)
                children.extend(_make_element(corners, e.order))
            replacements[ei] = children
        self._replace(replacements)
        return node

    # -- refinement -----------------------------------------------------------

    def refine_flagged(self, flags):
        """Bisect every flagged element along its longest bisectable edge.

        Returns the number of elements actually refined.  Resolved elements
        are skipped; a quadratic element with no bisectable edge is split to
        linear children; a linear element with no bisectable edge is marked
        resolved.  Conformity is restored at the end of the pass.
        """
        basis = self.lattice.topology.basis
        todo = [self.elements[ei] for ei, flagged in enumerate(flags)
                if flagged and not self.elements[ei].resolved]
        changed = 0
        for elem in todo:
            try:
                ei = self.elements.index(elem)
            except ValueError:
                continue          # replaced by an earlier bisection
            edges = sorted(
                elem.edges(),
                key=lambda ed: (-float(np.linalg.norm(
                    (np.asarray(ed[1]) - np.asarray(ed[0])) @ basis)), ed))
            node = None
            for edge in edges:
                if self._edge_snap_site(edge, elem.order) is not None:
                    node = self._bisect_edge(edge)
                    break
            if node is not None:
                changed += 1
            elif elem.order == 2:
                children = []
                for child in split_to_linear(elem.corners):
                    children.extend(_make_element(child, 1))
                self._replace({ei: children})
                changed += 1
            else:
                self._replace({ei: [MeshElement(elem.corners, 1, True)]})
        self.conformize()
        return changed

    # -- unit-cell removal ------------------------------------------------------

    def remove_unit_cell(self, cell):
        """Delete one cell plus exactly the elements it is a vertex of.

        Only sanctioned in fully-resolved linear surroundings; in a coarse
        or quadratic region the deletion would take interpolated neighbor
        cells with it, so it is refused and the caller should resolve the
        region first.
        """
        c = _site(cell)
        if c not in self.lattice.cell_index:
            raise MeshError(f"cell {c} is not part of the lattice")
        incident = [ei for ei, e in enumerate(self.elements)
                    if c in {_site(x) for x in e.corners}]
        if not incident:
            raise MeshError(
                f"cell {c} is interpolated, not a mesh vertex; fully "
                f"resolve its region before removing it")
        bad = [ei for ei in incident
               if self.elements[ei].order != 1
               or not self.elements[ei].resolved]
        if bad:
            raise MeshError(
                f"cell {c} touches coarse or quadratic elements; fully "
                f"resolve the region before removing cells")
        for e in self.elements:
            if e.order == 2 and c in set(e.midpoints()):
                raise MeshError(
                    f"cell {c} is a quadratic mid-edge node; fully resolve "
                    f"the region before removing cells")
        drop = set(incident)
        self.elements = [e for ei, e in enumerate(self.elements)
                         if ei not in drop]
        self.lattice.drop_cell(c)
        self._invalidate()

    # -- validation ---------------------------------------------------------------

    def check_valid(self, coverage=True):
        """Raise on any broken mesh invariant.

        Checks that nodes are occupied lattice sites, quadratic mid-edge
        parity, non-degenerate element volumes, absence of unsanctioned
        hanging vertices and (optionally) that every occupied cell lies in
        some element.
        """
        occupied = self.lattice.cell_index
        for e in self.elements:
            for s in e.node_sites():
                if s not in occupied:
                    raise MeshError(f"mesh node {s} is not an occupied cell")
            if self.element_volume(e) < 1e-12:
                raise MeshError(f"degenerate element {e.corners}")
        hanging = self._hanging_edges()
        if hanging:
            raise MeshError(f"hanging vertices on edges {sorted(hanging)}")
        if coverage:
            self._check_coverage()

    def _check_coverage(self):
        covered = set()
        for e in self.elements:
            covered.update(_site(c) for c in e.corners)
            covered.update(_covered_sites(e.corners))
        missing = [c for c in map(_site, self.lattice.cells)
                   if c not in covered]
        if missing:
            raise MeshError(
                f"{len(missing)} occupied cells not covered by the mesh, "
                f"first few: {missing[:5]}")
