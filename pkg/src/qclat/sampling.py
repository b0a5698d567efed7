"""Sampling-cell placement and integer-geometry weights.

The coarse energy sum is approximated by evaluating unit-cell energies at a
small set of sampling cells, each weighted by the number of cells it stands
for.  Per simplex element the rule places points at the vertices, the edge
midpoints, the face midpoints (3D) and the barycenter: 3+3+1 = 7 points in
2D, 4+6+4+1 = 15 in 3D.  Weights are exact lattice-point counts:

* vertex: 1,
* edge: gcd of the endpoint difference minus one (sites strictly between),
* face: interior sites of the triangle in its plane sublattice, found by
  solving the homogeneous Diophantine equation n . Y = 0 for an integer
  basis of the plane and applying Pick's theorem,
* barycenter: sites strictly inside the simplex, counted by exact integer
  orientation tests over the bounding box.

A scheme built over a whole mesh attributes every occupied cell to exactly
one sampling point (vertices first, then edges by ascending gcd, faces by
ascending area, then element interiors), so the total weight equals the
number of occupied cells by construction; the builder verifies this.  Points
whose nominal location is not a lattice site are anchored at the nearest
occupied site among those they represent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SamplingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# integer lattice-point counting
# ---------------------------------------------------------------------------

def edge_weight(y1, y2) -> int:
    """Number of lattice sites strictly between two integer coordinates."""
    d = np.asarray(y2, dtype=int) - np.asarray(y1, dtype=int)
    g = int(np.gcd.reduce(np.abs(d)))
    if g == 0:
        raise SamplingError("edge endpoints coincide")
    return g - 1


def segment_interior_sites(y1, y2) -> np.ndarray:
    """The sites strictly between two integer coordinates, (g-1, d)."""
    y1 = np.asarray(y1, dtype=int)
    d = np.asarray(y2, dtype=int) - y1
    g = int(np.gcd.reduce(np.abs(d)))
    if g == 0:
        raise SamplingError("edge endpoints coincide")
    return y1 + np.arange(1, g)[:, None] * (d // g)


def _interior_mask(vertices, points):
    """Strict-interior test of integer points against an integer simplex.

    Works facet by facet: a point is interior when for every facet it lies
    strictly on the same side as the opposite vertex.  All arithmetic is
    integer, so there are no tolerance decisions.
    """
    v = np.asarray(vertices, dtype=np.int64)
    p = np.asarray(points, dtype=np.int64)
    d = v.shape[1]
    inside = np.ones(len(p), dtype=bool)
    idx = list(range(d + 1))
    for opp in idx:
        facet = [k for k in idx if k != opp]
        base = v[facet[0]]
        if d == 2:
            e = v[facet[1]] - base
            normal = np.array([-e[1], e[0]], dtype=np.int64)
        else:
            normal = np.cross(v[facet[1]] - base, v[facet[2]] - base)
        side = int(normal @ (v[opp] - base))
        if side == 0:
            raise SamplingError("degenerate simplex")
        vals = (p - base) @ normal
        inside &= (vals * np.sign(side)) > 0
    return inside


def simplex_interior_sites(vertices) -> np.ndarray:
    """All lattice sites strictly inside an integer simplex."""
    v = np.asarray(vertices, dtype=np.int64)
    lo = v.min(axis=0) + 1
    hi = v.max(axis=0) - 1
    if np.any(hi < lo):
        return np.zeros((0, v.shape[1]), dtype=np.int64)
    grids = np.meshgrid(*(np.arange(a, b + 1) for a, b in zip(lo, hi)),
                        indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
    return pts[_interior_mask(v, pts)]


def barycenter_weight(vertices, lattice=None) -> int:
    """Occupied sites strictly inside the simplex (all sites if no lattice)."""
    sites = simplex_interior_sites(vertices)
    if lattice is not None:
        return sum(1 for s in sites if tuple(int(x) for x in s)
                   in lattice.cell_index)
    return len(sites)


# ---------------------------------------------------------------------------
# plane sublattices (3D faces)
# ---------------------------------------------------------------------------

def _xgcd(a: int, b: int):
    """Extended Euclid: returns (g, x, y) with a x + b y = g = gcd(a, b)."""
    x0, x1, y0, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    return a, x0, y0


def face_sublattice_basis(n):
    """Integer basis of the plane lattice {Y : n . Y = 0}.

    The first vector solves the two-component subproblem directly, the
    second one uses the Extended Euclidean coefficients; together they span
    every integer solution (their cross product reproduces -n).  When the
    first two components of ``n`` are both zero the components are rotated
    first, since any coordinate permutation preserves the sublattice.
    """
    n = np.asarray(n, dtype=np.int64)
    if not n.any():
        raise SamplingError("zero normal vector")
    n = n // np.gcd.reduce(np.abs(n))
    perm = (0, 1, 2)
    if n[0] == 0 and n[1] == 0:
        perm = (1, 2, 0)
    np_ = n[list(perm)]
    g, y1, y2 = _xgcd(int(np_[0]), int(np_[1]))
    if g < 0:
        g, y1, y2 = -g, -y1, -y2
    lam1_p = np.array([-np_[1] // g, np_[0] // g, 0], dtype=np.int64)
    lam2_p = np.array([np_[2] * y1, np_[2] * y2, -g], dtype=np.int64)
    lam1 = np.empty(3, dtype=np.int64)
    lam2 = np.empty(3, dtype=np.int64)
    lam1[list(perm)] = lam1_p
    lam2[list(perm)] = lam2_p
    if not np.array_equal(np.cross(lam1, lam2), -n):
        raise SamplingError(f"sublattice basis construction failed for n={n}")
    return lam1, lam2


def _face_plane_coordinates(vertices):
    """Express a 3D integer triangle in the integer basis of its plane.

    Returns the two edge vectors of the triangle as exact integer pairs
    (a, b) with vertex 0 at the origin, plus the basis vectors.
    """
    v = np.asarray(vertices, dtype=np.int64)
    y2 = v[1] - v[0]
    y3 = v[2] - v[0]
    n = np.cross(y2, y3)
    if not n.any():
        raise SamplingError("collinear face vertices")
    n = n // np.gcd.reduce(np.abs(n))
    lam1, lam2 = face_sublattice_basis(n)
    denom = int(n @ n)

    def coords(y):
        # solve a1 lam1 + a2 lam2 = y via scalar triple products with -n
        a1 = int(np.cross(y, lam2) @ -n)
        a2 = int(np.cross(lam1, y) @ -n)
        if a1 % denom or a2 % denom:
            raise SamplingError("face vertex outside its plane sublattice")
        return np.array([a1 // denom, a2 // denom], dtype=np.int64)

    return coords(y2), coords(y3), lam1, lam2


def face_weight(vertices) -> int:
    """Sites of the plane sublattice strictly inside a 3D integer triangle.

    Pick's theorem in the plane basis: interior = area - boundary/2 + 1,
    with the area in sublattice units and boundary sites counted by gcd.
    """
    a, b, _, _ = _face_plane_coordinates(vertices)
    area2 = abs(int(a[0] * b[1] - a[1] * b[0]))
    boundary = (int(np.gcd.reduce(np.abs(a)))
                + int(np.gcd.reduce(np.abs(b)))
                + int(np.gcd.reduce(np.abs(a - b))))
    if (area2 - boundary) % 2:
        raise SamplingError("Pick parity violated; non-lattice face")
    return (area2 - boundary) // 2 + 1


def face_interior_sites(vertices) -> np.ndarray:
    """The actual interior sites behind :func:`face_weight`, (w, 3)."""
    a, b, lam1, lam2 = _face_plane_coordinates(vertices)
    tri = np.stack([np.zeros(2, dtype=np.int64), a, b])
    plane_sites = simplex_interior_sites(tri)
    v0 = np.asarray(vertices, dtype=np.int64)[0]
    sites = v0 + plane_sites @ np.stack([lam1, lam2])
    if len(sites) != face_weight(vertices):
        raise SamplingError("face site enumeration disagrees with Pick count")
    return sites


# ---------------------------------------------------------------------------
# per-element placement
# ---------------------------------------------------------------------------

@dataclass
class SamplingPoint:
    """One sampling cell: where it sits, what it stands for.

    ``anchor`` is the Bravais coordinate of the cell whose energy stencil is
    evaluated; ``position`` is the nominal (physical) location of the point,
    which for edges/faces/barycenters need not be a lattice site.  ``weight``
    counts the cells the point represents.
    """

    category: str
    element: int
    position: np.ndarray
    anchor: tuple
    weight: int

    def stencil_cells(self, topology) -> np.ndarray:
        """Bravais coordinates of every cell entering this point's energy."""
        anchor = np.asarray(self.anchor, dtype=int)
        offsets = np.vstack([np.zeros(topology.dimension, dtype=int),
                             topology.neighbor_offsets])
        return anchor + offsets


_EDGE_COMBOS = {2: ((0, 1), (1, 2), (0, 2)),
                3: ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))}
_FACE_COMBOS = {2: (), 3: ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3))}


def _nearest_site(sites, position, topology, origin):
    centers = np.asarray(sites, dtype=float) @ topology.basis + origin
    dist = np.linalg.norm(centers - position, axis=1)
    order = np.lexsort(tuple(np.asarray(sites, dtype=int).T[::-1]) + (dist,))
    return tuple(int(x) for x in np.asarray(sites)[order[0]])


def place_sampling_ucs(vertices, topology, lattice=None, element=0):
    """The full per-element sampling rule: 7 points in 2D, 15 in 3D.

    Weights here are the raw per-element counts; building a scheme over a
    mesh additionally resolves sharing between elements.
    """
    v = np.asarray(vertices, dtype=int)
    d = topology.dimension
    if v.shape != (d + 1, d):
        raise SamplingError(f"element needs {d + 1} integer vertices, got {v.shape}")
    origin = np.zeros(d) if lattice is None else lattice.origin
    points = []

    def phys(frac):
        return np.asarray(frac, dtype=float) @ topology.basis + origin

    for corner in v:
        points.append(SamplingPoint("vertex", element, phys(corner),
                                    tuple(int(x) for x in corner), 1))
    for i, j in _EDGE_COMBOS[d]:
        w = edge_weight(v[i], v[j])
        mid = 0.5 * (v[i] + v[j])
        interior = segment_interior_sites(v[i], v[j])
        anchor = (_nearest_site(interior, phys(mid), topology, origin)
                  if len(interior) else tuple(int(x) for x in v[i]))
        points.append(SamplingPoint("edge", element, phys(mid), anchor, w))
    for i, j, k in _FACE_COMBOS[d]:
        w = face_weight(v[[i, j, k]])
        mid = (v[i] + v[j] + v[k]) / 3.0
        interior = face_interior_sites(v[[i, j, k]])
        anchor = (_nearest_site(interior, phys(mid), topology, origin)
                  if len(interior) else tuple(int(x) for x in v[i]))
        points.append(SamplingPoint("face", element, phys(mid), anchor, w))
    interior = simplex_interior_sites(v)
    if lattice is not None and len(interior):
        occupied = [s for s in interior
                    if tuple(int(x) for x in s) in lattice.cell_index]
        interior = np.asarray(occupied, dtype=int).reshape(-1, d)
    mid = v.mean(axis=0)
    anchor = (_nearest_site(interior, phys(mid), topology, origin)
              if len(interior) else tuple(int(x) for x in v[0]))
    points.append(SamplingPoint("barycenter", element, phys(mid), anchor,
                                len(interior)))
    return points


# ---------------------------------------------------------------------------
# whole-mesh schemes
# ---------------------------------------------------------------------------

def sampling_scheme(elements, lattice):
    """Deduplicated sampling points covering every occupied cell once.

    ``elements`` is a sequence of (d+1, d) integer corner arrays.  Entities
    shared between elements are instantiated once; every occupied cell is
    attributed to exactly one point by claiming sites in the order vertices,
    edges (short first), faces (small first), element interiors.  Points
    left with zero weight are dropped.  Raises when the attributed total
    does not equal the number of occupied cells, which catches meshes that
    miss or double-cover part of the lattice.
    """
    topo = lattice.topology
    d = topo.dimension
    elems = [np.asarray(e, dtype=int).reshape(d + 1, d) for e in elements]
    origin = lattice.origin
    occupied = lattice.cell_index
    claimed = set()
    points = []

    def phys(frac):
        return np.asarray(frac, dtype=float) @ topo.basis + origin

    # vertices: every element corner, once per site
    seen = {}
    for ei, v in enumerate(elems):
        for corner in v:
            key = tuple(int(x) for x in corner)
            if key not in seen:
                if key not in occupied:
                    raise SamplingError(
                        f"mesh vertex {key} is not an occupied cell")
                seen[key] = ei
    for key in sorted(seen):
        claimed.add(key)
        points.append(SamplingPoint("vertex", seen[key],
                                    phys(key), key, 1))

    # edges, shortest first so finer resolution claims its sites first
    edges = {}
    for ei, v in enumerate(elems):
        for i, j in _EDGE_COMBOS[d]:
            key = tuple(sorted((tuple(int(x) for x in v[i]),
                                tuple(int(x) for x in v[j]))))
            edges.setdefault(key, ei)
    for key in sorted(edges, key=lambda k: (edge_weight(*k), k)):
        sites = [tuple(int(x) for x in s)
                 for s in segment_interior_sites(*key)]
        mine = [s for s in sites if s not in claimed and s in occupied]
        claimed.update(mine)
        if mine:
            mid = 0.5 * (np.asarray(key[0]) + np.asarray(key[1]))
            anchor = _nearest_site(mine, phys(mid), topo, origin)
            points.append(SamplingPoint("edge", edges[key], phys(mid),
                                        anchor, len(mine)))

    # faces (3D), smallest first for the same reason
    if d == 3:
        faces = {}
        areas = {}
        for ei, v in enumerate(elems):
            for i, j, k in _FACE_COMBOS[d]:
                key = tuple(sorted(map(tuple, v[[i, j, k]].tolist())))
                if key not in faces:
                    faces[key] = ei
                    e1 = np.asarray(key[1]) - np.asarray(key[0])
                    e2 = np.asarray(key[2]) - np.asarray(key[0])
                    areas[key] = int(np.cross(e1, e2) @ np.cross(e1, e2))
        for key in sorted(faces, key=lambda k: (areas[k], k)):
            sites = [tuple(int(x) for x in s)
                     for s in face_interior_sites(np.asarray(key))]
            mine = [s for s in sites if s not in claimed and s in occupied]
            claimed.update(mine)
            if mine:
                mid = np.asarray(key, dtype=float).mean(axis=0)
                anchor = _nearest_site(mine, phys(mid), topo, origin)
                points.append(SamplingPoint("face", faces[key], phys(mid),
                                            anchor, len(mine)))

    # element interiors
    for ei, v in enumerate(elems):
        sites = [tuple(int(x) for x in s) for s in simplex_interior_sites(v)]
        mine = [s for s in sites if s not in claimed and s in occupied]
        claimed.update(mine)
        if mine:
            mid = v.mean(axis=0)
            anchor = _nearest_site(mine, phys(mid), topo, origin)
            points.append(SamplingPoint("barycenter", ei, phys(mid),
                                        anchor, len(mine)))

    total = sum(p.weight for p in points)
    if total != lattice.n_cells:
        raise SamplingError(
            f"sampling weights cover {total} cells but the lattice has "
            f"{lattice.n_cells}; the mesh misses or double-covers cells")
    return points


def exact_sampling_scheme(lattice):
    """One unit-weight point per occupied cell (the exact energy sum)."""
    return [
        SamplingPoint("vertex", -1, lattice.uc_center(c),
                      tuple(int(x) for x in c), 1)
        for c in lattice.cells
    ]
