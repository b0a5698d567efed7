"""Independent brute-force reference implementations used as test oracles.

Everything here is deliberately written the slow and obvious way, without
reusing the package's own derived tables, so that agreement is meaningful.
"""

import numpy as np


def brute_force_beam_pairs(lattice, tol=1e-9):
    """All beams of a finite lattice found by pairwise distance matching.

    Enumerates every node position, then pairs whose Euclidean distance
    matches one of the topology's beam lengths.  Returns a set of frozensets
    of rounded endpoint coordinates (rounding keys float positions).
    """
    topo = lattice.topology
    pos = lattice.node_positions().reshape(-1, topo.dimension)
    lengths = np.unique(np.round(topo.beam_lengths, 9))
    pairs = set()
    for a in range(len(pos)):
        d = np.linalg.norm(pos[a + 1:] - pos[a], axis=1)
        for off in np.nonzero(np.any(np.abs(d[:, None] - lengths) < tol, axis=1))[0]:
            b = a + 1 + off
            pairs.add(frozenset((_key(pos[a]), _key(pos[b]))))
    return pairs


def beam_table_pairs(lattice):
    """The same endpoint-pair set read off the package's beam table."""
    topo = lattice.topology
    centers = lattice.centers()
    ca, na, cb, nb, _, alive = lattice.beam_table()
    pos_a = centers[ca] + topo.node_offsets[na]
    pos_b = centers[cb] + topo.node_offsets[nb]
    return {
        frozenset((_key(pa), _key(pb)))
        for pa, pb, ok in zip(pos_a, pos_b, alive) if ok
    }


def _key(p):
    return tuple(np.round(p, 6))


def node_degrees(topology):
    """Per-node beam degree counted directly from the raw beam lists."""
    deg = np.zeros(topology.n_nodes, dtype=int)
    for i, j in topology.internal_beams:
        deg[i] += 1
        deg[j] += 1
    for i, _, j in topology.neighbor_beams:
        deg[i] += 1
        deg[j] += 1
    return deg


def brute_segment_interior_count(y1, y2):
    """Integer points strictly between two integer points, by enumeration."""
    a = np.asarray(y1, dtype=np.int64)
    b = np.asarray(y2, dtype=np.int64)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    grids = np.meshgrid(*(np.arange(l, h + 1) for l, h in zip(lo, hi)),
                        indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    d = b - a
    count = 0
    for p in pts:
        r = p - a
        if _collinear(r, d) and 0 < r @ d < d @ d:
            count += 1
    return count


def _collinear(r, d):
    if len(r) == 2:
        return r[0] * d[1] - r[1] * d[0] == 0
    return not np.any(np.cross(r, d))


def cross2(u, v):
    """Scalar cross product of planar vectors."""
    return u[0] * v[1] - u[1] * v[0]


def brute_simplex_interior_count(vertices):
    """Integer points strictly inside a simplex, by rational barycentrics."""
    v = np.asarray(vertices, dtype=np.int64)
    d = v.shape[1]
    lo = v.min(axis=0)
    hi = v.max(axis=0)
    grids = np.meshgrid(*(np.arange(l, h + 1) for l, h in zip(lo, hi)),
                        indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    mat = (v[1:] - v[0]).T.astype(float)
    inv = np.linalg.inv(mat)
    count = 0
    for p in pts:
        lam = inv @ (p - v[0])
        lams = np.concatenate([[1.0 - lam.sum()], lam])
        if np.all(lams > 1e-9):
            count += 1
    return count


def brute_face_interior_count(vertices):
    """Integer points strictly inside a 3D integer triangle, in its plane."""
    v = np.asarray(vertices, dtype=np.int64)
    n = np.cross(v[1] - v[0], v[2] - v[0])
    lo = v.min(axis=0)
    hi = v.max(axis=0)
    grids = np.meshgrid(*(np.arange(l, h + 1) for l, h in zip(lo, hi)),
                        indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    on_plane = pts[(pts - v[0]) @ n == 0]
    count = 0
    for p in on_plane:
        inside = True
        for k in range(3):
            edge = v[(k + 1) % 3] - v[k]
            if np.cross(edge, p - v[k]) @ n <= 0:
                inside = False
                break
        if inside:
            count += 1
    return count


def convex_polygon_contains(vertices, point):
    """Strict convex containment by cross-product signs (CCW vertices)."""
    v = np.asarray(vertices, dtype=float)
    p = np.asarray(point, dtype=float)
    for k in range(len(v)):
        ex, ey = v[(k + 1) % len(v)] - v[k]
        rx, ry = p - v[k]
        if ex * ry - ey * rx < 0.0:
            return False
    return True
