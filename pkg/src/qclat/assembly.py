"""Sampled energy, gradient and Hessian of the coarse-grained lattice.

Every occupied cell carries the generalized DOF vector of its unit cell
(n_nodes * dofs-per-node entries); representative cells (mesh nodes) own
those DOFs, all other cells get them interpolated with the scalar shape
functions of the element that contains their Bravais coordinate.  The total
energy is the weighted sum over sampling cells of the per-cell stencil
energy (internal beams at full weight, boundary-crossing beams at half
weight from either side) minus the work of nodal loads on representative
DOFs.

The assembly precomputes, per sampling-stencil beam, which two cell rows
and node blocks feed the beam kernel; crossing beams are always evaluated
in their canonical orientation so the two half-weight evaluations of a
shared beam are bitwise identical.  Gradients chain the kernel derivatives
through the sparse interpolation operator; the Hessian accumulates the
congruence products of the padded interpolation rows in one deterministic
pass.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from qclat.beam import (
    BeamStressState, perpendicular_frame, planar_gradient_hessian,
    planar_strains, recover_stresses, spatial_gradient_hessian,
    spatial_strains,
)
from qclat.mesh import EDGE_PAIRS
from qclat.sampling import sampling_scheme


class AssemblyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# shape functions
# ---------------------------------------------------------------------------

def _barycentric(corners, points):
    """Barycentric coordinates of Bravais points, shape (n, d + 1)."""
    v = np.asarray(corners, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lam_rest = np.linalg.solve(
        (v[1:] - v[0]).T, (pts - v[0]).T).T
    return np.hstack([1.0 - lam_rest.sum(axis=1, keepdims=True), lam_rest])


def element_shape_values(element, points):
    """Shape function values in ``node_sites`` order, shape (n, n_nodes).

    Linear elements use the barycentric coordinates themselves, quadratic
    ones the standard corner/mid-edge polynomials; both sum to one.
    """
    lam = _barycentric(element.corners, points)
    if element.order == 1:
        return lam
    corner = lam * (2.0 * lam - 1.0)
    mids = np.stack([4.0 * lam[:, i] * lam[:, j]
                     for i, j in EDGE_PAIRS[element.dimension]], axis=1)
    return np.hstack([corner, mids])


def element_shape_gradients(element, point, basis):
    """Physical-space shape gradients at one Bravais point, (n_nodes, d)."""
    v = np.asarray(element.corners, dtype=float) @ basis
    minv = np.linalg.inv((v[1:] - v[0]).T)
    grad_lam = np.vstack([-minv.sum(axis=0), minv])
    if element.order == 1:
        return grad_lam
    lam = _barycentric(element.corners, point)[0]
    corner = (4.0 * lam - 1.0)[:, None] * grad_lam
    mids = np.stack([4.0 * (lam[i] * grad_lam[j] + lam[j] * grad_lam[i])
                     for i, j in EDGE_PAIRS[element.dimension]])
    return np.vstack([corner, mids])


def interpolate_uc(mesh, values, point):
    """DOF vector of one cell location interpolated from the mesh nodes.

    ``values`` is (n_rep, block).  Integer Bravais coordinates resolve
    through the deterministic cell ownership map (nodes reproduce their own
    DOFs exactly); other points fall to the first element containing them.
    """
    values = np.asarray(values)
    point = np.asarray(point, dtype=float)
    node_rank = mesh.node_index()
    site = tuple(int(round(x)) for x in point)
    if np.allclose(point, site):
        if site in node_rank:
            return values[node_rank[site]]
        owner = mesh.site_owners().get(site)
        if owner is None:
            raise AssemblyError(f"cell {site} lies outside the mesh")
        element = mesh.elements[owner]
    else:
        element = None
        for cand in mesh.elements:
            lam = _barycentric(cand.corners, point)[0]
            if lam.min() >= -1e-10:
                element = cand
                break
        if element is None:
            raise AssemblyError(f"point {point} lies outside the mesh")
    weights = element_shape_values(element, point)[0]
    rows = [node_rank[s] for s in element.node_sites()]
    return weights @ values[rows]


# ---------------------------------------------------------------------------
# DOF container
# ---------------------------------------------------------------------------

@dataclass
class DOFField:
    """Flat repUC DOF vector plus its Dirichlet data.

    ``block`` is the per-repUC stride (nodes per cell times DOFs per node);
    ``mask`` marks prescribed entries whose values live in ``target``.
    """

    values: np.ndarray
    block: int
    mask: np.ndarray = field(default=None)
    target: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.size % self.block:
            raise AssemblyError(
                f"DOF vector length {self.values.size} is not a multiple "
                f"of the repUC block {self.block}")
        if self.mask is None:
            self.mask = np.zeros(self.values.size, dtype=bool)
        if self.target is None:
            self.target = np.zeros(self.values.size)

    @staticmethod
    def rest(n_rep, block):
        return DOFField(np.zeros(n_rep * block), block)

    @property
    def n_rep(self):
        return self.values.size // self.block

    def apply_constraints(self):
        self.values[self.mask] = self.target[self.mask]

    def free(self):
        return ~self.mask

    def copy(self):
        return DOFField(self.values.copy(), self.block,
                        self.mask.copy(), self.target.copy())


@dataclass(frozen=True)
class EnergyReport:
    """Sampled total with its pieces; total = internal - external."""

    total: float
    internal: float
    external: float
    point_energies: np.ndarray


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

class QCAssembly:
    """Precomputed evaluation tables for one mesh + sampling scheme.

    Beam removal or mesh edits invalidate the tables; rebuild after either.
    """

    def __init__(self, mesh, properties, points=None):
        self.mesh = mesh
        self.lattice = mesh.lattice
        self.props = properties
        topo = self.lattice.topology
        self.dimension = topo.dimension
        self.n_nodes = topo.n_nodes
        self.dofs_per_node = topo.dofs_per_node
        self.block = self.n_nodes * self.dofs_per_node
        if points is None:
            points = sampling_scheme(mesh.corner_arrays(), self.lattice)
        self.points = list(points)
        self.node_sites = mesh.node_sites()
        self.n_rep = len(self.node_sites)
        self._build_stencil_table()
        self._build_interpolation()

    # -- tables ---------------------------------------------------------------

    def _build_stencil_table(self):
        topo = self.lattice.topology
        occupied = self.lattice.cell_index
        check_removed = bool(self.lattice.removed)
        eval_rows = {}

        def row_of(site):
            if site not in eval_rows:
                eval_rows[site] = len(eval_rows)
            return eval_rows[site]

        cell_k, cell_l, node_k, node_l = [], [], [], []
        beam_ids, weights, point_ids, owner_cells = [], [], [], []
        for pid, pt in enumerate(self.points):
            anchor = np.asarray(pt.anchor, dtype=int)
            for t in range(topo.n_stencil):
                neighbor = tuple(int(x) for x in anchor + topo.stencil_off[t])
                if neighbor not in occupied:
                    continue
                owned = topo.stencil_owned[t]
                if check_removed and self.lattice.is_removed(
                        pt.anchor, int(topo.stencil_beam[t]),
                        reversed_side=not owned):
                    continue
                # canonical orientation: both half-weight sides of a shared
                # beam evaluate the same endpoint order bit for bit
                if owned:
                    k_site, k_node = pt.anchor, int(topo.stencil_i[t])
                    l_site, l_node = neighbor, int(topo.stencil_j[t])
                    owner = pt.anchor
                else:
                    k_site, k_node = neighbor, int(topo.stencil_j[t])
                    l_site, l_node = pt.anchor, int(topo.stencil_i[t])
                    owner = neighbor
                cell_k.append(row_of(k_site))
                cell_l.append(row_of(l_site))
                node_k.append(k_node)
                node_l.append(l_node)
                beam_ids.append(int(topo.stencil_beam[t]))
                weights.append(pt.weight * topo.stencil_weight[t])
                point_ids.append(pid)
                owner_cells.append(owner)

        self.eval_sites = list(eval_rows)
        self.n_eval = len(self.eval_sites)
        self._cell_k = np.array(cell_k, dtype=int)
        self._cell_l = np.array(cell_l, dtype=int)
        self._node_k = np.array(node_k, dtype=int)
        self._node_l = np.array(node_l, dtype=int)
        self._beam = np.array(beam_ids, dtype=int)
        self._weight = np.array(weights)
        self._point = np.array(point_ids, dtype=int)
        self._owner_cells = owner_cells
        self.n_terms = self._beam.size
        if self.n_terms == 0:
            raise AssemblyError("the sampling scheme produced no beam terms")

        self._length = self.lattice.topology.beam_lengths[self._beam]
        axes = self.lattice.topology.beam_axes
        self._axis = axes[self._beam]
        if self.dimension == 3:
            frames = perpendicular_frame(axes)
            self._frame = frames[self._beam]

    def _build_interpolation(self):
        owners = self.mesh.site_owners()
        by_element = defaultdict(list)
        for row, site in enumerate(self.eval_sites):
            owner = owners.get(site)
            if owner is None:
                raise AssemblyError(
                    f"sampling stencil needs cell {site}, which no mesh "
                    f"element contains")
            by_element[owner].append(row)

        node_rank = self.mesh.node_index()
        width = max(len(e.node_sites()) for e in self.mesh.elements)
        reps = np.zeros((self.n_eval, width), dtype=int)
        vals = np.zeros((self.n_eval, width))
        for ei, rows in sorted(by_element.items()):
            element = self.mesh.elements[ei]
            nodes = element.node_sites()
            node_cols = {s: c for c, s in enumerate(nodes)}
            ranks = np.array([node_rank[s] for s in nodes], dtype=int)
            plain = []
            for row in rows:
                site = self.eval_sites[row]
                col = node_cols.get(site)
                if col is None:
                    plain.append(row)
                else:
                    reps[row, 0] = ranks[col]   # nodes keep their own DOFs
                    vals[row, 0] = 1.0
            if plain:
                pts = np.array([self.eval_sites[r] for r in plain])
                shapes = element_shape_values(element, pts)
                reps[plain, :len(nodes)] = ranks
                vals[plain, :len(nodes)] = shapes
        self._interp_reps = reps
        self._interp_vals = vals
        self.interpolation = sparse.csr_matrix(
            (vals.ravel(), (np.repeat(np.arange(self.n_eval), width),
                            reps.ravel())),
            shape=(self.n_eval, self.n_rep))

    # -- evaluation -------------------------------------------------------------

    def _phi2d(self, dofs):
        values = dofs.values if isinstance(dofs, DOFField) else dofs
        values = np.asarray(values, dtype=float)
        if values.size != self.n_rep * self.block:
            raise AssemblyError(
                f"expected {self.n_rep * self.block} DOFs, got {values.size}")
        return values.reshape(self.n_rep, self.block)

    def cell_dofs(self, dofs):
        """Interpolated DOF vectors of every stencil cell, (n_eval, block)."""
        return self.interpolation @ self._phi2d(dofs)

    def _endpoint_dofs(self, cell_values):
        m = self.dofs_per_node
        per_node = cell_values.reshape(self.n_eval * self.n_nodes, m)
        d_k = per_node[self._cell_k * self.n_nodes + self._node_k]
        d_l = per_node[self._cell_l * self.n_nodes + self._node_l]
        return np.hstack([d_k, d_l])

    def _beam_terms(self, dofs, with_hessian):
        local = self._endpoint_dofs(self.cell_dofs(dofs))
        if self.dimension == 2:
            return planar_gradient_hessian(
                self.props, self._axis, self._length, local,
                with_hessian=with_hessian)
        energy, grad, hess = spatial_gradient_hessian(
            self.props, self._frame, self._length, local)
        return energy, grad, (hess if with_hessian else None)

    def beam_energies(self, dofs):
        """Unweighted energy of every stencil beam term."""
        return self._beam_terms(dofs, with_hessian=False)[0]

    def energy(self, dofs, loads=None):
        energies, _, _ = self._beam_terms(dofs, with_hessian=False)
        internal = float(self._weight @ energies)
        per_point = np.zeros(len(self.points))
        np.add.at(per_point, self._point, self._weight * energies)
        external = 0.0
        if loads is not None:
            external = float(np.asarray(loads).ravel()
                             @ self._phi2d(dofs).ravel())
        return EnergyReport(internal - external, internal, external,
                            per_point)

    def gradient(self, dofs, loads=None):
        _, grads, _ = self._beam_terms(dofs, with_hessian=False)
        m = self.dofs_per_node
        weighted = self._weight[:, None] * grads
        cell_grad = np.zeros(self.n_eval * self.n_nodes * m)
        idx_k = ((self._cell_k * self.n_nodes + self._node_k) * m)[:, None] \
            + np.arange(m)
        idx_l = ((self._cell_l * self.n_nodes + self._node_l) * m)[:, None] \
            + np.arange(m)
        np.add.at(cell_grad, idx_k, weighted[:, :m])
        np.add.at(cell_grad, idx_l, weighted[:, m:])
        out = self.interpolation.T \
            @ cell_grad.reshape(self.n_eval, self.block)
        out = out.ravel()
        if loads is not None:
            out = out - np.asarray(loads).ravel()
        return out

    def hessian(self, dofs):
        """Sparse symmetric tangent, (n_rep * block) square.

        Assembled as the congruence of the cell-level tangent with the
        block-expanded interpolation operator; the cell-level scatter stays
        proportional to the number of beam terms, independent of how many
        mesh nodes feed each interpolated cell.
        """
        _, _, hess = self._beam_terms(dofs, with_hessian=True)
        hess = self._weight[:, None, None] * hess
        m = self.dofs_per_node
        base = ((self._cell_k * self.n_nodes + self._node_k) * m,
                (self._cell_l * self.n_nodes + self._node_l) * m)
        unit = np.arange(m)
        n_cell = self.n_eval * self.block
        cell_level = sparse.csr_matrix((n_cell, n_cell))
        for p, base_p in enumerate(base):
            rows = (base_p[:, None, None] + unit[None, :, None])
            for q, base_q in enumerate(base):
                cols = (base_q[:, None, None] + unit[None, None, :])
                shape = (self.n_terms, m, m)
                quadrant = sparse.coo_matrix(
                    (hess[:, p * m:(p + 1) * m, q * m:(q + 1) * m].ravel(),
                     (np.broadcast_to(rows, shape).ravel(),
                      np.broadcast_to(cols, shape).ravel())),
                    shape=(n_cell, n_cell))
                cell_level = cell_level + quadrant.tocsr()
        expanded = sparse.kron(self.interpolation,
                               sparse.identity(self.block, format="csr"),
                               format="csr")
        matrix = (expanded.T @ cell_level @ expanded).tocsr()
        return 0.5 * (matrix + matrix.T)

    # -- recovery ---------------------------------------------------------------

    def beam_strains(self, dofs):
        local = self._endpoint_dofs(self.cell_dofs(dofs))
        if self.dimension == 2:
            return planar_strains(self._axis, self._length, local)
        return spatial_strains(self._frame, self._length, local)

    def beam_stresses(self, dofs):
        """Per-beam stress recovery over the sampled stencils.

        Shared beams sampled from both sides are reported once, keyed by
        their canonical owner cell and beam id.
        """
        stresses = recover_stresses(self.props, self.beam_strains(dofs),
                                    self._length)
        seen = {}
        for k in range(self.n_terms):
            key = (self._owner_cells[k], int(self._beam[k]))
            if key not in seen:
                seen[key] = k
        rows = np.array(sorted(seen.values()), dtype=int)
        keys = [(self._owner_cells[k], int(self._beam[k])) for k in rows]
        return keys, BeamStressState(
            axial=stresses.axial[rows],
            bending_k=stresses.bending_k[rows],
            bending_l=stresses.bending_l[rows],
            tensile=stresses.tensile[rows])

    def deformation_gradients(self, dofs):
        """Mean-translation deformation gradient per element barycenter."""
        phi = self._phi2d(dofs)
        node_rank = self.mesh.node_index()
        d = self.dimension
        m = self.dofs_per_node
        basis = self.lattice.topology.basis
        out = np.empty((len(self.mesh.elements), d, d))
        for ei, element in enumerate(self.mesh.elements):
            nodes = element.node_sites()
            rows = [node_rank[s] for s in nodes]
            blocks = phi[rows].reshape(len(nodes), self.n_nodes, m)
            mean_u = blocks[:, :, :d].mean(axis=1)
            center = np.asarray(element.corners, dtype=float).mean(axis=0)
            grads = element_shape_gradients(element, center, basis)
            out[ei] = np.eye(d) + mean_u.T @ grads
        return out

    def dof_index(self, site, node=0, comp=0):
        """Flat DOF index of (repUC site, basis node, component)."""
        rank = self.mesh.node_index().get(tuple(int(x) for x in site))
        if rank is None:
            raise AssemblyError(f"cell {tuple(site)} is not a repUC")
        if not 0 <= node < self.n_nodes:
            raise AssemblyError(f"node {node} out of range")
        if not 0 <= comp < self.dofs_per_node:
            raise AssemblyError(f"component {comp} out of range")
        return rank * self.block + node * self.dofs_per_node + comp


def sampling_energy(mesh, properties, point, dofs):
    """Unweighted stencil energy W of one sampling cell."""
    assembly = QCAssembly(mesh, properties, points=[point])
    report = assembly.energy(dofs)
    return report.internal / point.weight if point.weight else 0.0
