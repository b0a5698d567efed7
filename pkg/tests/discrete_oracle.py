"""Plain direct assembler over every node and beam of a lattice.

Reference model for the coarse-grained assembly: no interpolation, no
sampling, no stencil bookkeeping.  Every node of every cell carries DOFs in
cell-major order and every canonical beam is evaluated exactly once.
"""

import numpy as np

from qclat.beam import (
    perpendicular_frame, planar_gradient_hessian, spatial_gradient_hessian,
)


class DirectModel:
    def __init__(self, lattice, props):
        topo = lattice.topology
        self.props = props
        self.d = topo.dimension
        self.m = topo.dofs_per_node
        self.nn = topo.n_nodes
        ca, na, cb, nb, bid, alive = lattice.beam_table()
        self.ik = ca[alive] * self.nn + na[alive]
        self.il = cb[alive] * self.nn + nb[alive]
        self.length = topo.beam_lengths[bid[alive]]
        self.axis = topo.beam_axes[bid[alive]]
        if self.d == 3:
            self.frame = perpendicular_frame(topo.beam_axes)[bid[alive]]
        self.n_dofs = lattice.n_cells * self.nn * self.m

    def _terms(self, u, with_hessian):
        per_node = np.asarray(u, dtype=float).reshape(-1, self.m)
        dofs = np.hstack([per_node[self.ik], per_node[self.il]])
        if self.d == 2:
            return planar_gradient_hessian(
                self.props, self.axis, self.length, dofs,
                with_hessian=with_hessian)
        return spatial_gradient_hessian(
            self.props, self.frame, self.length, dofs)

    def energy(self, u):
        return float(self._terms(u, False)[0].sum())

    def gradient(self, u):
        _, grads, _ = self._terms(u, False)
        out = np.zeros(self.n_dofs)
        m = self.m
        idx_k = (self.ik * m)[:, None] + np.arange(m)
        idx_l = (self.il * m)[:, None] + np.arange(m)
        np.add.at(out, idx_k, grads[:, :m])
        np.add.at(out, idx_l, grads[:, m:])
        return out

    def hessian(self, u):
        _, _, hess = self._terms(u, True)
        out = np.zeros((self.n_dofs, self.n_dofs))
        m = self.m
        unit = np.arange(m)
        ends = (self.ik * m, self.il * m)
        for p, base_p in enumerate(ends):
            for q, base_q in enumerate(ends):
                rows = base_p[:, None, None] + unit[None, :, None]
                cols = base_q[:, None, None] + unit[None, None, :]
                block = hess[:, p * m:(p + 1) * m, q * m:(q + 1) * m]
                shape = (len(base_p), m, m)
                np.add.at(out, (np.broadcast_to(rows, shape).ravel(),
                                np.broadcast_to(cols, shape).ravel()),
                          block.ravel())
        return out
