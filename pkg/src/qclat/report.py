"""Artifact writers: JSON summary, CSV series, legacy-VTK field exports.

Everything here is deterministic: keys are sorted, floats use repr, and no
timestamps are written, so identical runs produce byte-identical files.
The VTK writers emit version 3.0 ASCII unstructured grids (the layout is
documented in the README); meshes use cell types 5/22/10/24, beam networks
plain lines (type 3) with tensile stress as cell data.
"""

import csv
import json

import numpy as np

# (dimension, order) -> VTK cell type
VTK_CELL_TYPES = {(2, 1): 5,      # triangle
                  (2, 2): 22,     # quadratic triangle
                  (3, 1): 10,     # tetrahedron
                  (3, 2): 24}     # quadratic tetrahedron
VTK_LINE = 3

# our quadratic tets list mid-edge nodes as (01)(02)(03)(12)(13)(23);
# VTK type 24 wants (01)(12)(02)(03)(13)(23)
_TET_MIDPOINTS = (0, 3, 1, 2, 4, 5)

SUMMARY_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "qclat summary",
    "type": "object",
    "required": ["benchmark", "command", "topology", "settings", "results"],
    "properties": {
        "benchmark": {"enum": ["cook", "boundary-layer",
                               "through-thickness"]},
        "command": {"enum": ["run", "sweep", "compare-orders",
                             "weights-audit"]},
        "topology": {"type": "string"},
        "settings": {"type": "object"},
        "mesh": {
            "type": "object",
            "required": ["n_unit_cells", "n_repucs", "repuc_density"],
            "properties": {
                "n_unit_cells": {"type": "integer", "minimum": 1},
                "n_repucs": {"type": "integer", "minimum": 1},
                "repuc_density": {"type": "number",
                                  "exclusiveMinimum": 0.0,
                                  "maximum": 1.0},
            },
        },
        "stages": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["stage", "n_repucs", "repuc_density", "energy",
                             "max_tensile"],
                "properties": {
                    "stage": {"type": "integer", "minimum": 0},
                    "threshold": {"type": "number"},
                    "n_repucs": {"type": "integer"},
                    "n_unit_cells": {"type": "integer"},
                    "repuc_density": {"type": "number"},
                    "energy": {"type": "number"},
                    "max_tensile": {"type": "number"},
                    "n_flagged": {"type": "integer"},
                    "iterations": {"type": "integer"},
                    "residual": {"type": "number"},
                },
            },
        },
        "results": {"type": "object"},
    },
    "allOf": [
        {"if": {"properties": {"command": {"const": "run"},
                               "benchmark": {"const": "cook"}}},
         "then": {"properties": {"results": {
             "required": ["max_displacement", "force", "energy"]}}}},
        {"if": {"properties": {"command": {"const": "run"},
                               "benchmark": {"const": "boundary-layer"}}},
         "then": {"properties": {"results": {
             "required": ["k_applied", "k_ic", "kbar_ic", "sigma_t_max",
                          "critical_distance"]}}}},
        {"if": {"properties": {"command": {"const": "run"},
                               "benchmark": {"const": "through-thickness"}}},
         "then": {"properties": {"results": {
             "required": ["opening_resistance", "critical_layer",
                          "sigma_t_max", "layer_peaks"]}}}},
        {"if": {"properties": {"command": {"const": "sweep"}}},
         "then": {"properties": {"results": {
             "required": ["densities", "kbar_ic", "fit"]}}}},
        {"if": {"properties": {"command": {"const": "compare-orders"}}},
         "then": {"properties": {"results": {
             "required": ["reference", "rows"]}}}},
        {"if": {"properties": {"command": {"const": "weights-audit"}}},
         "then": {"properties": {"results": {
             "required": ["weight_total", "n_unit_cells", "match"]}}}},
    ],
}


def _plain(value):
    """Recursively coerce numpy scalars/arrays for the json encoder."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_json(path, payload):
    """Sorted-key JSON with a trailing newline; numpy values coerced."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_plain(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v
                             for v in row])


def stage_rows(records):
    """CSV rows mirroring the refinement history of a staged solve."""
    rows = []
    for r in records:
        rows.append((r.stage, r.threshold, r.n_rep, r.n_cells,
                     float(r.density), float(r.energy),
                     float(r.max_tensile), r.n_flagged,
                     r.result.iterations, float(r.result.residuals[-1])))
    return rows


STAGE_HEADER = ("stage", "threshold", "n_repucs", "n_unit_cells",
                "repuc_density", "energy", "max_tensile", "n_flagged",
                "iterations", "residual")


def stage_summary(records):
    return [{"stage": r.stage, "threshold": float(r.threshold),
             "n_repucs": r.n_rep, "n_unit_cells": r.n_cells,
             "repuc_density": float(r.density), "energy": float(r.energy),
             "max_tensile": float(r.max_tensile), "n_flagged": r.n_flagged,
             "iterations": r.result.iterations,
             "residual": float(r.result.residuals[-1])}
            for r in records]


def write_sampling_csv(path, points):
    """Debug dump of a sampling scheme: one row per sampling point."""
    dim = len(points[0].anchor) if points else 0
    header = (("element", "category")
              + tuple(f"cell_{ax}" for ax in "ijk"[:dim]) + ("weight",))
    rows = [(p.element, p.category) + tuple(int(c) for c in p.anchor)
            + (float(p.weight),) for p in points]
    write_csv(path, header, rows)


def write_energy_csv(path, points, energies):
    """Per-sampling-point internal energies, aligned with the scheme."""
    dim = len(points[0].anchor) if points else 0
    header = (("element", "category")
              + tuple(f"cell_{ax}" for ax in "ijk"[:dim])
              + ("weight", "energy"))
    rows = [(p.element, p.category) + tuple(int(c) for c in p.anchor)
            + (float(p.weight), float(e))
            for p, e in zip(points, energies)]
    write_csv(path, header, rows)


def _format_floats(values):
    return " ".join(f"{v:.9g}" for v in values)


def _pad3(coords):
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    if coords.shape[1] == 3:
        return coords
    out = np.zeros((coords.shape[0], 3))
    out[:, :coords.shape[1]] = coords
    return out


def _vtk_header(fh, title, n_points, points):
    fh.write("# vtk DataFile Version 3.0\n")
    fh.write(f"{title}\n")
    fh.write("ASCII\n")
    fh.write("DATASET UNSTRUCTURED_GRID\n")
    fh.write(f"POINTS {n_points} double\n")
    for p in points:
        fh.write(_format_floats(p) + "\n")


def mesh_to_vtk(path, mesh, displacement=None):
    """Write the QC mesh as a legacy unstructured grid.

    Points are the physical anchors of the repUC sites; ``displacement``
    (repUC DOF rows) adds the mean basis-node translation as point data
    so the coarse field can be warped in a viewer.
    """
    lattice = mesh.lattice
    topo = lattice.topology
    sites = mesh.node_sites()
    rank = mesh.node_index()
    points = _pad3([lattice.uc_center(s) for s in sites])

    connect = []
    types = []
    for element in mesh.elements:
        idx = [rank[s] for s in element.node_sites()]
        if (topo.dimension, element.order) == (3, 2):
            idx = idx[:4] + [idx[4 + p] for p in _TET_MIDPOINTS]
        connect.append(idx)
        types.append(VTK_CELL_TYPES[(topo.dimension, element.order)])

    with open(path, "w", encoding="utf-8") as fh:
        _vtk_header(fh, "qclat mesh", len(sites), points)
        total = sum(len(c) + 1 for c in connect)
        fh.write(f"CELLS {len(connect)} {total}\n")
        for c in connect:
            fh.write(" ".join(str(i) for i in [len(c)] + c) + "\n")
        fh.write(f"CELL_TYPES {len(types)}\n")
        for t in types:
            fh.write(f"{t}\n")
        if displacement is not None:
            d = topo.dimension
            m = topo.dofs_per_node
            blocks = np.asarray(displacement).reshape(len(sites), -1)
            mean_u = blocks.reshape(len(sites), topo.n_nodes, m)[
                :, :, :d].mean(axis=1)
            fh.write(f"POINT_DATA {len(sites)}\n")
            fh.write("VECTORS displacement double\n")
            for row in _pad3(mean_u):
                fh.write(_format_floats(row) + "\n")


def beams_to_vtk(path, lattice, keys, tensile, displacement=None, mesh=None):
    """Write recovered beams as VTK lines with tensile stress cell data.

    ``keys`` and ``tensile`` come from stress recovery (owner cell, beam
    id); with ``displacement`` and the owning ``mesh`` each endpoint also
    carries its interpolated translation vector.
    """
    from .assembly import interpolate_uc

    topo = lattice.topology
    d = topo.dimension
    m = topo.dofs_per_node
    offsets = np.asarray(topo.node_offsets)

    point_ids = {}
    points = []
    moves = []
    lines = []
    rank = mesh.node_index() if mesh is not None else {}
    cache = {}

    def endpoint(cell, node):
        key = (cell, node)
        if key not in point_ids:
            point_ids[key] = len(points)
            points.append(lattice.uc_center(cell) + offsets[node])
            if displacement is not None:
                if cell not in cache:
                    row = rank.get(cell)
                    cache[cell] = (displacement[row] if row is not None
                                   else interpolate_uc(mesh, displacement,
                                                       cell))
                moves.append(cache[cell].reshape(topo.n_nodes, m)[node, :d])
        return point_ids[key]

    for cell, bid in keys:
        node_i, off, node_j = topo.beam_endpoints(bid)
        other = tuple(int(a + b) for a, b in zip(cell, off))
        lines.append((endpoint(cell, node_i), endpoint(other, node_j)))

    with open(path, "w", encoding="utf-8") as fh:
        _vtk_header(fh, "qclat beams", len(points), _pad3(points))
        fh.write(f"CELLS {len(lines)} {3 * len(lines)}\n")
        for a, b in lines:
            fh.write(f"2 {a} {b}\n")
        fh.write(f"CELL_TYPES {len(lines)}\n")
        for _ in lines:
            fh.write(f"{VTK_LINE}\n")
        fh.write(f"CELL_DATA {len(lines)}\n")
        fh.write("SCALARS tensile double 1\n")
        fh.write("LOOKUP_TABLE default\n")
        for v in tensile:
            fh.write(f"{float(v):.9g}\n")
        if displacement is not None:
            fh.write(f"POINT_DATA {len(points)}\n")
            fh.write("VECTORS displacement double\n")
            for row in _pad3(moves):
                fh.write(_format_floats(row) + "\n")
