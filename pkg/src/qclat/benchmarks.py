"""Benchmark drivers: Cook's membrane and fracture case wiring.

The Cook geometry is the classical tapered quadrilateral (length 48, left
edge 44, right edge 16, uniformly scalable), filled with unit cells and
loaded like the physical test: every left-edge cell is clamped at its
left-most nodes (all DOFs), a total vertical force is split uniformly
over the right-most nodes of the right-edge cells.  On a coarsened model
the clamp acts on the edge cells that are representative (interpolation
pins the cells in between), and the force enters through the
work-equivalent load vector so interpolated edge cells keep their share.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .assembly import interpolate_uc
from .beam import BeamProperties
from .config import ConfigError
from .fracture import (FractureCase, FractureError, ThroughThicknessCase,
                       boundary_layer_model, relative_density_to_thickness,
                       through_thickness_model)
from .lattice import (DiscreteLattice, Polygon, Prism, build_topology,
                      instantiate_region)
from .mesh import build_qc_mesh
from .solver import (DirichletBC, NodalLoad, consistent_load_vector,
                     staged_solve)

log = logging.getLogger("qclat.benchmarks")


def cook_polygon(length, left_height, right_height):
    """Vertices of the tapered membrane, counterclockwise from the origin."""
    return np.array([[0.0, 0.0],
                     [length, left_height],
                     [length, left_height + right_height],
                     [0.0, left_height]])


def _erode_to_blocks(topology, lattice):
    """Drop fill cells that belong to no fully occupied unit block.

    Coarse meshing covers the domain with blocks of cells, so a ragged
    polygon fill may leave protruding staircase cells no element can
    reach.  Eroding to the block-coverable fixpoint removes only such
    spikes; box-shaped domains pass through untouched.
    """
    d = topology.dimension
    offsets = np.stack(np.meshgrid(*([np.arange(2)] * d),
                                   indexing="ij")).reshape(d, -1).T
    cells = {tuple(int(v) for v in c) for c in lattice.cells}
    while True:
        anchors = {a for a in
                   (tuple(np.asarray(c) - o) for c in cells for o in offsets)
                   if all(tuple(np.asarray(a) + o) in cells for o in offsets)}
        kept = {tuple(np.asarray(a) + o) for a in anchors for o in offsets}
        kept &= cells
        if kept == cells:
            break
        if not kept:
            raise ConfigError("membrane fill collapses under block "
                              "erosion; enlarge cook.scale")
        cells = kept
    if len(cells) == lattice.n_cells:
        return lattice
    log.info("eroded %d ragged fill cell(s)", lattice.n_cells - len(cells))
    return DiscreteLattice(topology, sorted(cells), origin=lattice.origin)


@dataclass(frozen=True)
class CookModel:
    """Cook's membrane ready to solve: geometry, mesh and loading."""

    topology: object
    properties: BeamProperties
    lattice: object
    mesh: object
    bcs: object
    loads: object
    force: float
    clamped: tuple                   # (site, node) pairs held fixed
    loaded: tuple                    # (site, node) pairs sharing the force


def _edge_cells(lattice):
    """Left- and right-edge cells, one per transverse row of the domain.

    The edge columns follow the physical anchor abscissa so oblique bases
    (where the Bravais index shears across rows) pick the true edge cell.
    """
    cells = lattice.cells
    x = lattice.centers()[:, 0]
    rows = {}
    for k, c in enumerate(cells):
        rows.setdefault(tuple(int(v) for v in c[1:]), []).append(k)
    left, right = [], []
    for members in rows.values():
        members = sorted(members, key=lambda k: x[k])
        left.append(tuple(int(v) for v in cells[members[0]]))
        right.append(tuple(int(v) for v in cells[members[-1]]))
    return sorted(left), sorted(right)


def _extremal_nodes(topology, side):
    offsets = np.asarray(topology.node_offsets)[:, 0]
    goal = offsets.min() if side == "left" else offsets.max()
    return [int(n) for n in np.flatnonzero(np.abs(offsets - goal) <= 1e-9)]


def build_cook_model(cfg, spacing=None, order=None, lattice=None):
    """Lattice, QC mesh and boundary conditions for one membrane run."""
    topo = build_topology(cfg.topology)
    geo = cfg.cook
    vertices = cook_polygon(geo.length * geo.scale,
                            geo.left_height * geo.scale,
                            geo.right_height * geo.scale)
    if lattice is None:
        region = Polygon(vertices)
        if topo.dimension == 3:
            region = Prism(region, -0.5 * abs(topo.basis[2][2]),
                           (geo.layers - 0.5) * abs(topo.basis[2][2]))
        lattice = _erode_to_blocks(topo, instantiate_region(topo, region))
        for axis in range(topo.dimension):
            across = np.unique(lattice.cells[:, axis]).size
            if across < 3:
                raise ConfigError(
                    f"membrane spans only {across} unit cells along axis "
                    f"{axis}; enlarge cook.scale for this strut length")

    thickness = cfg.material.thickness
    if thickness is None:
        thickness = relative_density_to_thickness(topo,
                                                  cfg.material.rel_density)
    if topo.dimension == 2:
        props = BeamProperties.rectangle(
            cfg.material.young_modulus, cfg.material.poisson_ratio,
            thickness, timoshenko=cfg.material.shear_correction)
    else:
        props = BeamProperties.circle(
            cfg.material.young_modulus, cfg.material.poisson_ratio,
            thickness, timoshenko=cfg.material.shear_correction)

    left, right = _edge_cells(lattice)
    clamp_nodes = _extremal_nodes(topo, "left")
    load_nodes = _extremal_nodes(topo, "right")
    clamped = tuple((site, node) for site in left for node in clamp_nodes)
    loaded = tuple((site, node) for site in right for node in load_nodes)
    per_node = cfg.cook.force / len(loaded)

    m = topo.dofs_per_node

    def bcs(assembly):
        rank = assembly.mesh.node_index()
        held = [(site, node) for site, node in clamped if site in rank]
        if not held:
            raise ConfigError("no clamped edge cell is representative; "
                              "reduce qc.spacing")
        return [DirichletBC(site, node, comp, 0.0)
                for site, node in held for comp in range(m)]

    def loads(assembly):
        return consistent_load_vector(
            assembly,
            [NodalLoad(site, node, 1, per_node) for site, node in loaded])

    spacing = cfg.qc.spacing if spacing is None else spacing
    if topo.dimension == 3 and spacing > 1:
        # thin plates coarsen in plane; two Bravais steps span the minimal
        # 3-layer thickness and keep quadratic mid-edge nodes on sites
        spacing = (spacing, spacing, 2)
    mesh = build_qc_mesh(
        lattice, spacing,
        order=cfg.order if order is None else order)
    return CookModel(topology=topo, properties=props, lattice=lattice,
                     mesh=mesh, bcs=bcs, loads=loads, force=cfg.cook.force,
                     clamped=clamped, loaded=loaded)


def pulled_displacement(mesh, values, direction=1):
    """Largest nodal displacement along the pull direction, all cells.

    Interpolated cells are reconstructed through their elements, so the
    metric sees the whole lattice rather than just the representative
    cells.
    """
    rank = mesh.node_index()
    m = mesh.lattice.topology.dofs_per_node
    best = -math.inf
    for cell in mesh.lattice.cells:
        site = tuple(int(v) for v in cell)
        row = rank.get(site)
        block = values[row] if row is not None \
            else interpolate_uc(mesh, values, site)
        best = max(best, float(block.reshape(-1, m)[:, direction].max()))
    return best


@dataclass(frozen=True)
class CookRun:
    model: CookModel
    records: tuple
    max_displacement: float
    n_uc: int
    n_rep: int
    density: float


def run_cook(cfg, spacing=None, order=None, lattice=None):
    """Solve one membrane configuration and extract the tip metric."""
    model = build_cook_model(cfg, spacing=spacing, order=order,
                             lattice=lattice)
    records = staged_solve(model.mesh, model.properties, model.bcs,
                           cfg.refinement, cfg.solver, loads=model.loads,
                           sampling=cfg.qc.sampling)
    final = records[-1]
    values = final.result.dofs.values.reshape(final.n_rep, -1)
    sign = 1.0 if model.force > 0 else -1.0
    metric = sign * pulled_displacement(
        model.mesh, sign * values, direction=1)
    log.info("cook %s spacing=%s order=%s: density=%.4f max_uy=%.6e",
             cfg.topology, spacing or cfg.qc.spacing,
             order or cfg.order, final.density, metric)
    return CookRun(model=model, records=tuple(records),
                   max_displacement=metric, n_uc=final.n_cells,
                   n_rep=final.n_rep, density=final.density)


@dataclass(frozen=True)
class OrderComparison:
    reference: CookRun
    rows: tuple                      # (mode, spacing, n_rep, n_uc,
    #                                   density, metric, rel_error)


def compare_orders(cfg):
    """Locking benchmark: first- versus second-order error at matched cost.

    A second-order mesh with doubled spacing carries the same node grid as
    the first-order mesh (corners plus mid-edge sites), so pairing spacing
    n against 2n compares the interpolation orders at equal repUC density.
    The fully resolved model provides the reference and doubles as the
    sanity row of the series.
    """
    model = build_cook_model(cfg, spacing=1, order=1)
    n_uc = model.lattice.n_cells
    if n_uc > cfg.cook.max_reference_ucs:
        raise ConfigError(
            f"fully resolved reference needs {n_uc} unit cells, beyond "
            f"cook.max_reference_ucs={cfg.cook.max_reference_ucs}")
    reference = run_cook(cfg, spacing=1, order=1, lattice=model.lattice)
    ref_metric = reference.max_displacement
    if ref_metric == 0.0:
        raise ConfigError("reference tip displacement vanished; "
                          "increase cook.force")

    rows = []

    def add(mode, run, spacing):
        error = abs(run.max_displacement - ref_metric) / abs(ref_metric)
        rows.append((mode, spacing, run.n_rep, run.n_uc, run.density,
                     run.max_displacement, error))

    anchor = run_cook(cfg, spacing=1, order=1, lattice=model.lattice)
    add("first", anchor, 1)
    for n in cfg.cook.spacings:
        add("first", run_cook(cfg, spacing=n, order=1,
                              lattice=model.lattice), n)
        add("second", run_cook(cfg, spacing=2 * n, order=2,
                               lattice=model.lattice), 2 * n)
    return OrderComparison(reference=reference, rows=tuple(rows))


# ---------------------------------------------------------------------------
# fracture wiring
# ---------------------------------------------------------------------------

def _guard(build, *args, **kwargs):
    # invalid case parameters are configuration mistakes, not run failures
    try:
        return build(*args, **kwargs)
    except FractureError as err:
        raise ConfigError(str(err)) from None


def _need_dimension(topology, wanted, context):
    found = build_topology(topology).dimension
    if found != wanted:
        raise ConfigError(f"{context} needs a {wanted}D topology; "
                          f"{topology} is {found}D")


def fracture_case(cfg, rel_density=None):
    """Boundary-layer case from a run configuration."""
    _need_dimension(cfg.topology, 2, "a boundary-layer case")
    if rel_density is None:
        rel_density = cfg.material.rel_density
    return _guard(
        FractureCase,
        topology=cfg.topology, rel_density=rel_density,
        k_applied=cfg.fracture.k_applied,
        half_width=cfg.fracture.half_width,
        sigma_f=cfg.material.sigma_f,
        young_modulus=cfg.material.young_modulus,
        poisson_ratio=cfg.material.poisson_ratio,
        spacing=cfg.qc.spacing, order=cfg.order,
        resolve_margin=cfg.fracture.resolve_margin,
        refinement=cfg.refinement, settings=cfg.solver,
        sampling=cfg.qc.sampling,
        linearity_tol=cfg.fracture.linearity_tol)


def through_case(cfg):
    """Through-thickness plate case from a run configuration."""
    _need_dimension(cfg.topology, 3, "a through-thickness case")
    return _guard(
        ThroughThicknessCase,
        topology=cfg.topology, rel_density=cfg.material.rel_density,
        in_plane=tuple(cfg.through.in_plane),
        thickness=cfg.through.thickness,
        crack_width=cfg.through.crack_width,
        pull=cfg.through.pull,
        sigma_f=cfg.material.sigma_f,
        young_modulus=cfg.material.young_modulus,
        poisson_ratio=cfg.material.poisson_ratio,
        spacing=cfg.qc.spacing, order=cfg.order,
        resolve_margin=cfg.through.resolve_margin,
        refinement=cfg.refinement, settings=cfg.solver,
        sampling=cfg.qc.sampling)


def audit_mesh(cfg):
    """The mesh a run would solve on, built without solving."""
    if cfg.benchmark == "cook":
        return build_cook_model(cfg).mesh
    if cfg.benchmark == "boundary-layer":
        return _guard(boundary_layer_model, fracture_case(cfg)).mesh
    return _guard(through_thickness_model, through_case(cfg)).mesh
