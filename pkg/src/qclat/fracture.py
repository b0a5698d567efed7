"""Fracture toughness of beam lattices by boundary-layer loading.

A mode-I crack is cut into the lattice by severing every beam that crosses
a horizontal plane left of the prescribed tip.  The asymptotic crack-tip
displacement field of the homogenized medium,

    u(r, t) = K_I / (2 mu) sqrt(r / 2 pi) ((3 - nu)/(1 + nu) - cos t)
              (cos(t/2), sin(t/2)),

is imposed on the outer hull while adaptive refinement resolves the tip.
In the linear regime the largest tensile beam stress scales with K_I, so
the toughness follows from one rescaling: K_IC = K_I sigma_f / sigma_max.
Reported values are normalized per K_IC / (sigma_f sqrt(l)) with l the
first Bravais vector length, which makes the density scaling K = D rho^d
dimensionless.
"""

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .assembly import DOFField, QCAssembly
from .beam import BeamProperties, planar_gradient_hessian
from .lattice import Box, CellBox, build_topology, instantiate_region
from .mesh import RefinementConfig, build_qc_mesh
from .sampling import exact_sampling_scheme
from .solver import (DirichletBC, SolveSettings, apply_dirichlet, minimize,
                     staged_solve)

log = logging.getLogger("qclat.fracture")


class FractureError(ValueError):
    pass


# ---------------------------------------------------------------------------
# crack-tip displacement field
# ---------------------------------------------------------------------------

def kfield_displacement(r, theta, k1, mu_eff, nu_eff_pl):
    """Mode-I near-tip displacement, shape (..., 2).

    ``r``/``theta`` are polar coordinates around the tip with the crack
    along theta = pi; only translations are prescribed from this field,
    rotations stay free.  ``nu_eff_pl`` is the plane-strain Poisson ratio
    of the homogenized lattice (C12/C11 of the plane stiffness).
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(r <= 0.0):
        raise FractureError("K-field requires r > 0; the tip itself and the "
                            "half-plane behind it are singular")
    if mu_eff <= 0.0:
        raise FractureError(f"effective shear modulus {mu_eff} must be "
                            f"positive")
    kappa = (3.0 - nu_eff_pl) / (1.0 + nu_eff_pl)
    amp = k1 / (2.0 * mu_eff) * np.sqrt(r / (2.0 * math.pi)) \
        * (kappa - np.cos(theta))
    return np.stack([amp * np.cos(0.5 * theta),
                     amp * np.sin(0.5 * theta)], axis=-1)


# ---------------------------------------------------------------------------
# relative density and unit-cell homogenization
# ---------------------------------------------------------------------------

def relative_density_to_thickness(topology, rel_density):
    """Strut thickness (2D) or diameter (3D) realizing a relative density.

    Inverts rho = t sum(l) / V for rectangular sections of unit depth and
    rho = pi t^2 / 4 sum(l) / V for circular ones, with every canonical
    beam counted once so shared struts are not double-booked.  The linear
    accounting ignores overlap at the joints, which is why large densities
    draw a warning.
    """
    if rel_density < 0.0:
        raise FractureError(f"relative density {rel_density} is negative")
    if rel_density > 0.2:
        warnings.warn(f"relative density {rel_density} is beyond the "
                      f"slender regime; joint overlap is not accounted for",
                      stacklevel=2)
    total = topology.total_strut_length
    if total <= 0.0:
        raise FractureError("topology has no beams")
    if topology.dimension == 2:
        return rel_density * topology.cell_volume / total
    return math.sqrt(4.0 * rel_density * topology.cell_volume
                     / (math.pi * total))


@dataclass(frozen=True)
class HomogenizedModuli:
    """Plane effective stiffness of one periodic unit cell.

    ``stiffness`` is the 3x3 Voigt matrix over (e11, e22, g12) with
    engineering shear strain.  ``rank_deficient`` marks a quasi-mechanism:
    the softest eigenmode falls below ``soft_ratio`` times the stiffest,
    which for slender struts singles out modes carried by bending alone.
    """

    stiffness: np.ndarray
    mu_eff: float
    nu_eff_pl: float
    young_eff: float
    soft_ratio: float
    rank_deficient: bool


def homogenize(topology, properties, soft_tol=1e-4):
    """Effective plane moduli of the infinite lattice.

    Solves the periodic fluctuation problem on a single unit cell: every
    basis node carries one fluctuation displacement and one rotation, the
    macroscopic strain enters through the affine part of each beam's end
    displacements, and the quadratic form is condensed to the strain
    block.  Rigid translation is removed by pinning node 0.
    """
    topo = topology
    if topo.dimension != 2:
        raise FractureError("plane homogenization is defined for planar "
                            "topologies")
    m = topo.dofs_per_node
    nn = topo.n_nodes
    n_y = nn * m
    n_eps = 3

    def affine_rows(x):
        # d x 3 map from Voigt strain (e11, e22, g12) to u(x)
        return np.array([[x[0], 0.0, 0.5 * x[1]],
                         [0.0, x[1], 0.5 * x[0]]])

    quad = np.zeros((n_y + n_eps, n_y + n_eps))
    for b in range(topo.n_beams):
        i, off, j = topo.beam_endpoints(b)
        x_i = topo.node_offsets[i]
        x_j = topo.node_offsets[j] + np.asarray(off, dtype=float) @ topo.basis
        _, _, hess = planar_gradient_hessian(
            properties, topo.beam_axes[b:b + 1], topo.beam_lengths[b:b + 1],
            np.zeros((1, 2 * m)))
        local = hess[0]
        # end DOFs in terms of (fluctuations, strain); the rotation rows
        # carry no affine part because the strain is symmetric
        lift = np.zeros((2 * m, n_y + n_eps))
        for end, (node, x) in enumerate(((i, x_i), (j, x_j))):
            rows = slice(end * m, end * m + 2)
            lift[rows, node * m:node * m + 2] = np.eye(2)
            lift[rows, n_y:] = affine_rows(x)
            lift[end * m + 2, node * m + 2] = 1.0
        quad += lift.T @ local @ lift

    keep = np.ones(n_y, dtype=bool)
    keep[0:2] = False                       # pin node 0 translations
    kept = np.flatnonzero(keep)
    k_ff = quad[np.ix_(kept, kept)]
    k_fe = quad[np.ix_(kept, np.arange(n_y, n_y + n_eps))]
    a_ee = quad[n_y:, n_y:]
    if kept.size:
        fluct = np.linalg.solve(k_ff, -k_fe)
        condensed = a_ee + k_fe.T @ fluct
    else:
        condensed = a_ee
    stiffness = condensed / topo.cell_volume
    stiffness = 0.5 * (stiffness + stiffness.T)

    eig = np.linalg.eigvalsh(stiffness)
    soft_ratio = float(eig[0] / eig[-1]) if eig[-1] > 0 else 0.0
    c11, c12 = stiffness[0, 0], stiffness[0, 1]
    return HomogenizedModuli(
        stiffness=stiffness,
        mu_eff=float(stiffness[2, 2]),
        nu_eff_pl=float(c12 / c11),
        young_eff=float(c11 - c12 ** 2 / c11),
        soft_ratio=soft_ratio,
        rank_deficient=bool(soft_ratio < soft_tol))


# ---------------------------------------------------------------------------
# crack insertion
# ---------------------------------------------------------------------------

def crack_plane_height(topology):
    """Height of a horizontal cut that severs beams without touching nodes.

    Cells with internal beams are cut through the midpoint of internal
    beam 0 (the honeycomb's vertical strut); otherwise the cut runs midway
    between two Bravais rows.
    """
    if topology.dimension != 2:
        raise FractureError("planar crack cuts need a planar topology")
    if topology.n_internal:
        i, _, j = topology.beam_endpoints(0)
        return 0.5 * float(topology.node_offsets[i][1]
                           + topology.node_offsets[j][1])
    return 0.5 * float(topology.basis[1][1])


def crack_plane_beams(lattice, plane_y, tip_x):
    """Alive beams strictly crossing y = plane_y with midpoint left of
    ``tip_x``, as (owner_cell, beam_id) pairs plus the midpoint abscissas
    of all crossing beams (severed and kept) for tip bookkeeping."""
    ca, na, cb, nb, bid, alive = lattice.beam_table()
    pos = lattice.node_positions()
    pa = pos[ca, na]
    pb = pos[cb, nb]
    crossing = ((pa[:, 1] - plane_y) * (pb[:, 1] - plane_y) < 0.0) & alive
    mid_x = 0.5 * (pa[:, 0] + pb[:, 0])
    sever = crossing & (mid_x < tip_x)
    beams = [(tuple(int(x) for x in lattice.cells[c]), int(b))
             for c, b in zip(ca[sever], bid[sever])]
    return beams, mid_x[sever], mid_x[crossing & ~sever]


def insert_crack(lattice, mesh, beams):
    """Sever the given beams after checking they sit in resolved mesh.

    Every incident cell must be a repUC: severing a beam between
    interpolated cells would silently re-emerge through the interpolation
    of the surrounding coarse element.  Returns the severed canonical
    keys.
    """
    rank = mesh.node_index()
    topo = lattice.topology
    removed = []
    for cell, beam_id in beams:
        cell = tuple(int(x) for x in cell)
        i, off, j = topo.beam_endpoints(beam_id)
        remote = tuple(int(x) for x in np.asarray(cell) + np.asarray(off))
        for c in (cell, remote):
            if c not in rank:
                raise FractureError(
                    f"crack beam {beam_id} of cell {cell} touches the "
                    f"interpolated cell {c}; enlarge the resolved region")
        lattice.remove_beam(cell, beam_id)
        removed.append((cell, int(beam_id)))
    return removed


# ---------------------------------------------------------------------------
# boundary-layer toughness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FractureCase:
    """One boundary-layer toughness computation.

    The domain is an index box of ``2 half_width + 1`` unit cells per side
    centered on the crack tip; the crack runs from the left hull to the
    center.  Defaults carry the benchmark material (units MPa, mm)."""

    topology: str
    rel_density: float
    k_applied: float
    half_width: int = 40
    sigma_f: float = 11.0
    young_modulus: float = 430.0
    poisson_ratio: float = 0.3
    spacing: int = 4
    order: int = 2
    resolve_margin: int = 3
    refinement: RefinementConfig = RefinementConfig(threshold=1e-3,
                                                    reduction=0.2,
                                                    max_stages=3)
    settings: SolveSettings = SolveSettings()
    sampling: str = "optimal"
    linearity_tol: float = 1e-2
    moduli: HomogenizedModuli = None

    def __post_init__(self):
        if not 0.0 < self.rel_density < 1.0:
            raise FractureError(f"relative density {self.rel_density} "
                                f"outside (0, 1)")
        if self.half_width < 4:
            raise FractureError("boundary layer needs a half width of at "
                                "least 4 unit cells")
        if self.k_applied == 0.0 or self.sigma_f <= 0.0:
            raise FractureError("need nonzero K and positive failure stress")


@dataclass(frozen=True)
class BoundaryLayerResult:
    case: FractureCase
    moduli: HomogenizedModuli
    records: tuple
    tip: tuple
    sigma_t_max: float
    critical_beam: tuple
    critical_distance: float        # |midpoint - tip| in units of |a_1|
    k_ic: float
    kbar_ic: float
    stresses: np.ndarray
    keys: tuple
    mesh: object
    assembly: object


def _case_properties(case, topology):
    thickness = relative_density_to_thickness(topology, case.rel_density)
    return BeamProperties.rectangle(case.young_modulus, case.poisson_ratio,
                                    thickness, timoshenko=True)


def _domain_cells(topology, half_width):
    # index box; the j range keeps the crack plane mid-domain whether the
    # cut passes through a cell row (internal beams) or between two rows
    r = half_width
    lo_j, hi_j = (-r, r) if topology.n_internal else (1 - r, r)
    return CellBox((-r, lo_j), (r, hi_j))


def hull_sites(lattice):
    """Cells on the index-box hull (any coordinate extremal)."""
    cells = lattice.cells
    lo = cells.min(axis=0)
    hi = cells.max(axis=0)
    mask = np.any((cells == lo) | (cells == hi), axis=1)
    return [tuple(int(x) for x in c) for c in cells[mask]]


def kfield_bc_factory(lattice, tip, k1, moduli, nodes=(0,)):
    """Stage-aware Dirichlet builder pinning hull translations to the
    K-field; hull cells that become repUCs through refinement are picked
    up automatically.

    Only basis node 0 of each hull cell is pinned by default: the K-field
    is the homogenized displacement, so pinning two strut-connected nodes
    would force that strut to carry the affine strain axially instead of
    the relaxed microstructural strain (ruinous for bending-dominated
    cells, where axial stiffness outweighs the effective moduli by orders
    of magnitude).  Single-node cells are unaffected by the choice.
    """
    hull = hull_sites(lattice)
    offsets = lattice.topology.node_offsets
    tip = np.asarray(tip, dtype=float)

    def bcs(assembly):
        rank = assembly.mesh.node_index()
        out = []
        for site in hull:
            if site not in rank:
                continue
            pos = lattice.uc_center(site) + offsets
            rel = pos - tip
            r = np.hypot(rel[:, 0], rel[:, 1])
            theta = np.arctan2(rel[:, 1], rel[:, 0])
            u = kfield_displacement(r, theta, k1, moduli.mu_eff,
                                    moduli.nu_eff_pl)
            for node in nodes:
                out.append(DirichletBC(site, node, 0, float(u[node, 0])))
                out.append(DirichletBC(site, node, 1, float(u[node, 1])))
        return out
    return bcs


def _final_stresses(mesh, props, case, dofs):
    points = exact_sampling_scheme(mesh.lattice) \
        if case.sampling == "exact" else None
    assembly = QCAssembly(mesh, props, points=points)
    keys, stresses = assembly.beam_stresses(dofs)
    return assembly, keys, stresses


@dataclass(frozen=True)
class BoundaryLayerModel:
    """Cracked boundary-layer domain ready to solve."""

    topology: object
    properties: BeamProperties
    moduli: HomogenizedModuli
    lattice: object
    mesh: object
    tip: tuple
    bcs: object


def boundary_layer_model(case):
    """Build the cracked domain, mesh and K-field constraints of a case."""
    topo = build_topology(case.topology)
    if topo.dimension != 2:
        raise FractureError("boundary-layer toughness is a plane setup; "
                            "use a through-thickness case for 3D lattices")
    props = _case_properties(case, topo)
    moduli = case.moduli if case.moduli is not None \
        else homogenize(topo, props)
    plane_y = crack_plane_height(topo)
    lattice = instantiate_region(topo, _domain_cells(topo, case.half_width))

    flank, severed_x, kept_x = crack_plane_beams(lattice, plane_y, 0.0)
    if not flank:
        raise FractureError("no beams cross the crack plane; the domain "
                            "does not reach the cut")
    if kept_x.size == 0:
        raise FractureError("crack severs the whole plane; nothing left "
                            "to hold a tip")
    tip = (0.5 * (severed_x.max() + kept_x.min()), plane_y)

    margin = case.resolve_margin
    a_x = abs(float(topo.basis[0][0]))
    a_y = abs(float(topo.basis[1][1]))
    flank_box = Box((-(case.half_width + 1) * a_x, plane_y - margin * a_y),
                    (tip[0] + margin * a_x, plane_y + margin * a_y))
    mesh = build_qc_mesh(lattice, case.spacing, order=case.order,
                         resolve_regions=(flank_box,))
    insert_crack(lattice, mesh, flank)

    bcs = kfield_bc_factory(lattice, tip, case.k_applied, moduli)
    return BoundaryLayerModel(topology=topo, properties=props,
                              moduli=moduli, lattice=lattice, mesh=mesh,
                              tip=tip, bcs=bcs)


def run_boundary_layer(case):
    """Solve one K-field case and rescale to the toughness.

    Runs the staged adaptive solve, recovers beam stresses on the final
    mesh, verifies linearity by re-solving at half load (the toughness is
    a linear rescaling, so a nonlinear response would poison it) and
    normalizes K_IC by sigma_f sqrt(|a_1|).
    """
    model = boundary_layer_model(case)
    topo, props, moduli = model.topology, model.properties, model.moduli
    lattice, mesh, tip, bcs = (model.lattice, model.mesh, model.tip,
                               model.bcs)
    records = staged_solve(mesh, props, bcs, case.refinement, case.settings,
                           sampling=case.sampling)

    assembly, keys, stresses = _final_stresses(mesh, props, case,
                                               records[-1].result.dofs)
    sigma_max = float(stresses.tensile.max())
    if sigma_max <= 0.0:
        raise FractureError("crack tip carries no tensile stress; check "
                            "the applied K")
    worst = int(np.argmax(stresses.tensile))

    half = [dataclasses.replace(bc, value=0.5 * bc.value)
            for bc in bcs(assembly)]
    probe = apply_dirichlet(assembly, DOFField.rest(assembly.n_rep,
                                                    assembly.block), half)
    half_result = minimize(assembly, probe, case.settings)
    _, half_stresses = assembly.beam_stresses(half_result.dofs)
    ratio = sigma_max / float(half_stresses.tensile.max())
    if abs(ratio - 2.0) > 2.0 * case.linearity_tol:
        raise FractureError(
            f"peak stress scales by {ratio:.6f} when K doubles; the "
            f"response is nonlinear, reduce k_applied")

    owner, beam_id = keys[worst]
    i, off, j = topo.beam_endpoints(beam_id)
    p_i = lattice.uc_center(owner) + topo.node_offsets[i]
    p_j = (lattice.uc_center(np.asarray(owner) + np.asarray(off))
           + topo.node_offsets[j])
    l_uc = float(np.linalg.norm(topo.basis[0]))
    distance = float(np.linalg.norm(0.5 * (p_i + p_j) - np.asarray(tip)))

    k_ic = abs(case.k_applied) * case.sigma_f / sigma_max
    kbar = k_ic / (case.sigma_f * math.sqrt(l_uc))
    log.info("toughness %s rho=%g: sigma_max=%.6e kbar=%.6e (beam %s at "
             "%.2f cells)", case.topology, case.rel_density, sigma_max,
             kbar, (owner, beam_id), distance / l_uc)
    return BoundaryLayerResult(
        case=case, moduli=moduli, records=tuple(records), tip=tip,
        sigma_t_max=sigma_max, critical_beam=(owner, beam_id),
        critical_distance=distance / l_uc, k_ic=k_ic, kbar_ic=kbar,
        stresses=stresses.tensile.copy(), keys=tuple(keys),
        mesh=mesh, assembly=assembly)


# ---------------------------------------------------------------------------
# density scaling fit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ToughnessFit:
    """Power law kbar = prefactor * rho^exponent fitted in log space."""

    densities: tuple
    toughness: tuple
    prefactor: float
    exponent: float
    residual: float                      # rms misfit of log kbar

    def predict(self, rel_density):
        return self.prefactor * np.asarray(rel_density) ** self.exponent


def fit_toughness_scaling(densities, toughness):
    """Least-squares power law through (rho, kbar) samples."""
    rho = np.asarray(densities, dtype=float)
    kbar = np.asarray(toughness, dtype=float)
    if rho.shape != kbar.shape or rho.ndim != 1:
        raise FractureError("need matching 1-d density and toughness arrays")
    if rho.size < 3:
        raise FractureError(f"power-law fit needs at least 3 samples, "
                            f"got {rho.size}")
    if np.any(rho <= 0.0) or np.any(kbar <= 0.0):
        raise FractureError("densities and toughness must be positive")
    if np.unique(rho).size != rho.size:
        raise FractureError("densities must be distinct")
    exponent, intercept = np.polyfit(np.log(rho), np.log(kbar), 1)
    fitted = intercept + exponent * np.log(rho)
    residual = float(np.sqrt(np.mean((fitted - np.log(kbar)) ** 2)))
    return ToughnessFit(densities=tuple(map(float, rho)),
                        toughness=tuple(map(float, kbar)),
                        prefactor=float(np.exp(intercept)),
                        exponent=float(exponent), residual=residual)


# ---------------------------------------------------------------------------
# through-thickness (3D) cracked plates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThroughThicknessCase:
    """Edge-cracked 3D plate under uniform opening displacement.

    The crack is one removed layer of unit cells reaching in from the left
    hull; ``pull`` is prescribed vertically (+/-) on the outermost top and
    bottom rows while every repUC is pinned out of plane, which makes the
    interpolated cells follow into a discrete plane-strain state."""

    topology: str
    rel_density: float
    in_plane: tuple = (32, 32)
    thickness: int = 3
    crack_width: int = 16
    pull: float = 1e-3
    sigma_f: float = 11.0
    young_modulus: float = 430.0
    poisson_ratio: float = 0.3
    spacing: int = 4
    order: int = 2
    resolve_margin: int = 2
    refinement: RefinementConfig = RefinementConfig(threshold=1e-3,
                                                    reduction=0.2,
                                                    max_stages=1)
    settings: SolveSettings = SolveSettings()
    sampling: str = "optimal"

    def __post_init__(self):
        if self.thickness < 3:
            raise FractureError(
                f"through-thickness plates need at least 3 unit-cell "
                f"layers for a quadratic mesh, got {self.thickness}")
        nx, ny = self.in_plane
        if not 0 < self.crack_width < nx:
            raise FractureError(f"crack width {self.crack_width} must stay "
                                f"inside the {nx}-cell plate width")
        if ny < 4:
            raise FractureError("plate too short to carry a crack")
        if self.pull == 0.0:
            raise FractureError("need a nonzero opening displacement")


@dataclass(frozen=True)
class ThroughThicknessResult:
    case: ThroughThicknessCase
    records: tuple
    sigma_t_max: float
    critical_beam: tuple
    critical_layer: int
    layer_peaks: np.ndarray            # max tensile stress per cell layer
    opening_resistance: float          # pull at which sigma_t reaches sigma_f
    stresses: np.ndarray
    keys: tuple
    mesh: object
    assembly: object


@dataclass(frozen=True)
class ThroughThicknessModel:
    """Cracked plate domain ready to solve."""

    topology: object
    properties: BeamProperties
    lattice: object
    mesh: object
    bcs: object


def through_thickness_model(case):
    """Build the cracked plate, mesh and grip constraints of a case."""
    topo = build_topology(case.topology)
    if topo.dimension != 3:
        raise FractureError("through-thickness cases need a 3D topology")
    diameter = relative_density_to_thickness(topo, case.rel_density)
    props = BeamProperties.circle(case.young_modulus, case.poisson_ratio,
                                  diameter, timoshenko=True)
    nx, ny = case.in_plane
    nz = case.thickness
    lattice = instantiate_region(
        topo, CellBox((0, 0, 0), (nx - 1, ny - 1, nz - 1)))

    # resolve a slab around the crack layer, full depth, then take the
    # layer out; element removal demands fully resolved surroundings
    j_c = ny // 2
    a = np.abs(np.diag(topo.basis))
    margin = case.resolve_margin
    slab = Box((-a[0], (j_c - margin) * a[1], -a[2]),
               ((case.crack_width + margin) * a[0],
                (j_c + 1 + margin) * a[1], nz * a[2]))
    spacing = (case.spacing, case.spacing, 2)
    mesh = build_qc_mesh(lattice, spacing, order=case.order,
                         resolve_regions=(slab,))
    for i in range(case.crack_width):
        for k in range(nz):
            mesh.remove_unit_cell((i, j_c, k))

    def bcs(assembly):
        rank = assembly.mesh.node_index()
        out = []
        for site in rank:
            for node in range(topo.n_nodes):
                out.append(DirichletBC(site, node, 2, 0.0))
            if site[1] in (0, ny - 1):
                value = -case.pull if site[1] == 0 else case.pull
                for node in range(topo.n_nodes):
                    out.append(DirichletBC(site, node, 0, 0.0))
                    out.append(DirichletBC(site, node, 1, value))
        return out

    return ThroughThicknessModel(topology=topo, properties=props,
                                 lattice=lattice, mesh=mesh, bcs=bcs)


def run_through_thickness(case):
    """Solve one cracked plate and locate the through-thickness peak."""
    model = through_thickness_model(case)
    topo, props, mesh, bcs = (model.topology, model.properties,
                              model.mesh, model.bcs)
    nz = case.thickness
    records = staged_solve(mesh, props, bcs, case.refinement, case.settings,
                           sampling=case.sampling)

    points = exact_sampling_scheme(mesh.lattice) \
        if case.sampling == "exact" else None
    assembly = QCAssembly(mesh, props, points=points)
    keys, stresses = assembly.beam_stresses(records[-1].result.dofs)
    sigma_max = float(stresses.tensile.max())
    worst = int(np.argmax(stresses.tensile))
    layers = np.array([key[0][2] for key in keys])
    peaks = np.array([stresses.tensile[layers == k].max()
                      if np.any(layers == k) else 0.0 for k in range(nz)])
    log.info("through-thickness %s nz=%d: sigma_max=%.6e at layer %d",
             case.topology, nz, sigma_max, int(layers[worst]))
    return ThroughThicknessResult(
        case=case, records=tuple(records), sigma_t_max=sigma_max,
        critical_beam=keys[worst], critical_layer=int(layers[worst]),
        layer_peaks=peaks,
        opening_resistance=case.pull * case.sigma_f / sigma_max,
        stresses=stresses.tensile.copy(), keys=tuple(keys),
        mesh=mesh, assembly=assembly)


# ---------------------------------------------------------------------------
# stress statistics
# ---------------------------------------------------------------------------

def stress_histogram(values, bins=80):
    """Histogram of tensile stresses normalized by their maximum.

    Returns (counts, edges) over [0, 1]; the counts sum to the number of
    beams, the maximum landing in the last (closed) bin.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise FractureError("no stresses to bin")
    peak = values.max()
    if peak <= 0.0:
        raise FractureError("all stresses are zero; nothing to normalize")
    counts, edges = np.histogram(values / peak, bins=bins, range=(0.0, 1.0))
    return counts, edges
