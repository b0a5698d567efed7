"""Constrained Newton minimization and the staged refine-solve loop.

The sampled energy is minimized over the free representative DOFs with
prescribed entries held at their targets (row/column elimination of the
tangent keeps the reduced system symmetric).  Each Newton step is globalized
by Armijo backtracking on the total energy, so accepted iterates never
increase it.  ``staged_solve`` alternates minimization with flag-driven mesh
bisection, shrinking the refinement threshold per stage and carrying the
previous solution onto every new representative cell by interpolation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import splu

from qclat.assembly import (DOFField, QCAssembly, element_shape_values,
                            interpolate_uc)
from qclat.mesh import QCMesh, refinement_flags
from qclat.sampling import exact_sampling_scheme

log = logging.getLogger("qclat.solver")

_ORDERINGS = ("COLAMD", "MMD_AT_PLUS_A", "MMD_ATA", "NATURAL")


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveSettings:
    """Newton loop control.

    ``tolerance`` bounds the infinity norm of the free gradient relative to
    max(1, largest applied load); ``ordering`` selects the fill-reducing
    permutation of the sparse factorization.
    """

    tolerance: float = 1e-10
    max_iterations: int = 25
    armijo_slope: float = 1e-4
    backtrack_factor: float = 0.5
    min_step: float = 1e-12
    ordering: str = "COLAMD"

    def __post_init__(self):
        if self.tolerance <= 0:
            raise SolverError("tolerance must be positive")
        if self.max_iterations < 1:
            raise SolverError("max_iterations must be at least 1")
        if not 0 < self.armijo_slope < 1:
            raise SolverError("armijo_slope must lie in (0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise SolverError("backtrack_factor must lie in (0, 1)")
        if self.min_step <= 0:
            raise SolverError("min_step must be positive")
        if self.ordering not in _ORDERINGS:
            raise SolverError(f"unknown ordering {self.ordering!r}; "
                              f"choose from {_ORDERINGS}")


@dataclass
class SolveResult:
    converged: bool
    dofs: DOFField
    iterations: int
    residuals: list
    energy: float


@dataclass(frozen=True)
class DirichletBC:
    """One prescribed DOF: (repUC site, basis node, component) = value."""

    site: tuple
    node: int = 0
    comp: int = 0
    value: float = 0.0


@dataclass(frozen=True)
class NodalLoad:
    """One applied load on a representative DOF."""

    site: tuple
    node: int = 0
    comp: int = 0
    value: float = 0.0


def apply_dirichlet(assembly, dofs, bcs):
    """DOFField copy with the given constraints masked in and applied.

    Every BC must address a representative cell; prescribing interpolated
    cells is not representable and raises.
    """
    out = dofs.copy()
    for bc in bcs:
        idx = assembly.dof_index(bc.site, bc.node, bc.comp)
        out.mask[idx] = True
        out.target[idx] = bc.value
    out.apply_constraints()
    return out


def load_vector(assembly, loads):
    """Flat load vector from NodalLoad entries (duplicates accumulate)."""
    vec = np.zeros(assembly.n_rep * assembly.block)
    for ld in loads:
        vec[assembly.dof_index(ld.site, ld.node, ld.comp)] += ld.value
    return vec


def consistent_load_vector(assembly, loads):
    """Work-equivalent load vector; loads on interpolated cells allowed.

    A force on a repUC lands on its own DOF as in :func:`load_vector`.  A
    force on an interpolated cell is scattered to the owning element's nodes
    with the shape-function weights, so the virtual work matches the force
    acting on the interpolated displacement at any coarsening level.
    """
    mesh = assembly.mesh
    rank = mesh.node_index()
    owners = mesh.site_owners()
    vec = np.zeros(assembly.n_rep * assembly.block)
    m = assembly.dofs_per_node
    for ld in loads:
        site = tuple(int(c) for c in ld.site)
        offset = ld.node * m + ld.comp
        if site in rank:
            vec[rank[site] * assembly.block + offset] += ld.value
            continue
        if site not in owners:
            raise SolverError(f"loaded cell {site} lies outside the mesh")
        element = mesh.elements[owners[site]]
        point = np.asarray(site, dtype=float)[None, :]
        weights = element_shape_values(element, point)[0]
        for s, w in zip(element.node_sites(), weights):
            vec[rank[s] * assembly.block + offset] += w * ld.value
    return vec


def minimize(assembly, dofs, settings=None, loads=None):
    """Newton minimization of the sampled energy over the free DOFs.

    ``dofs`` carries the constraints (see :func:`apply_dirichlet`); the
    returned field satisfies them exactly.  Raises on singular stiffness,
    failed line search, or no convergence within ``max_iterations``.
    """
    settings = SolveSettings() if settings is None else settings
    out = dofs.copy()
    out.apply_constraints()
    if not np.isfinite(out.values).all():
        raise SolverError("initial guess contains non-finite DOFs")
    free = np.flatnonzero(out.free())
    scale = 1.0
    if loads is not None and len(np.atleast_1d(loads)):
        scale = max(1.0, float(np.abs(loads).max()))

    residuals = []
    energy = assembly.energy(out, loads=loads).total
    for iteration in range(settings.max_iterations + 1):
        grad = assembly.gradient(out, loads=loads)
        residual = float(np.abs(grad[free]).max()) if free.size else 0.0
        residuals.append(residual)
        if residual <= settings.tolerance * scale:
            log.info("iter=%d energy=%.12e residual=%.3e converged",
                     iteration, energy, residual)
            return SolveResult(True, out, iteration, residuals, energy)
        if iteration == settings.max_iterations:
            break

        hess = assembly.hessian(out)
        reduced = hess[free][:, free].tocsc()
        try:
            factor = splu(reduced, permc_spec=settings.ordering)
            step = factor.solve(-grad[free])
        except RuntimeError as err:
            raise SolverError(f"stiffness factorization failed ({err}); "
                              "check constraints against rigid modes") \
                from None
        if not np.isfinite(step).all():
            raise SolverError("singular stiffness: the Newton step is not "
                              "finite; check constraints against rigid modes")
        slope = float(grad[free] @ step)
        if slope >= 0.0:
            # indefinite tangent: fall back to the steepest descent direction
            step = -grad[free]
            slope = float(grad[free] @ step)

        alpha = 1.0
        while True:
            trial = out.values.copy()
            trial[free] += alpha * step
            trial_energy = assembly.energy(trial, loads=loads).total
            if trial_energy <= energy + settings.armijo_slope * alpha * slope:
                break
            alpha *= settings.backtrack_factor
            if alpha < settings.min_step:
                raise SolverError(
                    f"line search failed at iteration {iteration} "
                    f"(residual {residual:.3e})")
        assert trial_energy <= energy + 1e-12 * max(1.0, abs(energy)), \
            "accepted step increased the energy"
        out.values = trial
        energy = trial_energy
        log.info("iter=%d energy=%.12e residual=%.3e step=%.3e",
                 iteration, energy, residual, alpha)

    raise SolverError(
        f"no convergence after {settings.max_iterations} iterations; "
        f"residual {residuals[-1]:.3e} (tolerance {settings.tolerance:.1e}, "
        f"scale {scale:.3e})")


@dataclass(frozen=True)
class StageRecord:
    """One refine-solve stage: solved state plus coarsening bookkeeping."""

    stage: int
    threshold: float
    result: SolveResult
    n_rep: int
    n_cells: int
    density: float
    energy: float
    max_tensile: float
    n_flagged: int


def _resolve(value, assembly):
    return value(assembly) if callable(value) else value


def staged_solve(mesh, properties, bcs, refinement, settings=None,
                 loads=None, sampling="optimal"):
    """Alternate minimization and flag-driven refinement on ``mesh``.

    ``bcs`` and ``loads`` may be callables of the per-stage assembly, so
    boundary conditions can follow representative cells created by
    refinement.  The mesh is refined in place; each stage's initial guess
    interpolates the previous solution onto the new representative cells.
    Returns one :class:`StageRecord` per solved stage.
    """
    if sampling not in ("optimal", "exact"):
        raise SolverError(f"unknown sampling mode {sampling!r}")
    records = []
    previous = None
    for stage in range(refinement.max_stages + 1):
        points = (exact_sampling_scheme(mesh.lattice)
                  if sampling == "exact" else None)
        assembly = QCAssembly(mesh, properties, points=points)
        dofs = DOFField.rest(assembly.n_rep, assembly.block)
        if previous is not None:
            snapshot, values = previous
            rank = snapshot.node_index()
            phi = dofs.values.reshape(assembly.n_rep, assembly.block)
            for r, site in enumerate(assembly.node_sites):
                row = rank.get(site)
                phi[r] = (values[row] if row is not None
                          else interpolate_uc(snapshot, values, site))
        dofs = apply_dirichlet(assembly, dofs, _resolve(bcs, assembly))
        vec = None
        if loads is not None:
            vec = _resolve(loads, assembly)
            if vec is not None and not isinstance(vec, np.ndarray):
                vec = load_vector(assembly, vec)
        result = minimize(assembly, dofs, settings, loads=vec)

        _, stresses = assembly.beam_stresses(result.dofs)
        threshold = refinement.stage_threshold(stage)
        flags = refinement_flags(
            mesh, assembly.deformation_gradients(result.dofs), threshold)
        record = StageRecord(
            stage=stage, threshold=threshold, result=result,
            n_rep=assembly.n_rep, n_cells=mesh.lattice.n_cells,
            density=assembly.n_rep / mesh.lattice.n_cells,
            energy=result.energy,
            max_tensile=float(stresses.tensile.max()),
            n_flagged=int(flags.sum()))
        records.append(record)
        log.info("stage=%d density=%.4f energy=%.12e max_tensile=%.6e "
                 "flagged=%d", stage, record.density, record.energy,
                 record.max_tensile, record.n_flagged)

        if stage == refinement.max_stages or not flags.any():
            break
        snapshot = QCMesh(mesh.lattice, list(mesh.elements), mesh.spacing,
                          mesh.order, mesh.resolve_regions)
        values = result.dofs.values.reshape(assembly.n_rep, assembly.block)
        previous = (snapshot, values.copy())
        mesh.refine_flagged(flags)
    return records
