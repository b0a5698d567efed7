"""Command line front end.

Four verbs, each driven by one YAML configuration file::

    qclat run <config>             solve one benchmark, write artifacts
    qclat sweep <config>           density sweep of boundary-layer runs
    qclat compare-orders <config>  locking study against a resolved reference
    qclat weights-audit <config>   build the mesh and audit sampling weights

Artifacts land in ``$QCLAT_OUTPUT_ROOT/<output>/`` where ``<output>`` is
the config's ``output`` key (default: the config file stem): a summary
JSON, CSV series with matching PNG renders, legacy-VTK fields, the
sampling audit, and the solver log.  Exit codes: 0 on success, 2 for
configuration mistakes, 3 for solver or audit failures.
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import plots, report
from .assembly import AssemblyError, QCAssembly
from .beam import BeamKernelError
from .benchmarks import (audit_mesh, compare_orders, fracture_case, run_cook,
                         through_case)
from .config import ConfigError, parse_config
from .fracture import (FractureError, fit_toughness_scaling,
                       run_boundary_layer, run_through_thickness,
                       stress_histogram)
from .lattice import LatticeError, TopologyError
from .mesh import MeshError
from .sampling import SamplingError, exact_sampling_scheme, sampling_scheme
from .solver import SolverError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

# bad inputs to model construction are configuration mistakes; failures
# while solving a well-formed model are runtime failures
_CONFIG_ERRORS = (ConfigError, TopologyError, LatticeError, MeshError,
                  BeamKernelError)
_RUNTIME_ERRORS = (SolverError, SamplingError, AssemblyError, FractureError)

log = logging.getLogger("qclat.cli")


def _output_dir(cfg, config_path, override):
    root = Path(os.environ.get("QCLAT_OUTPUT_ROOT", "."))
    name = override if override is not None else cfg.output
    if name is None:
        name = Path(config_path).stem
    out = root / name
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.touch()
        probe.unlink()
    except OSError as err:
        raise ConfigError(f"output directory {out} is not writable: {err}") \
            from None
    return out


def _setup_logging(outdir, verbose):
    root = logging.getLogger("qclat")
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    root.setLevel(logging.INFO)
    file_handler = logging.FileHandler(outdir / "solver.log", mode="w",
                                       encoding="utf-8")
    file_handler.setFormatter(
        logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(file_handler)
    stream = logging.StreamHandler()
    stream.setLevel(logging.INFO if verbose else logging.WARNING)
    stream.setFormatter(logging.Formatter("%(message)s"))
    root.addHandler(stream)


def _scheme_points(mesh, mode):
    if mode == "exact":
        return exact_sampling_scheme(mesh.lattice)
    return sampling_scheme(mesh.corner_arrays(), mesh.lattice)


def _summary_base(cfg, command, records=None):
    payload = {"benchmark": cfg.benchmark, "command": command,
               "topology": cfg.topology, "settings": cfg.echo()}
    if records:
        final = records[-1]
        payload["mesh"] = {"n_unit_cells": final.n_cells,
                           "n_repucs": final.n_rep,
                           "repuc_density": float(final.density)}
        payload["stages"] = report.stage_summary(records)
    return payload


def _histogram_rows(stresses):
    counts, edges = stress_histogram(stresses)
    return [(float(edges[i]), float(edges[i + 1]), int(c))
            for i, c in enumerate(counts)]


def _write_field_dumps(outdir, mesh, assembly, dofs, keys, tensile,
                       loads=None):
    values = dofs.values.reshape(assembly.n_rep, assembly.block)
    energies = assembly.energy(dofs, loads=loads)
    report.write_sampling_csv(outdir / "sampling.csv", assembly.points)
    report.write_energy_csv(outdir / "energies.csv", assembly.points,
                            energies.point_energies)
    report.mesh_to_vtk(outdir / "mesh.vtk", mesh, displacement=values)
    report.beams_to_vtk(outdir / "beams.vtk", mesh.lattice, keys, tensile,
                        displacement=values, mesh=mesh)
    return energies


def _run_cook(cfg, outdir):
    run = run_cook(cfg)
    mesh = run.model.mesh
    assembly = QCAssembly(mesh, run.model.properties,
                          points=(exact_sampling_scheme(mesh.lattice)
                                  if cfg.qc.sampling == "exact" else None))
    dofs = run.records[-1].result.dofs
    keys, stresses = assembly.beam_stresses(dofs)
    energies = _write_field_dumps(outdir, mesh, assembly, dofs, keys,
                                  stresses.tensile,
                                  loads=run.model.loads(assembly))
    report.write_csv(outdir / "stages.csv", report.STAGE_HEADER,
                     report.stage_rows(run.records))
    summary = _summary_base(cfg, "run", run.records)
    summary["results"] = {
        "max_displacement": float(run.max_displacement),
        "force": float(run.model.force),
        "energy": {"total": float(energies.total),
                   "internal": float(energies.internal),
                   "external": float(energies.external)},
        "max_tensile": float(run.records[-1].max_tensile),
        "n_clamped_cells": len({site for site, _ in run.model.clamped}),
        "n_loaded_cells": len({site for site, _ in run.model.loaded}),
    }
    report.write_json(outdir / "summary.json", summary)


def _moduli_block(moduli):
    return {"young_eff": float(moduli.young_eff),
            "mu_eff": float(moduli.mu_eff),
            "nu_eff_pl": float(moduli.nu_eff_pl),
            "rank_deficient": bool(moduli.rank_deficient)}


def _run_boundary_layer(cfg, outdir):
    res = run_boundary_layer(fracture_case(cfg))
    dofs = res.records[-1].result.dofs
    _write_field_dumps(outdir, res.mesh, res.assembly, dofs, res.keys,
                       res.stresses)
    report.write_csv(outdir / "stages.csv", report.STAGE_HEADER,
                     report.stage_rows(res.records))
    report.write_csv(outdir / "histogram.csv",
                     ("bin_left", "bin_right", "count"),
                     _histogram_rows(res.stresses))
    cell, beam = res.critical_beam
    summary = _summary_base(cfg, "run", res.records)
    summary["results"] = {
        "k_applied": float(res.case.k_applied),
        "k_ic": float(res.k_ic),
        "kbar_ic": float(res.kbar_ic),
        "sigma_t_max": float(res.sigma_t_max),
        "critical_distance": float(res.critical_distance),
        "critical_beam": {"cell": [int(c) for c in cell],
                          "beam": int(beam)},
        "tip": [float(x) for x in res.tip],
        "moduli": _moduli_block(res.moduli),
    }
    report.write_json(outdir / "summary.json", summary)


def _run_through(cfg, outdir):
    res = run_through_thickness(through_case(cfg))
    dofs = res.records[-1].result.dofs
    _write_field_dumps(outdir, res.mesh, res.assembly, dofs, res.keys,
                       res.stresses)
    report.write_csv(outdir / "stages.csv", report.STAGE_HEADER,
                     report.stage_rows(res.records))
    report.write_csv(outdir / "histogram.csv",
                     ("bin_left", "bin_right", "count"),
                     _histogram_rows(res.stresses))
    report.write_csv(outdir / "layers.csv", ("layer", "peak_tensile"),
                     [(i, float(p)) for i, p in enumerate(res.layer_peaks)])
    cell, beam = res.critical_beam
    summary = _summary_base(cfg, "run", res.records)
    summary["results"] = {
        "opening_resistance": float(res.opening_resistance),
        "critical_layer": int(res.critical_layer),
        "sigma_t_max": float(res.sigma_t_max),
        "layer_peaks": [float(p) for p in res.layer_peaks],
        "critical_beam": {"cell": [int(c) for c in cell],
                          "beam": int(beam)},
        "pull": float(res.case.pull),
    }
    report.write_json(outdir / "summary.json", summary)


def cmd_run(cfg, outdir, args):
    {"cook": _run_cook,
     "boundary-layer": _run_boundary_layer,
     "through-thickness": _run_through}[cfg.benchmark](cfg, outdir)
    plots.render_all(outdir)
    return EXIT_OK


def _sweep_point(task):
    cfg, rho = task
    res = run_boundary_layer(fracture_case(cfg, rel_density=rho))
    final = res.records[-1]
    return (float(rho), float(res.kbar_ic), float(res.k_ic),
            float(res.sigma_t_max), float(res.critical_distance),
            final.n_rep, final.n_cells)


def cmd_sweep(cfg, outdir, args):
    if cfg.benchmark != "boundary-layer":
        raise ConfigError("sweep drives boundary-layer cases; set "
                          "benchmark: boundary-layer")
    tasks = [(cfg, rho) for rho in cfg.fracture.densities]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    report.write_csv(outdir / "toughness.csv",
                     ("rel_density", "kbar_ic", "k_ic", "sigma_t_max",
                      "critical_distance", "n_repucs", "n_unit_cells"),
                     rows)
    densities = [r[0] for r in rows]
    kbar = [r[1] for r in rows]
    fit = None
    if len(rows) >= 3:
        fit = fit_toughness_scaling(densities, kbar)
        log.info("fit: kbar = %.6g * rho^%.6g (residual %.3e)",
                 fit.prefactor, fit.exponent, fit.residual)
    summary = _summary_base(cfg, "sweep")
    summary["results"] = {
        "densities": densities,
        "kbar_ic": kbar,
        "fit": None if fit is None else {
            "prefactor": float(fit.prefactor),
            "exponent": float(fit.exponent),
            "residual": float(fit.residual)},
    }
    report.write_json(outdir / "summary.json", summary)
    plots.render_all(outdir)
    return EXIT_OK


def cmd_compare_orders(cfg, outdir, args):
    if cfg.benchmark != "cook":
        raise ConfigError("compare-orders is a membrane study; set "
                          "benchmark: cook")
    cmp = compare_orders(cfg)
    header = ("mode", "spacing", "n_repucs", "n_unit_cells",
              "repuc_density", "max_displacement", "rel_error")
    report.write_csv(outdir / "orders.csv", header,
                     [(mode, s, n_rep, n_uc, float(d), float(m), float(e))
                      for mode, s, n_rep, n_uc, d, m, e in cmp.rows])
    summary = _summary_base(cfg, "compare-orders")
    summary["results"] = {
        "reference": {
            "max_displacement": float(cmp.reference.max_displacement),
            "n_unit_cells": cmp.reference.n_uc},
        "rows": [dict(zip(header, row)) for row in
                 [(mode, s, n_rep, n_uc, float(d), float(m), float(e))
                  for mode, s, n_rep, n_uc, d, m, e in cmp.rows]],
    }
    report.write_json(outdir / "summary.json", summary)
    plots.render_all(outdir)
    return EXIT_OK


def cmd_weights_audit(cfg, outdir, args):
    mesh = audit_mesh(cfg)
    points = _scheme_points(mesh, cfg.qc.sampling)
    weights = np.array([p.weight for p in points], dtype=float)
    integral = bool(np.all(weights == np.round(weights)))
    total = int(round(weights.sum()))
    n_cells = mesh.lattice.n_cells
    match = integral and total == n_cells
    report.write_sampling_csv(outdir / "sampling.csv", points)
    report.mesh_to_vtk(outdir / "mesh.vtk", mesh)
    summary = _summary_base(cfg, "weights-audit")
    summary["mesh"] = {"n_unit_cells": n_cells,
                       "n_repucs": len(mesh.node_sites()),
                       "repuc_density": len(mesh.node_sites()) / n_cells}
    summary["results"] = {"weight_total": total, "n_unit_cells": n_cells,
                          "n_sampling_points": len(points),
                          "integral_weights": integral, "match": match}
    report.write_json(outdir / "summary.json", summary)
    verdict = "PASS" if match else "FAIL"
    print(f"weights-audit: {verdict} (sum of weights {total}, "
          f"unit cells {n_cells})")
    return EXIT_OK if match else EXIT_SOLVER


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep,
            "compare-orders": cmd_compare_orders,
            "weights-audit": cmd_weights_audit}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="qclat",
        description="Quasicontinuum benchmarks for periodic beam lattices.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("run", "solve one benchmark and write its artifacts"),
            ("sweep", "run boundary-layer cases over fracture.densities"),
            ("compare-orders", "first- versus second-order membrane errors"),
            ("weights-audit", "check sampling weights against the cell "
                              "count")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("config", help="YAML configuration file")
        cmd.add_argument("--output", default=None,
                         help="output directory name (overrides the config)")
        cmd.add_argument("-v", "--verbose", action="store_true",
                         help="echo solver progress to stderr")
        if name == "sweep":
            cmd.add_argument("--jobs", type=int, default=1,
                             help="parallel sweep-point processes")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        outdir = _output_dir(cfg, args.config, args.output)
    except _CONFIG_ERRORS as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    _setup_logging(outdir, args.verbose)
    try:
        return COMMANDS[args.command](cfg, outdir, args)
    except _CONFIG_ERRORS as err:
        # the stream handler echoes this to stderr
        log.error("configuration error: %s", err)
        return EXIT_CONFIG
    except _RUNTIME_ERRORS as err:
        log.error("solver failure: %s", err)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
