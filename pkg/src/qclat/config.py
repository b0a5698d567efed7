"""Run configuration: one YAML document per benchmark run.

The file is a nested mapping with the sections below; unknown sections or
keys are errors so that typos fail fast instead of silently running with
defaults.  All defaults are encoded here and echoed into the summary of
every run, which keeps outputs reproducible from the config alone.

Sections (all optional except the two top-level required keys):

* top level: ``benchmark`` (cook | boundary-layer | through-thickness),
  ``topology`` (catalog name), ``output`` (directory name), ``seed``.
* ``material``: young_modulus, poisson_ratio, rel_density or thickness,
  sigma_f, shear_correction (Timoshenko section; fracture cases always
  use it, matching the shear-corrected benchmark material).
* ``qc``: spacing, order (first | second | mixed; mixed and second both
  select quadratic coarse elements over linear resolved regions),
  sampling (optimal | exact).
* ``refinement``: threshold, reduction, max_stages.
* ``solver``: tolerance, max_iterations.
* ``cook``: length, left_height, right_height, scale, layers (3D),
  force (total vertical load on the right edge), spacings (compare-orders
  schedule), max_reference_ucs (full-resolution cap).
* ``fracture``: k_applied, half_width, resolve_margin, linearity_tol,
  densities (sweep schedule).
* ``through``: in_plane, thickness, crack_width, pull, resolve_margin.
"""

from dataclasses import dataclass, field

import yaml

from .mesh import RefinementConfig
from .solver import SolveSettings

BENCHMARKS = ("cook", "boundary-layer", "through-thickness")
ORDER_MODES = {"first": 1, "second": 2, "mixed": 2}
SAMPLING_MODES = ("optimal", "exact")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MaterialConfig:
    young_modulus: float = 430.0
    poisson_ratio: float = 0.3
    rel_density: float = 0.01
    thickness: float = None          # overrides rel_density when given
    sigma_f: float = 11.0
    shear_correction: bool = False


@dataclass(frozen=True)
class QCConfig:
    spacing: int = 4
    order: str = "second"
    sampling: str = "optimal"


@dataclass(frozen=True)
class CookConfig:
    length: float = 48.0
    left_height: float = 44.0
    right_height: float = 16.0
    scale: float = 1.0
    layers: int = 3
    force: float = 1e-4
    spacings: tuple = (2, 3, 4)
    max_reference_ucs: int = 200000


@dataclass(frozen=True)
class FractureConfig:
    k_applied: float = 6.27e-3
    half_width: int = 20
    resolve_margin: int = 3
    linearity_tol: float = 1e-2
    densities: tuple = (0.005, 0.01, 0.02, 0.05)


@dataclass(frozen=True)
class ThroughConfig:
    in_plane: tuple = (32, 32)
    thickness: int = 3
    crack_width: int = 16
    pull: float = 1e-3
    resolve_margin: int = 2


@dataclass(frozen=True)
class RunConfig:
    benchmark: str
    topology: str
    output: str = None
    seed: int = 0
    material: MaterialConfig = field(default_factory=MaterialConfig)
    qc: QCConfig = field(default_factory=QCConfig)
    refinement: RefinementConfig = RefinementConfig(threshold=1e-3,
                                                    reduction=0.2,
                                                    max_stages=0)
    solver: SolveSettings = SolveSettings()
    cook: CookConfig = field(default_factory=CookConfig)
    fracture: FractureConfig = field(default_factory=FractureConfig)
    through: ThroughConfig = field(default_factory=ThroughConfig)

    @property
    def order(self):
        return ORDER_MODES[self.qc.order]

    def echo(self):
        """Flat mapping of every effective setting, for the summary."""
        out = {"benchmark": self.benchmark, "topology": self.topology,
               "seed": self.seed}
        for name in ("material", "qc", "refinement", "cook",
                     "fracture", "through"):
            section = getattr(self, name)
            for key in section.__dataclass_fields__:
                value = getattr(section, key)
                if isinstance(value, tuple):
                    value = list(value)
                out[f"{name}.{key}"] = value
        out["solver.tolerance"] = self.solver.tolerance
        out["solver.max_iterations"] = self.solver.max_iterations
        return out


def _require(mapping, context):
    if mapping is None:
        return {}
    if not isinstance(mapping, dict):
        raise ConfigError(f"{context} must be a mapping, got "
                          f"{type(mapping).__name__}")
    return dict(mapping)


def _number(value, key, cast):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    if cast is int and int(value) != value:
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return cast(value)


def _take(section, key, default, cast):
    if key not in section:
        return default
    value = section.pop(key)
    if cast is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false, got {value!r}")
        return value
    if cast is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}")
        return value
    if isinstance(cast, tuple):             # list of numbers
        inner = cast[0]
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigError(f"{key} must be a non-empty list")
        return tuple(_number(v, key, inner) for v in value)
    return _number(value, key, cast)


def _no_leftovers(section, context):
    if section:
        raise ConfigError(
            f"unknown key(s) in {context}: {', '.join(sorted(section))}")


def _choice(value, key, allowed):
    if value not in allowed:
        raise ConfigError(f"{key} must be one of {', '.join(allowed)}; "
                          f"got {value!r}")
    return value


def parse_config(path):
    """Read and validate one run configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = yaml.safe_load(handle)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    except yaml.YAMLError as err:
        raise ConfigError(f"malformed config {path}: {err}") from None
    return build_config(raw, context=str(path))


def build_config(raw, context="config"):
    """Validate a parsed mapping into a :class:`RunConfig`."""
    top = _require(raw, context)
    if "benchmark" not in top or "topology" not in top:
        raise ConfigError(f"{context} needs 'benchmark' and 'topology'")
    benchmark = _choice(_take(top, "benchmark", None, str),
                        "benchmark", BENCHMARKS)
    topology = _take(top, "topology", None, str)
    output = _take(top, "output", None, str)
    seed = _take(top, "seed", 0, int)

    mat = _require(top.pop("material", None), "material")
    material = MaterialConfig(
        young_modulus=_take(mat, "young_modulus", 430.0, float),
        poisson_ratio=_take(mat, "poisson_ratio", 0.3, float),
        rel_density=_take(mat, "rel_density", 0.01, float),
        thickness=_take(mat, "thickness", None, float),
        sigma_f=_take(mat, "sigma_f", 11.0, float),
        shear_correction=_take(mat, "shear_correction", False, bool))
    _no_leftovers(mat, "material")
    if material.young_modulus <= 0.0:
        raise ConfigError("material.young_modulus must be positive")
    if material.thickness is None and not 0.0 < material.rel_density < 1.0:
        raise ConfigError(f"material.rel_density {material.rel_density} "
                          f"outside (0, 1)")
    if material.thickness is not None and material.thickness <= 0.0:
        raise ConfigError("material.thickness must be positive")

    qc_raw = _require(top.pop("qc", None), "qc")
    qc = QCConfig(
        spacing=_take(qc_raw, "spacing", 4, int),
        order=_choice(_take(qc_raw, "order", "second", str),
                      "qc.order", tuple(ORDER_MODES)),
        sampling=_choice(_take(qc_raw, "sampling", "optimal", str),
                         "qc.sampling", SAMPLING_MODES))
    _no_leftovers(qc_raw, "qc")
    if qc.spacing < 1:
        raise ConfigError("qc.spacing must be at least 1")
    if ORDER_MODES[qc.order] == 2 and qc.spacing % 2:
        raise ConfigError(f"quadratic coarse elements need even spacing, "
                          f"got {qc.spacing}")

    ref_raw = _require(top.pop("refinement", None), "refinement")
    refinement = RefinementConfig(
        threshold=_take(ref_raw, "threshold", 1e-3, float),
        reduction=_take(ref_raw, "reduction", 0.2, float),
        max_stages=_take(ref_raw, "max_stages", 0, int))
    _no_leftovers(ref_raw, "refinement")

    sol_raw = _require(top.pop("solver", None), "solver")
    solver = SolveSettings(
        tolerance=_take(sol_raw, "tolerance", SolveSettings().tolerance,
                        float),
        max_iterations=_take(sol_raw, "max_iterations",
                             SolveSettings().max_iterations, int))
    _no_leftovers(sol_raw, "solver")

    cook_raw = _require(top.pop("cook", None), "cook")
    cook = CookConfig(
        length=_take(cook_raw, "length", 48.0, float),
        left_height=_take(cook_raw, "left_height", 44.0, float),
        right_height=_take(cook_raw, "right_height", 16.0, float),
        scale=_take(cook_raw, "scale", 1.0, float),
        layers=_take(cook_raw, "layers", 3, int),
        force=_take(cook_raw, "force", 1e-4, float),
        spacings=_take(cook_raw, "spacings", (2, 3, 4), (int,)),
        max_reference_ucs=_take(cook_raw, "max_reference_ucs", 200000, int))
    _no_leftovers(cook_raw, "cook")
    if min(cook.length, cook.left_height, cook.right_height) <= 0.0 \
            or cook.scale <= 0.0:
        raise ConfigError("cook geometry lengths must be positive")
    if cook.layers < 1:
        raise ConfigError("cook.layers must be at least 1")
    if cook.force == 0.0:
        raise ConfigError("cook.force must be nonzero")
    if any(s < 2 for s in cook.spacings):
        raise ConfigError("cook.spacings entries must be at least 2")

    frac_raw = _require(top.pop("fracture", None), "fracture")
    fracture = FractureConfig(
        k_applied=_take(frac_raw, "k_applied", 6.27e-3, float),
        half_width=_take(frac_raw, "half_width", 20, int),
        resolve_margin=_take(frac_raw, "resolve_margin", 3, int),
        linearity_tol=_take(frac_raw, "linearity_tol", 1e-2, float),
        densities=_take(frac_raw, "densities",
                        (0.005, 0.01, 0.02, 0.05), (float,)))
    _no_leftovers(frac_raw, "fracture")
    if fracture.k_applied == 0.0:
        raise ConfigError("fracture.k_applied must be nonzero")
    if fracture.half_width < 4:
        raise ConfigError("fracture.half_width must be at least 4")
    if any(not 0.0 < rho < 1.0 for rho in fracture.densities):
        raise ConfigError("fracture.densities must lie in (0, 1)")

    thr_raw = _require(top.pop("through", None), "through")
    in_plane = _take(thr_raw, "in_plane", (32, 32), (int,))
    if len(in_plane) != 2:
        raise ConfigError("through.in_plane must be [nx, ny]")
    through = ThroughConfig(
        in_plane=in_plane,
        thickness=_take(thr_raw, "thickness", 3, int),
        crack_width=_take(thr_raw, "crack_width", 16, int),
        pull=_take(thr_raw, "pull", 1e-3, float),
        resolve_margin=_take(thr_raw, "resolve_margin", 2, int))
    _no_leftovers(thr_raw, "through")

    _no_leftovers(top, context)
    return RunConfig(benchmark=benchmark, topology=topology, output=output,
                     seed=seed, material=material, qc=qc,
                     refinement=refinement, solver=solver, cook=cook,
                     fracture=fracture, through=through)
