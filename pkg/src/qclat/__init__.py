"""Mixed-order quasicontinuum solver for periodic beam lattices."""

from qclat.assembly import (
    AssemblyError,
    DOFField,
    EnergyReport,
    QCAssembly,
    interpolate_uc,
)
from qclat.benchmarks import (
    CookModel,
    CookRun,
    OrderComparison,
    audit_mesh,
    build_cook_model,
    compare_orders,
    cook_polygon,
    fracture_case,
    pulled_displacement,
    run_cook,
    through_case,
)
from qclat.config import (
    ConfigError,
    RunConfig,
    build_config,
    parse_config,
)
from qclat.beam import (
    BeamKernelError,
    BeamProperties,
    BeamStressState,
    recover_stresses,
)
from qclat.fracture import (
    BoundaryLayerResult,
    FractureCase,
    FractureError,
    HomogenizedModuli,
    ThroughThicknessCase,
    ThroughThicknessResult,
    ToughnessFit,
    fit_toughness_scaling,
    homogenize,
    insert_crack,
    kfield_displacement,
    relative_density_to_thickness,
    run_boundary_layer,
    run_through_thickness,
    stress_histogram,
)
from qclat.lattice import (
    Box,
    CellBox,
    Disk,
    DiscreteLattice,
    LatticeError,
    Polygon,
    Prism,
    TopologyError,
    UnitCellTopology,
    build_topology,
    instantiate_region,
    load_catalog,
)
from qclat.mesh import (
    MeshError,
    QCMesh,
    RefinementConfig,
    build_qc_mesh,
    fully_resolve_region,
    refinement_flags,
    second_invariant,
)
from qclat.sampling import (
    SamplingError,
    SamplingPoint,
    exact_sampling_scheme,
    sampling_scheme,
)
from qclat.solver import (
    DirichletBC,
    NodalLoad,
    SolveResult,
    SolveSettings,
    SolverError,
    StageRecord,
    apply_dirichlet,
    consistent_load_vector,
    load_vector,
    minimize,
    staged_solve,
)

__version__ = "0.1.0"
