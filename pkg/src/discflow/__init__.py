"""Semigroups of scalar discontinuous ODEs and their smooth approximations.

Scenario data (field + singular measure + stop/wait/branch sets) selects a
deterministic or Markov semigroup; this package evaluates the flows,
samples random paths, composes transition kernels, builds graph-convergent
smooth fields, and verifies the vanishing-noise diffusion limits.
"""

from ._backend import backend_name, set_num_threads
from .scenario import (
    AtomlessMeasure,
    FieldSpec,
    Flavor,
    GraphInterval,
    Piece,
    SemigroupSpec,
    ValidationReport,
    box_truncate,
    graph_distance,
    limits_at,
    load_scenario,
    measure_mass,
    multifunction_at,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    simplify_spec,
    validate,
)
from .flow import classify, flow, flow_positions, semigroup_property_check, travel_time
from .markov import (
    SamplePath,
    TransitionKernelCDF,
    analytic_kernel,
    empirical_kernel,
    sample_path,
    terminal_positions,
)
from .metrics import CDFCurve, kolmogorov, l1_cdf, lipschitz_dual
from .stopped import (
    MarkovPathSampler,
    SDEPathSampler,
    StoppedMeasure,
    compose_step,
    global_from_local,
    local_gamma,
    local_laws_from_spec,
    midpoints,
    stopped_measure,
)
from .smooth import (
    build_geps,
    build_nodes,
    build_smooth_field,
    convergence_report,
    convergence_report_multi,
    mollify,
    smooth_flow,
)
from .diffusion import (
    DiffusionScheme,
    EigenProfile,
    build_scheme,
    eigen_profile,
    exit_stats,
    plateau_escape,
    reflection_bound,
    schedule_case3,
    select_zeta,
    simulate_sde,
    upper_profile,
)
from .pde import (
    bracket_and_converge,
    fundamental_kernel,
    holding_kernel,
    lower_upper_profiles,
    solve_forward,
)

__version__ = "0.1.0"
