"""Accelerated mirror-prox solvers for monotone variational inequalities."""

from .errors import (
    ConfigurationError,
    ScheduleError,
    StatisticsError,
    UnboundedDomainError,
)
from .evaluation import (
    Certificate,
    GapReport,
    GapValue,
    certificate_det,
    certificate_stoch,
    fit_slope,
    gap_bounded,
    gap_perturbed,
    verify_bounds,
)
from .geometry import (
    Ball,
    Box,
    FeasibleSet,
    Free,
    GeometrySetup,
    Product,
    Simplex,
    SimpleTerm,
    bregman_diameter_sq,
    bregman_value,
    dual_norm_of,
    norm_of,
    prox_map,
    prox_optimality_residual,
)
from .harness import (
    ExperimentConfig,
    RunReport,
    build_components,
    compare_matrix,
    emit,
    run_experiment,
)
from .problems import (
    NoiseLog,
    NoiseRecord,
    ProblemSpec,
    StochasticOracle,
    gap_term,
    make_instance,
    sample_oracles,
    strong_solution_residual,
)
from .schedules import (
    Schedule,
    ScheduleConstants,
    TheoreticalBound,
    decay_seq,
    make_schedule,
    tail_probability,
    theoretical_bound,
)
from .solvers import (
    IterateState,
    Trajectory,
    amp_step_det,
    amp_step_stoch,
    run,
    run_extragradient,
    run_mirror_prox,
)

__version__ = "0.1.0"
