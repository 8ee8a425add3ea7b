"""Guessing a memoryless source through a noisy channel: optimal moment
exponents, the noise penalty, randomized guessing strategies and moment
simulation."""

__version__ = "0.1.0"

from .errors import (
    DimensionMismatchError,
    HorizonTooSmallError,
    InfiniteMomentError,
    InvalidDistributionError,
    NoisyGuessError,
    NonConvergenceError,
    ResourceLimitError,
    UnreachableError,
)
from .exponent import (
    ConverseAssumptionWarning,
    ExponentResult,
    HullWitness,
    SolverOptions,
    bsc_critical_q,
    bsc_critical_rho,
    critical_rho_general,
    exponent_with_side_info,
    grid_minimize_exponent,
    hull_membership,
    noiseless_exponent,
    objective,
    solve_exponent,
    tilted_distribution,
)
from .gamma import GammaOptions, GammaResult, GridSpec, exponent_via_types, gamma_min, gamma_pair
from .samplers import (
    IidStrategy,
    ListStrategy,
    UniversalSampler,
    UniversalStrategy,
    conditional_universal_log_prob,
    make_stream,
    sample_iid,
    sample_universal,
    success_probability,
    universal_log_prob,
)
from .simplex import (
    Channel,
    Distribution,
    GuessingProblem,
    TypeComposition,
    entropy,
    enumerate_types,
    kl_divergence,
    log_type_class_size,
    output_distribution,
)
from .simulator import (
    MomentReport,
    exact_moment,
    exponent_curve,
    fixed_list_moment,
    geometric_moment,
    simulate_moment,
)
