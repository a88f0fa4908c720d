"""Stochastic differential game laboratory.

Finite-difference solvers for sup-inf (Isaacs-type) elliptic equations,
curvature-penalized approximations, exit-time Monte Carlo under
policy-dependent changes of time, measure and driving noise, and the
experiment harness that checks the value is invariant under those
changes.
"""

from .coefficients import (
    MatrixField,
    ScalarField,
    VectorField,
    parse_matrix,
    parse_scalar,
    parse_vector,
)
from .config import ConfigError, load_experiment, load_problem
from .grids import DomainGrid, ValueField
from .harness import (
    ExperimentConfig,
    InvarianceReport,
    ValueEstimate,
    VariantParams,
    VkConvergenceReport,
    build_variant_spec,
    estimate_value,
    run_invariance_suite,
    run_vk_convergence,
)
from .model import (
    ActionSets,
    BarrierFunction,
    DomainSpec,
    GameProblem,
    ValidationReport,
    build_barrier,
    diffusion_matrix,
    effective_drift,
    validate_problem,
)
from .pde import (
    IsaacsSolver,
    PenalizedSolver,
    PucciParams,
    RateReport,
    SolveConfig,
    convergence_study,
    discrete_L,
    evaluate_H,
    evaluate_P,
    extend_problem,
    h_mono,
    solve_isaacs,
    solve_penalized,
)
from .policies import (
    BangBangPolicy,
    CandidateControlSet,
    ConstantPolicy,
    ConstantResponder,
    FeedbackAlphaPolicy,
    FeedbackBetaPolicy,
    MarkovSelector,
    OccupancyPolicy,
    build_alpha_selector,
    build_beta_selector,
    make_feedback_policy,
    submartingale_test,
    supermartingale_test,
)
from .simulate import (
    VARIANTS,
    ControlAdaptedSpec,
    MartingaleReport,
    PathState,
    SimConfig,
    TrajectoryBatch,
    TrajectoryRecord,
    em_step,
    girsanov_martingale_check,
    increment_bound_study,
    pathwise_comparison,
    simulate_to_exit,
)

__version__ = "0.1.0"
