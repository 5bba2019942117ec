"""Dyadic nonlocal-transport model: simulator and invariant-check harness."""

from dyadicflow.model import (
    Constants,
    DomainError,
    DyadicState,
    InvalidInputError,
    ModelParams,
    SlopeVector,
    Tail,
    UnsupportedConventionError,
    WeightedSlopeVector,
    coercivity_constant,
    cs_constant,
    default_goodbad_threshold,
    dissipation,
    dissipation_direct,
    dissipation_limit,
    dissipation_matrix,
    rhs_full,
    rhs_inviscid,
    slopes,
    telescoped_sum,
    weighted_slopes,
    xs_norm,
)
from dyadicflow.integrate import (
    DiagnosticsRecord,
    EscapeSignal,
    IntegrationAbortError,
    Scheme,
    StepControls,
    StepUnderflowError,
    Termination,
    Trajectory,
    TrajectorySample,
    detect_escape,
    integrate,
    linear_semigroup,
    step,
)
from dyadicflow.analysis import (
    CHECKS,
    BlowupDiagnostics,
    GoodBadDecomposition,
    InvariantReport,
    SlopeRatioReport,
    blowup_diagnostics,
    check_max_principle,
    check_monotone_nonneg,
    check_monotone_traj,
    check_ordering_persistence_inviscid,
    check_sqrt2_structure,
    fit_riccati_constants,
    front_index,
    good_bad,
    goodbad_lower_constant,
    holder_seminorm,
    j_functional,
    riccati_fit,
    riccati_inequality_check,
    run_checks,
    slope_ratio_report,
)
from dyadicflow.scenarios import (
    gen_bump,
    gen_front,
    gen_geometric,
    profile_reconstruction,
)
from dyadicflow.config import (
    BumpScenario,
    ConfigError,
    CustomScenario,
    FrontScenario,
    GeometricScenario,
    RunConfig,
    SweepSpec,
    build_initial_state,
    load_config,
    load_sweep,
    save_config,
)

__version__ = "0.1.0"
