"""divlab: risk functionals, induced divergences, and seeded verification.

The package computes law-invariant convex risk measures on finite
probability spaces (entropic, shortfall, optimized certainty equivalent,
expectation, essential supremum, coherent), the divergences they induce by
convex duality (relative entropy, phi*-divergences, shortfall divergences),
and runs randomized, replayable checks of the structural facts tying the
two together: duality, data processing, the chain rule and its one-sided
relaxations, shift-convexity of acceptance sets, and time consistency.
"""

from .consistency import (
    CHECK_KINDS,
    ConditionalInstance,
    ProductInstance,
    SearchBudget,
    SearchResult,
    consistency_gap,
    counterexample_search,
    integral_lemma_gap,
    key_identity_gap,
    mixture_convexity_probe,
    property_s_probe,
    shift_convexity_probe,
    superadditivity_gap,
    weak_acceptance_margin,
    weak_consistency_gap,
)
from .divergence import (
    DivergenceSpec,
    DualSolveResult,
    DualSolverOptions,
    Gap,
    divergence_for_risk_spec,
    dpi_gap,
    dual_divergence,
    phi_divergence,
    primal_reconstruction,
    refinement_monotonicity,
    relative_entropy,
    shortfall_divergence,
    sufficiency_gap,
)
from .errors import DivLabError
from .losses import (
    ConjugateTable,
    LossFn,
    UtilityFn,
    check_log_subadditive,
    check_oce_inequality,
    conjugate_eval,
    numeric_conjugate,
)
from .prob import (
    FiniteDist,
    JointDist,
    Kernel,
    Partition,
    RandomVariable,
    check_convex_order,
    compose_kernel,
    condition,
    disintegrate,
    law_of,
    make_dist,
    mixture,
    point_mass,
    pushforward,
    radon_nikodym,
    shift_law,
    uniform,
)
from .report import (
    CheckReport,
    CheckSpec,
    SuiteConfig,
    Tolerances,
    emit_report,
    run_check,
    run_suite,
)
from .risk import (
    ConditionalRisk,
    RiskSpec,
    acceptance_member,
    rho_coherent,
    rho_conditional,
    rho_entropic,
    rho_lifted,
    rho_oce,
    rho_of_law,
    rho_shortfall,
)

__version__ = "0.1.0"
