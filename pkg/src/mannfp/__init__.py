"""Least-fixpoint approximation by dampened Mann iteration.

The package bundles the iteration schemes (scalar, per-component, chaotic,
random single-component), simple stochastic games with their Bellman
operators, exact-value oracles, a structure-preserving sampler, and a
benchmark harness.
"""

from .schemes import (
    AnalyticFlags,
    Const,
    DerivedChaoticScheme,
    FunctionVectorScheme,
    Harmonic,
    InvPow,
    OneMinusInv,
    PerComponentScheme,
    Scheme,
    SchemeFamily,
    SweepReport,
    UniformRandom,
    VectorScheme,
    Zero,
    eval_params,
    eval_vector_params,
    parse_scheme,
    progressing_diagnostic,
    sweep_analysis,
    synthesize_scheme,
    synthesis_budget_bound,
)
from .iteration import (
    KleeneResult,
    Operator,
    OperatorProvider,
    StoppingRule,
    Trajectory,
    ZeroBox,
    chaotic_iterate,
    clamp_extend,
    error_vs_reference,
    iterate,
    kleene_iterate,
    mann_step,
    random_chaotic_iterate,
    sup_norm,
)
from .models import (
    Action,
    BellmanKernel,
    SSG,
    StateActionIndex,
    bellman_apply,
    k_step_operator,
    load_model,
    make_ssg,
    restrict_policy,
    save_model,
    split_state_action,
    state_action_bellman_apply,
    validate_ssg,
)
from .analysis import (
    Classification,
    ExactValue,
    bellman_operator,
    check_operator_properties,
    classify_chain,
    exact_chain_value,
    exact_ssg_value,
    reference_value,
    sup_envelope,
)
from .sampling import (
    SamplerState,
    StructuralPrior,
    batch_observe,
    empirical_ssg,
    observe_step,
    sampling_validity_check,
)
from .experiments import (
    AggregateStats,
    GeneratorConfig,
    RunRecord,
    aggregate,
    benchmark_schemes,
    generate_random_ssg,
    run_chaotic_experiment,
    run_full_experiment,
)

__version__ = "0.1.0"
