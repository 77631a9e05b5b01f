"""Coordinated ensemble sampling and diversity-preserving private aggregation.

The package splits into layers: core types and keyed randomness (core),
vote sampling (sampling), private release mechanisms (dp_mech), budget
tracking (accounting), synthetic ensembles (synth), the aggregation schemes
and generation loop (aggregation), and the verification harness with its
CLI (harness).
"""

from .accounting import PrivacyLedger, charge_target, charge_teachers, default_hit_budget
from .aggregation import (
    LoopResult,
    StepRecord,
    aggregate_heterogeneous_individual,
    aggregate_heterogeneous_sampled,
    aggregate_homogeneous,
    lockstep_loop,
)
from .core import (
    BOT,
    AggregateOutcome,
    Bot,
    FrequencyHistogram,
    PrivacyParams,
    SharedRandomness,
    TargetHit,
    TeacherDistribution,
    Token,
    TokenId,
    derive_seed,
)
from .dp_mech import (
    boundary_wrapper,
    between_thresholds,
    noisy_argmax,
    noisy_max_error_bound,
    outcome_distribution,
    sanitize_sampled_histogram,
)
from .sampling import (
    coordinated_sample,
    coordinated_trial_counts,
    independent_sample,
    independent_trial_counts,
)
from .synth import (
    MarkovProvider,
    MixtureSpec,
    ensemble_from_config,
    mixture_ensemble,
    planetz_like_ensemble,
    provider_from_config,
    uniform_k_ensemble,
)
