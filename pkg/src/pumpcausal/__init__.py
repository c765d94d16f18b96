"""Equipment deterioration analytics: hierarchical hazard random effects
and group-stratified linear non-Gaussian causal discovery."""

from .data import (
    CovariateSeries,
    Dataset,
    InspectionRecord,
    TransitionObservation,
    build_transitions,
    ingest_inspections,
    ingest_timeseries,
)
from .diagnostics import RandomEffectEstimate, ess, extract_random_effects, hdi, split_rhat
from .features import (
    DEFAULT_ACTIVE_FEATURES,
    FEATURE_NAMES,
    FeatureMatrix,
    FeatureVector,
    WindowSeries,
    compute_features,
    extract_features,
    statistical_features,
    trend_features,
    variability_features,
)
from .grouping import Group, GroupAssignment, GroupDataset, assign_groups, build_group_datasets
from .hazard import (
    ModelParams,
    ParamLayout,
    PriorSpec,
    grad_log_posterior,
    hazard_rate,
    log_likelihood,
    log_posterior_unconstrained,
    log_prior,
    make_logp_and_grad,
    transition_prob,
)
from .lingam import (
    CausalModel,
    IcaResult,
    LingamConfig,
    StandardizedData,
    bootstrap_cis,
    causal_order,
    discover,
    estimate_effects,
    fast_ica,
    standardize,
)
from .nuts import PosteriorSamples, SamplerConfig, sample
from .synth import (
    GroundTruth,
    SynthConfig,
    generate_hazard_data,
    generate_lingam_scenario,
    generate_sem_data,
    generate_two_group_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "CovariateSeries", "Dataset", "InspectionRecord", "TransitionObservation",
    "build_transitions", "ingest_inspections", "ingest_timeseries",
    "RandomEffectEstimate", "ess", "extract_random_effects", "hdi", "split_rhat",
    "DEFAULT_ACTIVE_FEATURES", "FEATURE_NAMES", "FeatureMatrix", "FeatureVector",
    "WindowSeries", "compute_features", "extract_features",
    "statistical_features", "trend_features", "variability_features",
    "Group", "GroupAssignment", "GroupDataset", "assign_groups", "build_group_datasets",
    "ModelParams", "ParamLayout", "PriorSpec", "grad_log_posterior", "hazard_rate",
    "log_likelihood", "log_posterior_unconstrained", "log_prior",
    "make_logp_and_grad", "transition_prob",
    "CausalModel", "IcaResult", "LingamConfig", "StandardizedData",
    "bootstrap_cis", "causal_order", "discover", "estimate_effects",
    "fast_ica", "standardize",
    "PosteriorSamples", "SamplerConfig", "sample",
    "GroundTruth", "SynthConfig", "generate_hazard_data",
    "generate_lingam_scenario", "generate_sem_data", "generate_two_group_scenario",
]
