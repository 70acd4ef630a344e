"""Adaptive data analysis over correlated observations.

A simulation library for studying when adaptively chosen statistical
queries generalize despite dependencies within the sample: exact
dependence coefficients for discrete measures, private and
transcript-compressing answering mechanisms, overfitting adversaries,
and a seeded experiment harness.
"""
from .analysts import DeterministicAdaptiveAnalyst, RandomSignAttacker, ScriptedAnalyst
from .dependence import (
    ChainBoundReport,
    PsiReport,
    gibbs_dependence,
    is_product,
    markov_psi_bound,
    tv,
)
from .errors import GameAborted, SizeCapError, ValidationError, ZeroProbabilityError
from .game import (
    AccuracyResult,
    AnalystRole,
    GapEstimate,
    MechanismRole,
    MonitorResult,
    Transcript,
    empirical_error,
    expectation_gap,
    gamma_estimate,
    monitor,
    run_game,
    statistical_error,
)
from .measures import (
    Alphabet,
    ChainMeasure,
    Measure,
    PlantedMeasure,
    ProductMeasure,
    TABLE_CAP,
    TableMeasure,
    conditional_marginal,
    make_chain,
    make_planted,
    make_product,
    marginal,
    measure_from_json,
    measure_to_json,
    query_mean,
    sample,
    skip,
    to_table,
)
from .mechanisms import (
    CompressionSpec,
    GaussianMechanism,
    NaiveMechanism,
    PopulationOracleMechanism,
    RoundedMechanism,
    answer_gaussian,
    answer_naive,
    answer_rounded,
    transcript_bound,
)
from .privacy import (
    HistogramItem,
    NoiseSpec,
    PrivacyBudget,
    add_noise,
    calibrate_gaussian,
    completeness_multiplicity,
    deviating_algorithm,
    exponential_mechanism,
    histogram_threshold,
    stable_histogram,
)
from .queries import (
    StatisticalQuery,
    sign_aggregate_query,
    sign_query,
    singleton_query,
    table_query,
    threshold_query,
    zero_query,
)
from .seeding import derive_seed, rng_from

__version__ = "0.1.0"
