"""Randomized telescope gradient estimators."""

from ._rtel import (
    CostModel,
    GradientSequence,
    TruncationDistribution,
    WeightKind,
    WeightScheme,
    default_rate_grid,
    exact_moments,
    export_dataset,
    greedy_subsequence_select,
    grid_search,
    make_problem,
    make_weight_scheme,
    optimal_q_rr,
    optimal_q_ss,
    rt_estimate,
    run,
    run_experiment,
)

__all__ = [
    "CostModel",
    "GradientSequence",
    "TruncationDistribution",
    "WeightKind",
    "WeightScheme",
    "default_rate_grid",
    "exact_moments",
    "export_dataset",
    "greedy_subsequence_select",
    "grid_search",
    "make_problem",
    "make_weight_scheme",
    "optimal_q_rr",
    "optimal_q_ss",
    "rt_estimate",
    "run",
    "run_experiment",
]
