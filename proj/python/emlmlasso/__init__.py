"""Lasso selection of fixed effects in linear mixed models via penalized EM."""

from ._core import (
    ColumnReductionReport,
    CvFold,
    Dataset,
    EmlmlassoError,
    FitReport,
    LmmParams,
    McSummary,
    PenaltySpec,
    PlsSolution,
    RegularizationPath,
    ScenarioConfig,
    SelectionResult,
    default_grid,
    e_step,
    find_linear_combos,
    fit_em,
    generate_scenario,
    kfold_cv,
    kkt_check,
    lambda_max,
    linear_grid,
    log_grid,
    observed_loglik,
    pls_objective,
    read_long_csv,
    remove_linear_combos,
    run_monte_carlo,
    select_lambda,
    soft_threshold,
    solve_pls,
    standardize,
    subject_folds,
)

__version__ = "0.1.0"
