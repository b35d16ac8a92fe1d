"""Bayesian nonparametric clustering of set-valued data with Poisson RFS mixtures."""

from .conjugate import (
    GammaParams,
    NiwParams,
    RfsPrior,
    SetSufficientStats,
    default_prior,
    gamma_posterior,
    log_marginal_points,
    log_predictive_cardinality,
    log_predictive_set,
    niw_posterior,
    stats_add,
    stats_remove,
    student_t_log_density,
)
from .errors import DprfsError, FormatError, InputError, ParameterError, StateError
from .rfs import (
    GaussianParams,
    PointPattern,
    PoissonRfsParams,
    gaussian_log_density,
    log_cardinality_pmf,
    log_poisson_rfs_density,
    sample_poisson_rfs,
)
from .sampler import (
    NEW,
    ChainConfig,
    ChainTrace,
    GibbsState,
    Hyperparams,
    PosteriorSummary,
    assignment_log_weights,
    gibbs_sweep,
    polya_urn_sample,
    run_chain,
    sample_concentration,
    sample_gem_weights,
    summarize,
)

__version__ = "0.1.0"
