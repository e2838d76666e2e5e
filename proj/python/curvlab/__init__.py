"""Curvature and plasticity diagnostics for continual learning."""

from ._curvlab import (
    ConfigError,
    IdxError,
    NumericalError,
    ShapeError,
    batch_gradient,
    csv_header,
    dormancy_negentropy,
    effective_rank,
    empirical_fisher_rank,
    exact_hessian,
    feature_rank,
    forward,
    grad_overlap,
    init_params,
    load_idx,
    make_fixtures,
    normalize_config,
    param_count,
    per_sample_gradients,
    regenerative_penalty,
    run,
    singular_values,
    sweep,
    sym_eigvals,
    symmetric_rank,
    validate_hessian,
    wasserstein_penalty,
)

__version__ = "0.1.0"
