"""Python bindings for the tsfm time-series foundation model workbench."""

from ._tsfm import (
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    Encoder,
    Error,
    IntegrityError,
    auc_pr,
    auroc,
    balanced_accuracy,
    cohens_kappa,
    compute_metric,
    cosine_warmup_lr,
    gen_synthetic,
    gradcheck,
    info_nce,
    lowpass_filter,
    resample,
    run_cli,
    weighted_f1,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "DimensionError",
    "Encoder",
    "Error",
    "IntegrityError",
    "auc_pr",
    "auroc",
    "balanced_accuracy",
    "cohens_kappa",
    "compute_metric",
    "cosine_warmup_lr",
    "gen_synthetic",
    "gradcheck",
    "info_nce",
    "lowpass_filter",
    "resample",
    "run_cli",
    "weighted_f1",
]
