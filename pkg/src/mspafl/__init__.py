"""Split-model federated averaging with differential-privacy accounting.

A deterministic desk-scale simulator of federated logistic regression in
which each client keeps a private parameter block on-device and shares only
a clipped, Gaussian-noised public block, participating per round via a
private check-in coin.  The accountant module implements the matching
privacy bounds: subsampling amplification, single-round central guarantees
under random check-in, per-client moments totals, and strong composition.
"""

from .accountant import (
    CentralRoundPrivacy,
    LocalPrivacySpec,
    LogMomentParams,
    SamplingSpec,
    SubsampleMode,
    TotalPrivacyReport,
    amplify_local,
    central_round_privacy,
    central_round_privacy_uniform,
    gaussian_sigma_squared,
    hoeffding_delta,
    log_moment,
    strong_composition,
    subsampling_ratio,
    total_local_epsilon_closed_form,
    total_local_epsilon_oracle,
)
from .data import BatchPlan, ClientDataset, Schema, load_csv, make_batch_plan, partition
from .engine import (
    ExperimentConfig,
    ExperimentResult,
    RoundTrace,
    aggregate,
    check_in,
    correction_factor,
    run_experiment,
)
from .mechanisms import NoiseSpec, clip, perturb
from .model import LossSpec, SplitModel, gradient, local_update, loss, recombine, split

__all__ = [
    "CentralRoundPrivacy",
    "LocalPrivacySpec",
    "LogMomentParams",
    "SamplingSpec",
    "SubsampleMode",
    "TotalPrivacyReport",
    "amplify_local",
    "central_round_privacy",
    "central_round_privacy_uniform",
    "gaussian_sigma_squared",
    "hoeffding_delta",
    "log_moment",
    "strong_composition",
    "subsampling_ratio",
    "total_local_epsilon_closed_form",
    "total_local_epsilon_oracle",
    "BatchPlan",
    "ClientDataset",
    "Schema",
    "load_csv",
    "make_batch_plan",
    "partition",
    "ExperimentConfig",
    "ExperimentResult",
    "RoundTrace",
    "aggregate",
    "check_in",
    "correction_factor",
    "run_experiment",
    "NoiseSpec",
    "clip",
    "perturb",
    "LossSpec",
    "SplitModel",
    "gradient",
    "local_update",
    "loss",
    "recombine",
    "split",
]
