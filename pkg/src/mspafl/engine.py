"""Round loop for split-model federated averaging with client check-in,
plus the conventional noisy-FedAvg baseline it is compared against.

Each round: every client flips its private check-in coin; participants
recombine their retained private block with the current global public
block, take Q mini-batch SGD steps over the full vector, split, clip the
public block, perturb it, and upload.  The server averages the uploads with
the 1/(nu*|X|) correction and the cycle repeats.  All randomness comes from
per-(client, round) substreams of the master seed, so traces are
bit-identical however the per-client work is scheduled.

An empty round (nobody checked in) is skipped: the global public block
carries over, the trace records no participants and zero privacy spend,
because nothing left any client.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import accountant, data, mechanisms, model, rng
from .accountant import (
    CentralRoundPrivacy,
    LocalPrivacySpec,
    SamplingSpec,
    SubsampleMode,
    TotalPrivacyReport,
)
from .errors import ConfigError, DegenerateParameterError, InvalidSpecError

ALGORITHMS = ("ms-pafl", "dp-fedavg")


@dataclass(frozen=True)
class ExperimentConfig:
    num_clients: int
    rounds: int
    check_in_prob: float | tuple[float, ...]
    local_steps: int
    batch_size: int
    subsample_mode: SubsampleMode
    eps_local: float
    delta_local: float
    clip_threshold: float
    learning_rate: float
    split_fraction: float = 0.5
    hoeffding_beta: float = 0.25
    composition_delta: float = 1e-4
    master_seed: int = 0
    algorithm: str = "ms-pafl"
    regularization: float = 0.0
    holdout_fraction: float = 0.2
    public_only: bool = False
    noiseless: bool = False
    allow_extrapolation: bool = False
    sensitivity: float | None = None

    def probs(self) -> tuple[float, ...]:
        if isinstance(self.check_in_prob, (int, float)):
            return (float(self.check_in_prob),) * self.num_clients
        return tuple(float(p) for p in self.check_in_prob)


@dataclass(frozen=True)
class RoundTrace:
    round_index: int
    participants: tuple[int, ...]
    correction: float
    global_public: np.ndarray
    eps_central_round: float
    delta_central_round: float
    eps_central_total: float
    eps_local_max: float
    train_loss: float
    test_accuracy: float
    server_accuracy: float


@dataclass
class ExperimentResult:
    traces: list[RoundTrace]
    total: TotalPrivacyReport
    final_accuracy: float
    final_server_accuracy: float
    config: ExperimentConfig


@dataclass
class ExperimentState:
    """Everything the round loop carries between rounds."""

    config: ExperimentConfig
    clients: list[data.ClientDataset]
    test_features: np.ndarray
    test_labels: np.ndarray
    loss_spec: model.LossSpec
    probs: tuple[float, ...]
    ratios: tuple[float, ...]
    sigma_squared: float
    private_dim: int
    public_dim: int
    private_blocks: np.ndarray  # (N, private_dim), per-client retained state
    global_public: np.ndarray  # (public_dim,)
    round_privacy: CentralRoundPrivacy | None
    worst_eps: float = 0.0
    worst_delta: float = 0.0
    traces: list[RoundTrace] = field(default_factory=list)

    # Baseline state: the full global vector (no per-client retention).
    global_full: np.ndarray | None = None


def check_in(p: float, client_id: int, round_index: int, seed: int) -> bool:
    """Bernoulli(p) participation coin from the (client, round) substream."""
    if not (0.0 <= p <= 1.0):
        raise InvalidSpecError(f"check-in probability must be in [0,1], got {p}")
    if p == 0.0:
        return False
    if p == 1.0:
        return True
    return bool(rng.substream(seed, rng.CHECKIN, client_id, round_index).random() < p)


def correction_factor(probs: Sequence[float]) -> float:
    """nu = 1 - prod(1 - p_i): the probability at least one client checks in."""
    if len(probs) == 0:
        raise InvalidSpecError("probs must be nonempty")
    for p in probs:
        if not (0.0 <= p <= 1.0):
            raise InvalidSpecError(f"check-in probability must be in [0,1], got {p}")
    if all(p == 0.0 for p in probs):
        raise DegenerateParameterError("all check-in probabilities are zero; no client can ever participate")
    if any(p == 1.0 for p in probs):
        return 1.0
    return -math.expm1(sum(math.log1p(-p) for p in probs))


def aggregate(updates: Mapping[int, np.ndarray], probs: Sequence[float]) -> np.ndarray:
    """Corrected mean (1/(nu*|X|)) * sum of the participants' uploads.

    Summation runs over ascending client id so the result is independent of
    how the per-client work was scheduled.
    """
    if not updates:
        raise InvalidSpecError("aggregate needs at least one participant (empty rounds are skipped upstream)")
    nu = correction_factor(probs)
    stacked = np.stack([updates[i] for i in sorted(updates)])
    return stacked.sum(axis=0) / (nu * stacked.shape[0])


def mean_accuracy(models: np.ndarray, features: np.ndarray, labels: np.ndarray) -> float:
    """Mean over rows of `models` of sign-prediction accuracy on (features, labels)."""
    margins = features @ models.T  # (num_samples, num_models)
    predictions = np.where(margins >= 0.0, 1.0, -1.0)
    return float((predictions == labels[:, None]).mean(axis=0).mean())


def validate_config(config: ExperimentConfig, client_sizes: Sequence[int] | None = None) -> list[str]:
    """All configuration problems at once; empty list means valid."""
    problems: list[str] = []
    if config.num_clients < 1:
        problems.append(f"num_clients must be >= 1, got {config.num_clients}")
    if config.rounds < 0:
        problems.append(f"rounds must be >= 0, got {config.rounds}")
    if config.local_steps < 1:
        problems.append(f"local_steps must be >= 1, got {config.local_steps}")
    if config.batch_size < 1:
        problems.append(f"batch_size must be >= 1, got {config.batch_size}")
    if config.algorithm not in ALGORITHMS:
        problems.append(f"algorithm must be one of {ALGORITHMS}, got {config.algorithm!r}")

    probs = config.probs()
    if len(probs) != config.num_clients and config.num_clients >= 1:
        problems.append(
            f"check_in_prob list has {len(probs)} entries for {config.num_clients} clients"
        )
    if any(not (0.0 <= p <= 1.0) for p in probs):
        problems.append("every check_in_prob must be in [0,1]")
    elif probs and all(p == 0.0 for p in probs):
        problems.append("all check-in probabilities are zero; no client can ever participate")

    if config.eps_local <= 0:
        problems.append(f"eps_local must be > 0, got {config.eps_local}")
    elif config.eps_local > accountant.EPS_LOCAL_PROVEN_MAX and not config.allow_extrapolation:
        problems.append(
            f"eps_local = {config.eps_local} exceeds the proven amplification regime "
            "(eps_local <= 1); rerun with allow_extrapolation/--allow-extrapolation to proceed"
        )
    if not (0.0 < config.delta_local < 1.0):
        problems.append(f"delta_local must be in (0,1), got {config.delta_local}")
    if config.clip_threshold <= 0:
        problems.append(f"clip_threshold must be > 0, got {config.clip_threshold}")
    if config.learning_rate < 0:
        problems.append(f"learning_rate must be >= 0, got {config.learning_rate}")
    if not config.public_only and not (0.0 < config.split_fraction < 1.0):
        problems.append(
            f"split_fraction must be in (0,1) (got {config.split_fraction}); "
            "set public_only for the no-private-block mode"
        )
    if config.hoeffding_beta <= 0:
        problems.append(f"hoeffding_beta must be > 0, got {config.hoeffding_beta}")
    elif config.num_clients >= 1:
        d_prime = accountant.hoeffding_delta(config.hoeffding_beta, config.num_clients)
        if d_prime >= 1.0:
            problems.append(
                f"delta' = 2*exp(-2*beta^2*N) = {d_prime:.6g} >= 1 for "
                f"beta={config.hoeffding_beta}, N={config.num_clients}; need N >= "
                f"{accountant.min_clients_for_beta(config.hoeffding_beta)} at this beta"
            )
    if not (0.0 < config.composition_delta <= 1.0):
        problems.append(f"composition_delta must be in (0,1], got {config.composition_delta}")
    if not (0.0 < config.holdout_fraction < 1.0):
        problems.append(f"holdout_fraction must be in (0,1), got {config.holdout_fraction}")
    if config.sensitivity is not None and config.sensitivity <= 0:
        problems.append(f"sensitivity must be > 0, got {config.sensitivity}")
    if config.algorithm == "dp-fedavg" and probs:
        k = int(round(sum(probs) / len(probs) * config.num_clients))
        if k < 1:
            problems.append("dp-fedavg would sample 0 clients per round (round(mean_p*N) < 1)")

    if client_sizes is not None and config.subsample_mode is SubsampleMode.WOR:
        need = config.local_steps * config.batch_size
        smallest = min(client_sizes)
        if need > smallest:
            problems.append(
                f"WOR infeasible: local_steps*batch_size = {need} exceeds the smallest "
                f"client dataset ({smallest} samples)"
            )
    return problems


def prepare_state(
    config: ExperimentConfig, features: np.ndarray, labels: np.ndarray
) -> ExperimentState:
    """Holdout split, partition, model geometry and accountant constants.

    Raises ConfigError listing every problem if the configuration is invalid
    for this dataset.
    """
    problems = validate_config(config)
    if problems:
        raise ConfigError(problems)

    train_x, train_y, test_x, test_y = data.holdout_split(
        features, labels, config.holdout_fraction, config.master_seed
    )
    clients = data.partition(train_x, train_y, config.num_clients, config.master_seed)
    problems = validate_config(config, client_sizes=[c.size for c in clients])
    if problems:
        raise ConfigError(problems)

    feature_dim = features.shape[1]
    loss_spec = model.LossSpec(
        regularization=config.regularization, feature_dim=feature_dim, label_dim=1
    )
    dim = loss_spec.dimension
    if config.public_only:
        private_dim, public_dim = 0, dim
    else:
        boundary = round(config.split_fraction * dim)
        if boundary < 1 or boundary > dim - 1:
            raise ConfigError(
                [f"split_fraction {config.split_fraction} leaves an empty block for dimension {dim}"]
            )
        private_dim, public_dim = boundary, dim - boundary

    probs = config.probs()
    ratios = tuple(
        accountant.subsampling_ratio(
            SamplingSpec(
                check_in_prob=p,
                subsample_mode=config.subsample_mode,
                local_steps=config.local_steps,
                batch_size=config.batch_size,
                local_dataset_size=c.size,
            )
        )
        for p, c in zip(probs, clients)
    )

    privacy_spec = LocalPrivacySpec(
        eps_local=config.eps_local,
        delta_local=config.delta_local,
        clip_threshold=config.clip_threshold,
        sensitivity=config.sensitivity,
    )
    sigma_squared = 0.0 if config.noiseless else accountant.gaussian_sigma_squared(privacy_spec)

    if config.algorithm == "ms-pafl":
        round_privacy = accountant.central_round_privacy(
            list(zip(probs, ratios)),
            config.eps_local,
            config.delta_local,
            config.hoeffding_beta,
            allow_extrapolation=config.allow_extrapolation,
        )
    else:
        round_privacy = None

    return ExperimentState(
        config=config,
        clients=clients,
        test_features=test_x,
        test_labels=test_y,
        loss_spec=loss_spec,
        probs=probs,
        ratios=ratios,
        sigma_squared=sigma_squared,
        private_dim=private_dim,
        public_dim=public_dim,
        private_blocks=np.zeros((config.num_clients, private_dim)),
        global_public=np.zeros(public_dim),
        round_privacy=round_privacy,
        global_full=np.zeros(dim) if config.algorithm == "dp-fedavg" else None,
    )


def run_round(state: ExperimentState, round_index: int) -> RoundTrace:
    """Execute one communication round and append its trace to the state."""
    if state.config.algorithm == "dp-fedavg":
        trace = _run_round_baseline(state, round_index)
    else:
        trace = _run_round_split(state, round_index)
    state.worst_eps = max(state.worst_eps, trace.eps_central_round)
    state.worst_delta = max(state.worst_delta, trace.delta_central_round)
    trace = replace(
        trace,
        eps_central_total=accountant.strong_composition(
            state.worst_eps, state.worst_delta, round_index + 1, state.config.composition_delta
        )[0],
        eps_local_max=_max_client_total(state, round_index + 1),
    )
    state.traces.append(trace)
    return trace


def _run_round_split(state: ExperimentState, t: int) -> RoundTrace:
    config = state.config
    seed = config.master_seed
    participants = tuple(
        i for i in range(config.num_clients) if check_in(state.probs[i], i, t, seed)
    )
    nu = correction_factor(state.probs)

    if participants:
        uploads: dict[int, np.ndarray] = {}
        for i in participants:
            client = state.clients[i]
            start = model.SplitModel(
                private_block=state.private_blocks[i], public_block=state.global_public
            )
            plan = data.make_batch_plan(
                client, config.local_steps, config.batch_size, config.subsample_mode, seed, t
            )
            batches = [client.batch(idx) for idx in plan.batches]
            updated = model.local_update(start, batches, config.learning_rate, state.loss_spec)
            state.private_blocks[i] = updated.private_block
            clipped = mechanisms.clip(updated.public_block, config.clip_threshold)
            noise_spec = mechanisms.NoiseSpec(
                sigma_squared=state.sigma_squared,
                dimension=state.public_dim,
                stream_id=(i, t),
            )
            uploads[i] = mechanisms.perturb(clipped, noise_spec, seed)
        assert all(u.shape == (state.public_dim,) for u in uploads.values()), (
            "aggregate input must be exactly the perturbed public blocks"
        )
        state.global_public = aggregate(uploads, state.probs)
        eps_round = state.round_privacy.eps_central
        delta_round = state.round_privacy.delta_central
    else:
        # Nobody checked in: nothing left any client, so no budget is spent
        # and the global public block carries over unchanged.
        eps_round = 0.0
        delta_round = 0.0

    recombined = np.hstack([state.private_blocks, np.tile(state.global_public, (config.num_clients, 1))])
    train_loss = float(
        np.mean([
            model.loss_flat(recombined[i], (c.features, c.labels), state.loss_spec)
            for i, c in enumerate(state.clients)
        ])
    )
    test_accuracy = mean_accuracy(recombined, state.test_features, state.test_labels)
    server_model = np.concatenate([np.zeros(state.private_dim), state.global_public])
    server_accuracy = mean_accuracy(server_model[None, :], state.test_features, state.test_labels)

    return RoundTrace(
        round_index=t,
        participants=participants,
        correction=nu,
        global_public=state.global_public.copy(),
        eps_central_round=eps_round,
        delta_central_round=delta_round,
        eps_central_total=0.0,  # filled in by run_round
        eps_local_max=0.0,  # filled in by run_round
        train_loss=train_loss,
        test_accuracy=test_accuracy,
        server_accuracy=server_accuracy,
    )


def _run_round_baseline(state: ExperimentState, t: int) -> RoundTrace:
    """Conventional noisy FedAvg: the server samples exactly K clients, each
    returns its full model clipped and noised in full dimension."""
    config = state.config
    seed = config.master_seed
    n = config.num_clients
    k = int(round(sum(state.probs)))  # round(mean_p * N)
    chosen = rng.substream(seed, rng.SERVER_SAMPLE, 0, t).choice(n, size=k, replace=False)
    participants = tuple(sorted(int(i) for i in chosen))

    uploads: dict[int, np.ndarray] = {}
    for i in participants:
        client = state.clients[i]
        start = model.SplitModel(
            private_block=np.zeros(0), public_block=state.global_full
        )
        plan = data.make_batch_plan(
            client, config.local_steps, config.batch_size, config.subsample_mode, seed, t
        )
        batches = [client.batch(idx) for idx in plan.batches]
        updated = model.local_update(start, batches, config.learning_rate, state.loss_spec)
        clipped = mechanisms.clip(updated.public_block, config.clip_threshold)
        noise_spec = mechanisms.NoiseSpec(
            sigma_squared=state.sigma_squared,
            dimension=state.loss_spec.dimension,
            stream_id=(i, t),
        )
        uploads[i] = mechanisms.perturb(clipped, noise_spec, seed)
    stacked = np.stack([uploads[i] for i in sorted(uploads)])
    state.global_full = stacked.sum(axis=0) / stacked.shape[0]

    train_loss = float(
        np.mean([
            model.loss_flat(state.global_full, (c.features, c.labels), state.loss_spec)
            for c in state.clients
        ])
    )
    test_accuracy = mean_accuracy(state.global_full[None, :], state.test_features, state.test_labels)

    return RoundTrace(
        round_index=t,
        participants=participants,
        correction=1.0,
        global_public=state.global_full.copy(),
        eps_central_round=config.eps_local,
        delta_central_round=config.delta_local,
        eps_central_total=0.0,
        eps_local_max=0.0,
        train_loss=train_loss,
        test_accuracy=test_accuracy,
        server_accuracy=test_accuracy,
    )


def _max_client_total(state: ExperimentState, rounds_so_far: int) -> float:
    """Largest per-client total eps through the given number of rounds."""
    config = state.config
    if config.algorithm == "dp-fedavg":
        # No amplification: the sqrt(T)-scaling moments total with the
        # subsampling prefactor and participation weight both at 1.
        return (
            1.0
            / (2.0 * config.clip_threshold)
            * math.sqrt(
                rounds_so_far
                * math.log(1.0 / config.delta_local)
                / math.log(1.25 / config.delta_local)
            )
            * config.eps_local
        )
    worst = 0.0
    for p, q in zip(state.probs, state.ratios):
        if p == 0.0:
            continue
        try:
            value = accountant.total_local_epsilon_closed_form(
                q, p, rounds_so_far, config.eps_local, config.delta_local, config.clip_threshold
            )
        except DegenerateParameterError:
            value = math.inf  # q == 1: no finite amplified bound applies
        worst = max(worst, value)
    return worst


def run_experiment(
    config: ExperimentConfig, features: np.ndarray, labels: np.ndarray
) -> ExperimentResult:
    """Run all rounds and assemble the end-of-training privacy report."""
    state = prepare_state(config, features, labels)
    for t in range(config.rounds):
        run_round(state, t)

    if config.rounds == 0:
        total = TotalPrivacyReport(
            per_client_total_eps=[0.0] * config.num_clients,
            global_total_eps=0.0,
            global_total_delta=0.0,
            rounds=0,
            composition_delta=config.composition_delta,
            worst_round_eps=0.0,
            worst_round_delta=0.0,
            extrapolated=False,
        )
        return ExperimentResult(
            traces=[], total=total, final_accuracy=0.0, final_server_accuracy=0.0, config=config
        )

    per_client: list[float] = []
    for p, q in zip(state.probs, state.ratios):
        if p == 0.0:
            per_client.append(0.0)
            continue
        try:
            per_client.append(
                accountant.total_local_epsilon_closed_form(
                    q, p, config.rounds, config.eps_local, config.delta_local, config.clip_threshold
                )
            )
        except DegenerateParameterError:
            per_client.append(math.inf)
    global_eps, global_delta = accountant.strong_composition(
        state.worst_eps, state.worst_delta, config.rounds, config.composition_delta
    )
    total = TotalPrivacyReport(
        per_client_total_eps=per_client,
        global_total_eps=global_eps,
        global_total_delta=global_delta,
        rounds=config.rounds,
        composition_delta=config.composition_delta,
        worst_round_eps=state.worst_eps,
        worst_round_delta=state.worst_delta,
        extrapolated=config.eps_local > accountant.EPS_LOCAL_PROVEN_MAX,
    )
    last = state.traces[-1]
    return ExperimentResult(
        traces=state.traces,
        total=total,
        final_accuracy=last.test_accuracy,
        final_server_accuracy=last.server_accuracy,
        config=config,
    )
