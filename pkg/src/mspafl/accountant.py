"""Privacy accounting for split-model federated averaging.

Pure 64-bit float functions of value inputs: amplification of a local
guarantee by mini-batch subsampling, Gaussian noise calibration, the
single-round central bound under random client check-in, the moments-style
total for a client across rounds (closed form and a numeric tail-bound
solver), and strong composition for the global model.  Safe to call from
any number of threads.

Conventions: eps/delta pairs are the usual approximate-DP parameters,
`q` is the fraction of a client's data touched per round, `p` a check-in
probability, `C` the clipping threshold, and sensitivity defaults to 2*C
(two clipped vectors can differ by at most that much in L2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .errors import (
    DegenerateHoeffdingError,
    DegenerateParameterError,
    InvalidSpecError,
    OutOfRegimeError,
    SearchFailureError,
)

# The subsampling amplification statement is proven only for eps_local <= 1.
EPS_LOCAL_PROVEN_MAX = 1.0

# Ceiling for the tail-bound binary search; hit only on absurd inputs.
_EPS_SEARCH_CEILING = 1e12


class SubsampleMode(str, Enum):
    """Mini-batch subsampling regime: without or with replacement."""

    WOR = "WOR"
    WR = "WR"


@dataclass(frozen=True)
class LocalPrivacySpec:
    """Per-client privacy target and the clipping geometry that backs it.

    sensitivity defaults to 2 * clip_threshold: after norm clipping, swapping
    one sample moves the released vector by at most the diameter of the
    radius-C ball.
    """

    eps_local: float
    delta_local: float
    clip_threshold: float
    sensitivity: float | None = None

    def __post_init__(self):
        if self.eps_local <= 0:
            raise InvalidSpecError(f"eps_local must be > 0, got {self.eps_local}")
        if not (0 < self.delta_local < 1):
            raise InvalidSpecError(f"delta_local must be in (0,1), got {self.delta_local}")
        if self.clip_threshold <= 0:
            raise InvalidSpecError(f"clip_threshold must be > 0, got {self.clip_threshold}")
        if self.sensitivity is None:
            object.__setattr__(self, "sensitivity", 2.0 * self.clip_threshold)
        elif self.sensitivity <= 0:
            raise InvalidSpecError(f"sensitivity must be > 0, got {self.sensitivity}")


@dataclass(frozen=True)
class SamplingSpec:
    """How much of one client's data a round can touch.

    local_steps batches of batch_size are drawn from a dataset of
    local_dataset_size samples, either all-distinct (WOR) or i.i.d. uniform
    (WR).  check_in_prob is the client's per-round participation coin.
    """

    check_in_prob: float
    subsample_mode: SubsampleMode
    local_steps: int
    batch_size: int
    local_dataset_size: int

    def __post_init__(self):
        if not (0.0 <= self.check_in_prob <= 1.0):
            raise InvalidSpecError(f"check_in_prob must be in [0,1], got {self.check_in_prob}")
        if self.local_steps < 1 or self.batch_size < 1 or self.local_dataset_size < 1:
            raise InvalidSpecError("local_steps, batch_size and local_dataset_size must be >= 1")
        if (
            self.subsample_mode is SubsampleMode.WOR
            and self.local_steps * self.batch_size > self.local_dataset_size
        ):
            raise InvalidSpecError(
                f"WOR needs local_steps*batch_size <= dataset size: "
                f"{self.local_steps}*{self.batch_size} > {self.local_dataset_size}"
            )


@dataclass(frozen=True)
class CentralRoundPrivacy:
    """Single-round (eps, delta) guarantee of the aggregated public model."""

    eps_central: float
    delta_central: float
    hoeffding_delta: float
    hoeffding_beta: float
    num_clients: int
    extrapolated: bool = False


@dataclass(frozen=True)
class LogMomentParams:
    """One evaluated log moment of the privacy loss at integer order lam."""

    lam: int
    log_moment_value: float

    def __post_init__(self):
        if self.lam < 1:
            raise InvalidSpecError(f"lam must be a positive integer, got {self.lam}")
        if self.log_moment_value < 0:
            raise InvalidSpecError("log_moment_value must be >= 0")


@dataclass(frozen=True)
class TotalPrivacyReport:
    """End-of-training privacy totals for every client and for the global model."""

    per_client_total_eps: list[float] = field(default_factory=list)
    global_total_eps: float = 0.0
    global_total_delta: float = 0.0
    rounds: int = 1
    composition_delta: float = 1.0
    worst_round_eps: float = 0.0
    worst_round_delta: float = 0.0
    extrapolated: bool = False


def subsampling_ratio(spec: SamplingSpec) -> float:
    """Effective fraction of the local dataset a round touches.

    Qb/|D| without replacement; 1-(1-1/|D|)^(Qb) with replacement (the
    probability a fixed sample is drawn at least once).
    """
    total = spec.local_steps * spec.batch_size
    n = spec.local_dataset_size
    if spec.subsample_mode is SubsampleMode.WOR:
        if total > n:
            raise InvalidSpecError(f"WOR with Qb={total} > |D|={n}")
        return total / n
    if n == 1:
        return 1.0
    # log1p/expm1 form keeps precision for large |D|
    return -math.expm1(total * math.log1p(-1.0 / n))


def amplify_local(
    eps_local: float,
    delta_local: float,
    q: float,
    *,
    allow_extrapolation: bool = False,
) -> tuple[float, float]:
    """Amplified per-round guarantee (2*q*eps, q*delta) of the subsampled mechanism."""
    if not (0.0 < q <= 1.0):
        raise InvalidSpecError(f"q must be in (0,1], got {q}")
    _check_eps_regime(eps_local, allow_extrapolation)
    return 2.0 * q * eps_local, q * delta_local


def gaussian_sigma_squared(spec: LocalPrivacySpec) -> float:
    """Minimal Gaussian noise variance achieving (eps_local, delta_local) at the given sensitivity."""
    s = spec.sensitivity
    return 2.0 * s * s * math.log(1.25 / spec.delta_local) / (spec.eps_local**2)


def hoeffding_delta(beta: float, num_clients: int) -> float:
    """Two-sided concentration slack 2*exp(-2*beta^2*N) for the participant count.

    Values >= 1 are legal outputs here (tiny beta^2*N); the central-round
    operations reject them.
    """
    if beta <= 0:
        raise InvalidSpecError(f"beta must be > 0, got {beta}")
    if num_clients < 1:
        raise InvalidSpecError(f"num_clients must be >= 1, got {num_clients}")
    return 2.0 * math.exp(-2.0 * beta * beta * num_clients)


def min_clients_for_beta(beta: float) -> int:
    """Smallest N with 2*exp(-2*beta^2*N) < 1 for the given beta."""
    return math.floor(math.log(2.0) / (2.0 * beta * beta)) + 1


def central_round_privacy(
    per_client: Sequence[tuple[float, float]],
    eps_local: float,
    delta_local: float,
    beta: float,
    *,
    allow_extrapolation: bool = False,
) -> CentralRoundPrivacy:
    """Single-round central guarantee of the aggregated public model.

    per_client holds one (check-in probability, subsampling ratio) pair per
    client.  The eps and delta maxima are taken independently over clients,
    so they may be attained at different indices.
    """
    if not per_client:
        raise InvalidSpecError("per_client must be nonempty")
    n = len(per_client)
    d_prime = hoeffding_delta(beta, n)
    if d_prime >= 1.0:
        raise DegenerateHoeffdingError(
            f"delta' = 2*exp(-2*beta^2*N) = {d_prime:.6g} >= 1 for beta={beta}, N={n}; "
            f"need N >= {min_clients_for_beta(beta)} at this beta"
        )
    _check_eps_regime(eps_local, allow_extrapolation)

    eps_c = 0.0
    delta_c = 0.0
    for p, q in per_client:
        if not (0.0 <= p <= 1.0):
            raise InvalidSpecError(f"check-in probability must be in [0,1], got {p}")
        if not (0.0 < q <= 1.0):
            raise InvalidSpecError(f"subsampling ratio must be in (0,1], got {q}")
        eps_i = math.log1p(p / (1.0 - d_prime) * math.expm1(2.0 * q * eps_local))
        delta_i = d_prime + p * q * delta_local / (1.0 - d_prime)
        eps_c = max(eps_c, eps_i)
        delta_c = max(delta_c, delta_i)
    return CentralRoundPrivacy(
        eps_central=eps_c,
        delta_central=delta_c,
        hoeffding_delta=d_prime,
        hoeffding_beta=beta,
        num_clients=n,
        extrapolated=eps_local > EPS_LOCAL_PROVEN_MAX,
    )


def central_round_privacy_uniform(
    p: float,
    q: float,
    eps_local: float,
    delta_local: float,
    beta: float,
    n: int,
    *,
    allow_extrapolation: bool = False,
) -> CentralRoundPrivacy:
    """central_round_privacy when all n clients share one (p, q)."""
    if n < 1:
        raise InvalidSpecError(f"n must be >= 1, got {n}")
    return central_round_privacy(
        [(p, q)] * n,
        eps_local,
        delta_local,
        beta,
        allow_extrapolation=allow_extrapolation,
    )


def log_moment(lam: int, q: float, eps_local: float, delta_local: float, clip: float) -> float:
    """Order-lam log moment of one round's privacy loss under subsampling ratio q.

    q**2/(1-q) * lam*(lam+1)*eps^2 / (16*C^2*ln(1.25/delta)), i.e. the
    subsampled-Gaussian moment with sensitivity pinned at 2*C.
    """
    if lam < 1:
        raise InvalidSpecError(f"lam must be a positive integer, got {lam}")
    if not (0.0 < q < 1.0):
        raise DegenerateParameterError(f"q must be in (0,1) strictly, got {q}")
    if clip <= 0:
        raise InvalidSpecError(f"clip must be > 0, got {clip}")
    if not (0 < delta_local < 1):
        raise InvalidSpecError(f"delta_local must be in (0,1), got {delta_local}")
    return (
        q * q / (1.0 - q)
        * lam * (lam + 1) * eps_local * eps_local
        / (16.0 * clip * clip * math.log(1.25 / delta_local))
    )


def total_local_epsilon_closed_form(
    q: float, p: float, rounds: int, eps_local: float, delta_local: float, clip: float
) -> float:
    """Closed-form lower bound on a client's total eps after `rounds` rounds.

    q/(2*C*sqrt(1-q)) * sqrt(p*T*ln(1/delta)/ln(1.25/delta)) * eps; the
    constant in front of the sqrt(p*T)*eps scaling is made explicit rather
    than left existential.
    """
    _check_total_args(q, p, rounds, delta_local, clip)
    return (
        q / (2.0 * clip * math.sqrt(1.0 - q))
        * math.sqrt(p * rounds * math.log(1.0 / delta_local) / math.log(1.25 / delta_local))
        * eps_local
    )


def total_local_epsilon_oracle(
    q: float,
    p: float,
    rounds: int,
    eps_local: float,
    delta_local: float,
    clip: float,
    lambda_max: int = 10**6,
) -> float:
    """Total eps from the tail bound itself, solved numerically.

    Finds the smallest eps_bar >= 0 with
        min over integer lam in [1, lambda_max] of (p*T*L(lam) - lam*eps_bar) <= ln(delta)
    by binary search to 1e-9 absolute.  The per-round moments compose
    linearly with weight p*T (expected participation count), so the
    composed moment is A*lam*(lam+1) with A = p*T*L(1)/2.
    """
    _check_total_args(q, p, rounds, delta_local, clip)
    if lambda_max < 1:
        raise InvalidSpecError(f"lambda_max must be >= 1, got {lambda_max}")
    if eps_local == 0.0:
        # Zero-loss mechanism: every moment vanishes and no budget is spent.
        return 0.0
    a = p * rounds * log_moment(1, q, eps_local, delta_local, clip) / 2.0
    log_delta = math.log(delta_local)

    def satisfied(eps_bar: float) -> bool:
        return _min_tail_objective(a, eps_bar, lambda_max) <= log_delta

    lo, hi = 0.0, 1.0
    while not satisfied(hi):
        hi *= 2.0
        if hi > _EPS_SEARCH_CEILING:
            raise SearchFailureError(
                f"no total eps below {_EPS_SEARCH_CEILING:g} satisfies the tail bound "
                f"(q={q}, p={p}, T={rounds}, eps_local={eps_local})"
            )
    while hi - lo > 1e-9:
        mid = (lo + hi) / 2.0
        if satisfied(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _min_tail_objective(a: float, eps_bar: float, lambda_max: int) -> float:
    """min over integer lam in [1, lambda_max] of a*lam*(lam+1) - lam*eps_bar.

    The objective is a convex parabola in lam, so the integer minimum sits at
    floor/ceil of the real vertex (eps_bar - a) / (2a), clamped to range.
    """
    vertex = (eps_bar - a) / (2.0 * a)
    candidates = {1, lambda_max}
    if vertex > 1.0:
        lo = min(max(int(math.floor(vertex)), 1), lambda_max)
        candidates.update((lo, min(lo + 1, lambda_max)))
    return min(a * lam * (lam + 1) - lam * eps_bar for lam in candidates)


def _min_tail_objective_scan(a: float, eps_bar: float, lambda_max: int) -> float:
    """Literal integer scan of the tail objective with convexity early exit.

    Kept as the independent cross-check for _min_tail_objective; tests assert
    the two agree.
    """
    best = math.inf
    for lam in range(1, lambda_max + 1):
        value = a * lam * (lam + 1) - lam * eps_bar
        if value > best:
            break
        best = value
    return best


def strong_composition(
    worst_eps: float, worst_delta: float, rounds: int, tilde_delta: float
) -> tuple[float, float]:
    """Total (eps, delta) of `rounds` adaptive releases at the worst per-round level.

    eps_total = sqrt(2*T*ln(1/tilde_delta))*eps + T*eps*(e^eps - 1),
    delta_total = T*delta + tilde_delta.
    """
    if worst_eps < 0:
        raise InvalidSpecError(f"worst_eps must be >= 0, got {worst_eps}")
    if rounds < 1:
        raise InvalidSpecError(f"rounds must be >= 1, got {rounds}")
    if not (0.0 < tilde_delta <= 1.0):
        raise InvalidSpecError(f"tilde_delta must be in (0,1], got {tilde_delta}")
    eps_total = (
        math.sqrt(2.0 * rounds * math.log(1.0 / tilde_delta)) * worst_eps
        + rounds * worst_eps * math.expm1(worst_eps)
    )
    return eps_total, rounds * worst_delta + tilde_delta


def _check_eps_regime(eps_local: float, allow_extrapolation: bool) -> None:
    if eps_local < 0:
        raise InvalidSpecError(f"eps_local must be >= 0, got {eps_local}")
    if eps_local > EPS_LOCAL_PROVEN_MAX and not allow_extrapolation:
        raise OutOfRegimeError(
            f"eps_local = {eps_local} > {EPS_LOCAL_PROVEN_MAX:g}: the amplification bound "
            "is only proven up to 1; pass allow_extrapolation=True to apply the formula anyway"
        )


def _check_total_args(q: float, p: float, rounds: int, delta_local: float, clip: float) -> None:
    if q <= 0.0 or q >= 1.0:
        raise DegenerateParameterError(f"q must be in (0,1) strictly, got {q}")
    if not (0.0 < p <= 1.0):
        raise InvalidSpecError(f"p must be in (0,1], got {p}")
    if rounds < 1:
        raise InvalidSpecError(f"rounds must be >= 1, got {rounds}")
    if not (0 < delta_local < 1):
        raise InvalidSpecError(f"delta_local must be in (0,1), got {delta_local}")
    if clip <= 0:
        raise InvalidSpecError(f"clip must be > 0, got {clip}")
