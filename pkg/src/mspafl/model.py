"""Regularized logistic regression on a flat parameter vector, plus the
private/public split geometry.

The parameter vector of length d is read as a feature_dim x label_dim matrix
W; a sample (x, y) contributes ln(1 + exp(-<W, x y^T>)) to the loss, which
for scalar labels in {-1,+1} is ordinary binary logistic loss.  The
regularizer is the unsquared norm gamma*||W|| by default (subgradient 0 at
the origin); the conventional squared form is available behind a switch but
makes no fidelity claim.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpecError


@dataclass(frozen=True)
class LossSpec:
    regularization: float = 0.0
    feature_dim: int = 1
    label_dim: int = 1
    squared_regularizer: bool = False

    def __post_init__(self):
        if self.regularization < 0:
            raise InvalidSpecError(f"regularization must be >= 0, got {self.regularization}")
        if self.feature_dim < 1 or self.label_dim < 1:
            raise InvalidSpecError("feature_dim and label_dim must be >= 1")

    @property
    def dimension(self) -> int:
        return self.feature_dim * self.label_dim


@dataclass(frozen=True)
class SplitModel:
    """A parameter vector partitioned into a leading private block and a
    trailing public block.  Either block may be empty only in the dedicated
    public-only mode; `split` itself refuses to produce empty blocks."""

    private_block: np.ndarray
    public_block: np.ndarray

    @property
    def dimension(self) -> int:
        return self.private_block.shape[0] + self.public_block.shape[0]


def split(flat: np.ndarray, fraction: float) -> SplitModel:
    """Partition a flat vector at index round(fraction*d), private block first.

    The boundary uses round-half-to-even so every implementation of this
    layout agrees on odd lengths.
    """
    v = np.asarray(flat, dtype=np.float64)
    if v.ndim != 1:
        raise InvalidSpecError(f"expected a flat vector, got shape {v.shape}")
    if not (0.0 < fraction < 1.0):
        raise InvalidSpecError(f"fraction must be in (0,1), got {fraction}")
    d = v.shape[0]
    boundary = round(fraction * d)
    if boundary < 1 or boundary > d - 1:
        raise InvalidSpecError(
            f"fraction {fraction} leaves an empty block for dimension {d} "
            f"(boundary index {boundary})"
        )
    return SplitModel(private_block=v[:boundary].copy(), public_block=v[boundary:].copy())


def recombine(private_block: np.ndarray, public_block: np.ndarray) -> np.ndarray:
    """Inverse of split: concatenate private then public."""
    return np.concatenate(
        [np.asarray(private_block, dtype=np.float64), np.asarray(public_block, dtype=np.float64)]
    )


def _margins(flat: np.ndarray, features: np.ndarray, labels: np.ndarray, spec: LossSpec) -> np.ndarray:
    """Per-sample margins <W, x y^T> = x^T W y for W = flat reshaped (m, n)."""
    w = flat.reshape(spec.feature_dim, spec.label_dim)
    y = labels.reshape(labels.shape[0], spec.label_dim)
    return np.einsum("bm,mn,bn->b", features, w, y)


def _check_batch(flat: np.ndarray, features: np.ndarray, labels: np.ndarray, spec: LossSpec) -> None:
    if features.ndim != 2 or features.shape[0] == 0:
        raise InvalidSpecError("batch must be a nonempty 2-d feature array")
    if features.shape[1] != spec.feature_dim:
        raise InvalidSpecError(
            f"feature dimension {features.shape[1]} != spec.feature_dim {spec.feature_dim}"
        )
    if labels.shape[0] != features.shape[0]:
        raise InvalidSpecError("features and labels disagree on batch size")
    if flat.shape[0] != spec.dimension:
        raise InvalidSpecError(
            f"parameter vector length {flat.shape[0]} != feature_dim*label_dim {spec.dimension}"
        )


def loss(model: SplitModel, batch: tuple[np.ndarray, np.ndarray], spec: LossSpec) -> float:
    """Mean ln(1+exp(-margin)) over the batch plus the norm regularizer."""
    flat = recombine(model.private_block, model.public_block)
    return loss_flat(flat, batch, spec)


def loss_flat(flat: np.ndarray, batch: tuple[np.ndarray, np.ndarray], spec: LossSpec) -> float:
    flat = np.asarray(flat, dtype=np.float64)
    features, labels = (np.asarray(a, dtype=np.float64) for a in batch)
    _check_batch(flat, features, labels, spec)
    z = _margins(flat, features, labels, spec)
    # ln(1+e^-z) = logaddexp(0, -z), overflow-safe for any margin
    data_term = float(np.mean(np.logaddexp(0.0, -z)))
    if spec.regularization == 0.0:
        return data_term
    norm = float(np.linalg.norm(flat))
    reg = norm * norm if spec.squared_regularizer else norm
    return data_term + spec.regularization * reg


def gradient(model: SplitModel, batch: tuple[np.ndarray, np.ndarray], spec: LossSpec) -> np.ndarray:
    """Exact gradient of `loss` with respect to all d parameters."""
    flat = recombine(model.private_block, model.public_block)
    return gradient_flat(flat, batch, spec)


def gradient_flat(flat: np.ndarray, batch: tuple[np.ndarray, np.ndarray], spec: LossSpec) -> np.ndarray:
    flat = np.asarray(flat, dtype=np.float64)
    features, labels = (np.asarray(a, dtype=np.float64) for a in batch)
    _check_batch(flat, features, labels, spec)
    z = _margins(flat, features, labels, spec)
    # d/dz ln(1+e^-z) = -sigmoid(-z), written so no exp argument is positive
    coef = -np.exp(-np.clip(z, 0.0, None)) / (1.0 + np.exp(-np.abs(z)))
    y = labels.reshape(labels.shape[0], spec.label_dim)
    grad_w = features.T @ (coef[:, None] * y) / features.shape[0]
    grad = grad_w.reshape(spec.dimension)
    if spec.regularization > 0.0:
        if spec.squared_regularizer:
            grad = grad + 2.0 * spec.regularization * flat
        else:
            norm = float(np.linalg.norm(flat))
            if norm > 0.0:
                grad = grad + spec.regularization * flat / norm
            # subgradient 0 at the origin
    return grad


def local_update(
    model: SplitModel,
    batches: list[tuple[np.ndarray, np.ndarray]],
    learning_rate: float,
    spec: LossSpec,
) -> SplitModel:
    """Sequential full-vector SGD: w <- w - eta * grad(w; batch) per batch."""
    if not batches:
        raise InvalidSpecError("batches must be nonempty")
    if learning_rate < 0:
        raise InvalidSpecError(f"learning_rate must be >= 0, got {learning_rate}")
    flat = recombine(model.private_block, model.public_block)
    for batch in batches:
        flat = flat - learning_rate * gradient_flat(flat, batch, spec)
    boundary = model.private_block.shape[0]
    return SplitModel(private_block=flat[:boundary], public_block=flat[boundary:])


def predict_margins(flat: np.ndarray, features: np.ndarray, spec: LossSpec) -> np.ndarray:
    """Decision scores x^T w for the binary task; sign gives the class."""
    if spec.label_dim != 1:
        raise InvalidSpecError("predictions are only defined for scalar labels")
    w = np.asarray(flat, dtype=np.float64).reshape(spec.feature_dim)
    return np.asarray(features, dtype=np.float64) @ w
