"""Dataset ingestion, client partitioning, and the two mini-batch regimes.

Input files are plain numeric CSV: a header row, comma-separated float
feature columns, and a final `label` column holding 0 or 1.  Labels are
remapped to {-1,+1} at load time so a sample's contribution to the loss
carries the label sign.  Categorical encoding of raw sources happens out of
band (see scripts/prepare_adult.py).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .accountant import SubsampleMode
from .errors import DataFormatError, InvalidSpecError


@dataclass(frozen=True)
class Schema:
    """Loader options; standardize rescales every feature to mean 0, variance 1."""

    standardize: bool = False


@dataclass(frozen=True)
class ClientDataset:
    client_id: int
    features: np.ndarray  # (size, feature_dim)
    labels: np.ndarray  # (size,) values in {-1, +1}

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise InvalidSpecError("client dataset must hold at least one sample")
        if self.labels.shape != (self.features.shape[0],):
            raise InvalidSpecError("features and labels disagree on sample count")

    @property
    def size(self) -> int:
        return self.features.shape[0]

    def batch(self, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.features[indices], self.labels[indices]


@dataclass(frozen=True)
class BatchPlan:
    """Index lists for one round: local_steps batches of batch_size each."""

    mode: SubsampleMode
    batches: list[np.ndarray]


def load_csv(path: str | Path, schema: Schema = Schema()) -> tuple[np.ndarray, np.ndarray]:
    """Parse a numeric CSV into (features, labels in {-1,+1})."""
    path = Path(path)
    rows: list[list[float]] = []
    labels: list[float] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        width = len(header)
        if width < 2:
            raise DataFormatError(f"{path}: need at least one feature column plus a label")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataFormatError(
                    f"{path}:{line_no}: expected {width} fields, got {len(row)}"
                )
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{line_no}: non-numeric field ({exc})") from None
            label = values[-1]
            if label not in (0.0, 1.0):
                raise DataFormatError(
                    f"{path}:{line_no}: label must be 0 or 1, got {label!r}"
                )
            rows.append(values[:-1])
            labels.append(label)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    features = np.asarray(rows, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64) * 2.0 - 1.0
    if schema.standardize:
        features = standardize(features)
    return features, y


def standardize(features: np.ndarray) -> np.ndarray:
    """Per-feature shift to mean 0 and scale to variance 1 (constant columns stay 0)."""
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return (features - mean) / std


def partition(
    features: np.ndarray, labels: np.ndarray, num_clients: int, seed: int
) -> list[ClientDataset]:
    """Seeded shuffle + near-equal contiguous split into disjoint client datasets.

    Sizes differ by at most one; the first (n mod N) clients get the extra
    sample.
    """
    n = features.shape[0]
    if num_clients < 1:
        raise InvalidSpecError(f"num_clients must be >= 1, got {num_clients}")
    if num_clients > n:
        raise InvalidSpecError(f"more clients ({num_clients}) than samples ({n})")
    order = rng.substream(seed, rng.PARTITION).permutation(n)
    chunks = np.array_split(order, num_clients)
    return [
        ClientDataset(client_id=i, features=features[idx], labels=labels[idx])
        for i, idx in enumerate(chunks)
    ]


def holdout_split(
    features: np.ndarray, labels: np.ndarray, holdout_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Seeded split into (train_x, train_y, test_x, test_y)."""
    if not (0.0 < holdout_fraction < 1.0):
        raise InvalidSpecError(f"holdout_fraction must be in (0,1), got {holdout_fraction}")
    n = features.shape[0]
    n_test = max(1, int(round(holdout_fraction * n)))
    if n_test >= n:
        raise InvalidSpecError("holdout fraction leaves no training data")
    order = rng.substream(seed, rng.HOLDOUT).permutation(n)
    test_idx, train_idx = order[:n_test], order[n_test:]
    return features[train_idx], labels[train_idx], features[test_idx], labels[test_idx]


def make_batch_plan(
    dataset: ClientDataset,
    local_steps: int,
    batch_size: int,
    mode: SubsampleMode,
    seed: int,
    round_index: int = 0,
) -> BatchPlan:
    """Draw the round's batch indices from the (seed, client, round) substream.

    WOR draws one subset of local_steps*batch_size distinct indices and deals
    it into batches, so the data a round touches is exactly one
    without-replacement sample; WR uses independent uniform draws throughout.
    """
    total = local_steps * batch_size
    if local_steps < 1 or batch_size < 1:
        raise InvalidSpecError("local_steps and batch_size must be >= 1")
    gen = rng.substream(seed, rng.BATCH, dataset.client_id, round_index)
    if mode is SubsampleMode.WOR:
        if total > dataset.size:
            raise InvalidSpecError(
                f"WOR infeasible for client {dataset.client_id}: "
                f"{local_steps}*{batch_size} > {dataset.size}"
            )
        drawn = gen.choice(dataset.size, size=total, replace=False)
    else:
        drawn = gen.integers(0, dataset.size, size=total)
    batches = [drawn[k * batch_size : (k + 1) * batch_size] for k in range(local_steps)]
    return BatchPlan(mode=mode, batches=batches)
