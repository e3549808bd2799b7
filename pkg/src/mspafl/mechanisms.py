"""The two release primitives applied to a public submodel before upload.

Norm clipping bounds sensitivity; Gaussian perturbation buys the privacy.
Noise is drawn from a counter-based substream keyed by (client, round), so
a sweep re-run with the same master seed reproduces every draw regardless
of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import InvalidSpecError


@dataclass(frozen=True)
class NoiseSpec:
    """Variance, vector length and stream identity for one client's upload.

    sigma_squared == 0.0 is the noiseless-baseline sentinel: perturb returns
    its input bit-identically.
    """

    sigma_squared: float
    dimension: int
    stream_id: tuple[int, int]  # (client id, round)

    def __post_init__(self):
        if self.sigma_squared < 0:
            raise InvalidSpecError(f"sigma_squared must be >= 0, got {self.sigma_squared}")
        if self.dimension < 1:
            raise InvalidSpecError(f"dimension must be >= 1, got {self.dimension}")


def clip(vector: np.ndarray, threshold: float) -> np.ndarray:
    """Rescale vector onto the radius-`threshold` ball: v / max(1, ||v||/C).

    Direction-preserving and idempotent; vectors already inside the ball pass
    through unchanged (division by exactly 1.0).
    """
    if threshold <= 0:
        raise InvalidSpecError(f"threshold must be > 0, got {threshold}")
    v = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    return v / max(1.0, norm / threshold)


def perturb(vector: np.ndarray, spec: NoiseSpec, seed: int) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise of variance spec.sigma_squared.

    Fully determined by (seed, spec.stream_id); identical arguments give
    identical output.
    """
    v = np.asarray(vector, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != spec.dimension:
        raise InvalidSpecError(
            f"vector length {v.shape} does not match noise dimension {spec.dimension}"
        )
    if spec.sigma_squared == 0.0:
        return v.copy()
    client, round_index = spec.stream_id
    gen = rng.substream(seed, rng.NOISE, client, round_index)
    noise = gen.normal(0.0, np.sqrt(spec.sigma_squared), size=spec.dimension)
    return v + noise
