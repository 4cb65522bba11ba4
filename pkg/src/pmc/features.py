"""Primitive feature encoding for the recognizer.

A primitive is encoded as its 8J coefficients plus log duration, standardized
per dimension with statistics computed on the training split.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import EmptyInput, ShapeMismatch
from .types import PrimitiveSequence, SplinePrimitive


def raw_feature_vector(prim: SplinePrimitive) -> np.ndarray:
    """Unstandardized encoding: coefficients flattened, then log(n_frames)."""
    return np.concatenate([prim.coeffs.ravel(), [np.log(prim.n_frames)]])


@dataclass(frozen=True)
class NormalizationStats:
    """Per-dimension mean/std of raw feature vectors (std 0 replaced by 1)."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        mean = np.array(self.mean, dtype=np.float64)
        std = np.array(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ShapeMismatch("mean and std must be equal-length vectors")
        std = np.where(std <= 0.0, 1.0, std)
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def compute_normalization_stats(
    primitives: Iterable[SplinePrimitive],
) -> NormalizationStats:
    vecs = [raw_feature_vector(p) for p in primitives]
    if not vecs:
        raise EmptyInput("no primitives to compute statistics from")
    arr = np.stack(vecs)
    return NormalizationStats(mean=arr.mean(axis=0), std=arr.std(axis=0))


def featurize(prim: SplinePrimitive, stats: NormalizationStats) -> np.ndarray:
    """Standardized feature vector of one primitive; dimension = 8J + 1."""
    raw = raw_feature_vector(prim)
    if raw.shape[0] != stats.dim:
        raise ShapeMismatch(
            f"primitive has feature dim {raw.shape[0]}, stats expect {stats.dim}"
        )
    return (raw - stats.mean) / stats.std


def featurize_sequence(
    prims: PrimitiveSequence, stats: NormalizationStats
) -> np.ndarray:
    """(K, 8J+1) feature matrix for a whole primitive sequence."""
    return np.stack([featurize(p, stats) for p in prims.primitives])
