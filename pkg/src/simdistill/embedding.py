"""Numerical primitives shared by training and evaluation.

All arithmetic is done in float64. Functions never modify their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    LengthMismatch,
    NonPositiveTemperature,
    ZeroNormRow,
)

DEFAULT_TAU = 0.04
NORM_TOL = 1e-6
ZERO_NORM = 1e-12


@dataclass(frozen=True)
class EmbeddingBatch:
    """Rows are samples, columns are embedding dimensions.

    ``data`` is stored as a read-only float64 array. When ``normalized`` is
    set, every row must have unit Euclidean norm (to ``NORM_TOL``).
    """

    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise DimensionMismatch(f"expected a 2-d matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding batch contains non-finite values")
        if self.normalized and arr.shape[0]:
            norms = np.linalg.norm(arr, axis=1)
            if np.max(np.abs(norms - 1.0)) > NORM_TOL:
                raise ValueError("batch flagged normalized but has non-unit rows")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class SimilarityDistribution:
    """Probability vector over the current anchors for one query."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64, copy=True).ravel()
        if p.size == 0:
            raise ValueError("empty distribution")
        if np.any(p < 0.0) or np.any(p > 1.0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("not a probability vector")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return self.probs.size


def _as_matrix(batch) -> np.ndarray:
    if isinstance(batch, EmbeddingBatch):
        return batch.data
    arr = np.asarray(batch, dtype=np.float64)
    return arr.reshape(1, -1) if arr.ndim == 1 else arr


def _as_probs(p) -> np.ndarray:
    if isinstance(p, SimilarityDistribution):
        return p.probs
    return np.asarray(p, dtype=np.float64).ravel()


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """Array-level ℓ2 normalization used on hot paths."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if x.size and np.min(norms) < ZERO_NORM:
        raise ZeroNormRow("row with (near) zero norm cannot be normalized")
    return x / norms


def l2_normalize(batch) -> EmbeddingBatch:
    """Divide each row by its Euclidean norm.

    Raises
    ------
    ZeroNormRow
        If any row has norm below 1e-12.
    """
    return EmbeddingBatch(normalize_rows(_as_matrix(batch)), normalized=True)


def cosine_scores(query, anchors) -> np.ndarray:
    """Dot products of a unit query against each unit anchor row."""
    q = np.asarray(query, dtype=np.float64).ravel()
    a = _as_matrix(anchors)
    if a.shape[1] != q.size:
        raise DimensionMismatch(f"query dim {q.size} != anchor dim {a.shape[1]}")
    # unit inputs can drift just past ±1 in floating point
    return np.clip(a @ q, -1.0, 1.0)


def softmax_temperature(scores, tau: float = DEFAULT_TAU) -> SimilarityDistribution:
    if not tau > 0:
        raise NonPositiveTemperature(f"temperature must be positive, got {tau}")
    s = np.asarray(scores, dtype=np.float64).ravel()
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    z = (s - s.max()) / tau
    e = np.exp(z)
    return SimilarityDistribution(e / e.sum())


def kl_divergence(p, q) -> float:
    """KL(p || q) with the 0·log(0/q) = 0 convention."""
    p = _as_probs(p)
    q = _as_probs(q)
    if p.size != q.size:
        raise LengthMismatch(f"lengths differ: {p.size} vs {q.size}")
    mask = p > 0
    if np.any(q[mask] <= 0):
        # support violation, e.g. a softmax that underflowed to 0
        return float("inf")
    total = float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))
    # inputs a rounding error away from summing to 1 can give -1e-16
    return max(total, 0.0)
