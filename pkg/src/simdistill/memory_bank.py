"""FIFO anchor queues and the EMA update of the key encoder."""

from __future__ import annotations

import numpy as np

from .embedding import NORM_TOL, EmbeddingBatch
from .errors import (
    DimensionMismatch,
    EmptyQueue,
    InvalidCapacity,
    LengthMismatch,
    UnnormalizedBatch,
)

FULL_SCALE_CAPACITY = 128_000
DESK_CAPACITY = 2_048
DEFAULT_MOMENTUM = 0.999


class AnchorQueue:
    """Fixed-capacity ring buffer of unit-norm anchor embeddings.

    Entries are kept oldest first from the caller's point of view; once
    ``capacity`` vectors have been pushed, each new vector evicts the oldest.
    """

    def __init__(self, capacity: int, dim: int):
        if int(capacity) < 1:
            raise InvalidCapacity(f"capacity must be >= 1, got {capacity}")
        if int(dim) < 1:
            raise InvalidCapacity(f"dim must be >= 1, got {dim}")
        self.capacity = int(capacity)
        self.dim = int(dim)
        self._buf = np.zeros((self.capacity, self.dim), dtype=np.float64)
        self._head = 0  # next write slot
        self._len = 0
        self.total_enqueued = 0

    def __len__(self) -> int:
        return self._len

    def enqueue(self, batch) -> "AnchorQueue":
        if isinstance(batch, EmbeddingBatch):
            if not batch.normalized:
                raise UnnormalizedBatch("anchors must be l2-normalized")
            rows = batch.data
        else:
            rows = np.asarray(batch, dtype=np.float64)
            if rows.ndim == 1:
                rows = rows.reshape(1, -1)
            if rows.size and np.max(np.abs(np.linalg.norm(rows, axis=1) - 1.0)) > NORM_TOL:
                raise UnnormalizedBatch("anchors must be l2-normalized")
        if rows.shape[1] != self.dim:
            raise DimensionMismatch(f"batch dim {rows.shape[1]} != queue dim {self.dim}")
        k = rows.shape[0]
        self.total_enqueued += k
        if k >= self.capacity:
            self._buf[:] = rows[k - self.capacity :]
            self._head = 0
            self._len = self.capacity
            return self
        end = self._head + k
        if end <= self.capacity:
            self._buf[self._head : end] = rows
        else:
            split = self.capacity - self._head
            self._buf[self._head :] = rows[:split]
            self._buf[: k - split] = rows[split:]
        self._head = end % self.capacity
        self._len = min(self._len + k, self.capacity)
        return self

    def as_matrix(self) -> np.ndarray:
        """Copy of the current entries, oldest first."""
        if self._len == 0:
            raise EmptyQueue("queue is empty")
        if self._len < self.capacity:
            return self._buf[: self._len].copy()
        return np.concatenate([self._buf[self._head :], self._buf[: self._head]])


def new_queue(capacity: int, dim: int) -> AnchorQueue:
    return AnchorQueue(capacity, dim)


def enqueue_batch(queue: AnchorQueue, batch) -> AnchorQueue:
    return queue.enqueue(batch)


def as_matrix(queue: AnchorQueue) -> np.ndarray:
    return queue.as_matrix()


def ema_update(key_params, student_params, m: float = DEFAULT_MOMENTUM) -> np.ndarray:
    """Return ``m * key + (1 - m) * student`` elementwise."""
    key = np.asarray(key_params, dtype=np.float64)
    student = np.asarray(student_params, dtype=np.float64)
    if key.shape != student.shape:
        raise LengthMismatch(f"parameter shapes differ: {key.shape} vs {student.shape}")
    if not 0.0 <= m <= 1.0:
        raise ValueError(f"momentum must be in [0, 1], got {m}")
    return m * key + (1.0 - m) * student
