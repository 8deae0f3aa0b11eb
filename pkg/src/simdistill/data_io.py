"""Synthetic data, student-side augmentation and the binary file formats.

File layouts (all little-endian):

* ``EMB1``: magic, u32 count, u32 dim, u8 normalized flag, then
  ``count * dim`` binary32 values, row-major.
* ``LBL1``: magic, u32 count, then ``count`` u32 labels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding import EmbeddingBatch, l2_normalize
from .errors import BadMagic, InvalidSpec, SizeMismatch, TruncatedFile

EMB_MAGIC = b"EMB1"
LBL_MAGIC = b"LBL1"
EMB_HEADER = struct.Struct("<4sIIB")
LBL_HEADER = struct.Struct("<4sI")


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 10
    train_count: int = 5000
    val_count: int = 1000
    latent_dim: int = 16
    raw_dim: int = 32
    teacher_dim: int = 32
    class_spread: float = 1.0
    sample_noise: float = 0.15
    teacher_noise: float = 0.05
    seed: int = 0

    def validate(self) -> None:
        for name in ("num_classes", "train_count", "val_count", "latent_dim", "raw_dim", "teacher_dim"):
            if int(getattr(self, name)) < 1:
                raise InvalidSpec(f"{name} must be positive")
        if self.train_count < self.num_classes or self.val_count < self.num_classes:
            raise InvalidSpec("train_count and val_count must be >= num_classes")
        for name in ("class_spread", "sample_noise", "teacher_noise"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise InvalidSpec(f"{name} must be finite and non-negative")


@dataclass(frozen=True)
class Dataset:
    raw: np.ndarray
    labels: np.ndarray
    teacher_cache: EmbeddingBatch

    def __post_init__(self):
        n = self.raw.shape[0]
        if self.labels.shape != (n,) or len(self.teacher_cache) != n:
            raise SizeMismatch("raw, labels and teacher cache must be row-aligned")
        if not self.teacher_cache.normalized:
            raise ValueError("teacher cache must be normalized")

    def __len__(self) -> int:
        return self.raw.shape[0]


def generate(spec: SyntheticSpec = SyntheticSpec()) -> tuple[Dataset, Dataset]:
    """Draw a labelled train/val pair from a latent class-mixture model.

    Latents are class prototypes plus Gaussian noise. The student sees
    ``tanh(A @ latent)``; the teacher embedding is the normalized
    ``B @ latent`` plus its own noise. Both maps are fixed per seed.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    C, L = spec.num_classes, spec.latent_dim
    prototypes = rng.normal(0.0, spec.class_spread, size=(C, L))
    # unit-variance rows of A @ latent for unit-variance latents
    A = rng.normal(0.0, 1.0 / np.sqrt(L), size=(spec.raw_dim, L))
    B = rng.normal(0.0, 1.0 / np.sqrt(L), size=(spec.teacher_dim, L))

    def draw(count):
        labels = rng.permutation(np.arange(count) % C)
        latent = prototypes[labels] + rng.normal(0.0, spec.sample_noise, size=(count, L))
        raw = np.tanh(latent @ A.T)
        teacher = latent @ B.T + rng.normal(0.0, spec.teacher_noise, size=(count, spec.teacher_dim))
        return Dataset(raw, labels.astype(np.int64), l2_normalize(teacher))

    train = draw(spec.train_count)
    val = draw(spec.val_count)
    return train, val


def augment(raw_batch, sigma_aug, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. Gaussian noise; ``sigma_aug`` may be a scalar or per-column."""
    x = np.asarray(raw_batch, dtype=np.float64)
    sigma = np.asarray(sigma_aug, dtype=np.float64)
    if np.any(sigma < 0):
        raise ValueError("sigma_aug must be non-negative")
    if not np.any(sigma > 0):
        return x.copy()
    return x + rng.standard_normal(x.shape) * sigma


def write_embeddings(path, batch) -> None:
    if isinstance(batch, EmbeddingBatch):
        data, flag = batch.data, batch.normalized
    else:
        data, flag = np.asarray(batch, dtype=np.float64), False
        if data.ndim != 2:
            raise ValueError("expected a 2-d matrix")
    count, dim = data.shape
    header = EMB_HEADER.pack(EMB_MAGIC, count, dim, int(bool(flag)))
    Path(path).write_bytes(header + np.ascontiguousarray(data, dtype="<f4").tobytes())


def read_embeddings(path) -> EmbeddingBatch:
    raw = Path(path).read_bytes()
    if raw[:4] != EMB_MAGIC:
        raise BadMagic(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < EMB_HEADER.size:
        raise TruncatedFile(f"{path}: header truncated")
    _, count, dim, flag = EMB_HEADER.unpack_from(raw)
    if flag > 1:
        raise SizeMismatch(f"{path}: bad normalized flag {flag}")
    need = 4 * count * dim
    payload = raw[EMB_HEADER.size :]
    if len(payload) < need:
        raise TruncatedFile(f"{path}: expected {need} payload bytes, found {len(payload)}")
    if len(payload) > need:
        raise SizeMismatch(f"{path}: {len(payload) - need} trailing bytes")
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(count, dim)
    return EmbeddingBatch(data, normalized=bool(flag))


def write_labels(path, labels) -> None:
    lab = np.asarray(labels)
    if lab.ndim != 1 or (lab.size and (lab.min() < 0 or lab.max() > 0xFFFFFFFF)):
        raise ValueError("labels must be a 1-d vector of u32 values")
    Path(path).write_bytes(LBL_HEADER.pack(LBL_MAGIC, lab.size) + lab.astype("<u4").tobytes())


def read_labels(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != LBL_MAGIC:
        raise BadMagic(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < LBL_HEADER.size:
        raise TruncatedFile(f"{path}: header truncated")
    _, count = LBL_HEADER.unpack_from(raw)
    payload = raw[LBL_HEADER.size :]
    if len(payload) < 4 * count:
        raise TruncatedFile(f"{path}: expected {4 * count} payload bytes, found {len(payload)}")
    if len(payload) > 4 * count:
        raise SizeMismatch(f"{path}: trailing bytes")
    return np.frombuffer(payload, dtype="<u4").astype(np.int64)
