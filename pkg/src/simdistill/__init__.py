"""Compress a frozen teacher embedding into a small student by matching
temperature-scaled similarity distributions over a bank of anchors."""

from .distill import DistillConfig, TrainRecord, distill
from .embedding import EmbeddingBatch, SimilarityDistribution, l2_normalize
from .kernels import BACKEND
from .student import StudentNetwork

__all__ = [
    "BACKEND",
    "DistillConfig",
    "EmbeddingBatch",
    "SimilarityDistribution",
    "StudentNetwork",
    "TrainRecord",
    "distill",
    "l2_normalize",
]
__version__ = "0.1.0"
