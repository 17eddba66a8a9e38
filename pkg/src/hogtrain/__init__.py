"""Heterogeneous asynchronous SGD training engine for dense feed-forward nets."""

from .data import BatchRef, Dataset, LabelMapping, load_libsvm, subsample, synthetic_blobs
from .engine import RunMetrics, evaluate_loss, run_training
from .nn import Architecture, InitScheme, Model, init_model
from .policies import AdaptiveHogbatch, FixedHeterogeneous, UniformHogbatch
from .workers import WorkerConfig, WorkerMode

__all__ = [
    "AdaptiveHogbatch",
    "Architecture",
    "BatchRef",
    "Dataset",
    "FixedHeterogeneous",
    "InitScheme",
    "LabelMapping",
    "Model",
    "RunMetrics",
    "UniformHogbatch",
    "WorkerConfig",
    "WorkerMode",
    "evaluate_loss",
    "init_model",
    "load_libsvm",
    "run_training",
    "subsample",
    "synthetic_blobs",
]

__version__ = "0.1.0"
