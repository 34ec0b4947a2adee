"""Unsupervised anomaly detection on pre-extracted video feature streams.

An autoencoder (generator) and a fully connected classifier (discriminator)
are trained cooperatively: each network's thresholded outputs provide the
pseudo-labels that supervise the other, so no annotations are required.
Frame-level anomaly scores come from the discriminator.
"""

from ._kernels import BACKEND
from .data import (
    Batch,
    CleanerConfig,
    DatasetManifest,
    FeatureRecord,
    VideoEntry,
    load_dataset,
    shuffle_batches,
    temporal_difference_filter,
)
from .engine import GclConfig, Trainer, score_segments, train
from .metrics import AucReport, ScoreSeries, compute_auc, evaluate_scores
from .synth import SynthConfig, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "AucReport",
    "BACKEND",
    "Batch",
    "CleanerConfig",
    "DatasetManifest",
    "FeatureRecord",
    "GclConfig",
    "ScoreSeries",
    "SynthConfig",
    "Trainer",
    "VideoEntry",
    "__version__",
    "compute_auc",
    "evaluate_scores",
    "generate_synthetic",
    "load_dataset",
    "score_segments",
    "shuffle_batches",
    "temporal_difference_filter",
    "train",
]
