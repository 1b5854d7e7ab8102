"""State-of-health estimation from discharge voltage curves."""

from .features import (CHANNEL_NAMES, DegenerateChannelError, FeatureTensor,
                       NormStats, build_features, feature_dataset,
                       fit_stats)
from .model import (CHECKPOINT_MAGIC, CheckpointError, GruShape, ShapeError,
                    SohEstimator, estimator_forward, init_params, zero_params)
from .train import (SPLIT_RULES, SplitError, TrainConfig, TrainingError,
                    evaluate_soh, split_dataset, train_soh)

__all__ = [
    "CHANNEL_NAMES", "CHECKPOINT_MAGIC", "CheckpointError", "DegenerateChannelError",
    "FeatureTensor", "GruShape", "NormStats", "SPLIT_RULES", "ShapeError",
    "SohEstimator", "SplitError", "TrainConfig", "TrainingError", "build_features",
    "estimator_forward", "evaluate_soh", "feature_dataset", "fit_stats", "init_params",
    "split_dataset", "train_soh", "zero_params",
]
