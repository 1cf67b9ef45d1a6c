"""Post-hoc disentanglement of face embeddings with a split-latent VAE."""
from .errors import (ConfigError, ContractError, FormatError, NumericError, StaleTapeError,
                     TrainingAborted, VleedError)
from .model import LossBreakdown, VleedConfig, VleedModel, infer_release
from .training import TrainConfig, TrainTrace, train_vleed

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ContractError", "FormatError", "NumericError", "StaleTapeError",
    "TrainingAborted", "VleedError", "LossBreakdown", "VleedConfig", "VleedModel",
    "infer_release", "TrainConfig", "TrainTrace", "train_vleed",
]
