"""Real-centered dual-branch (frequency + spatial) image forgery detector,
desk scale: a fully testable library plus CLI harness."""

__version__ = "0.1.0"

from .estimator import RcdnDetector, SpectralTransformer
from .model import ModelConfig, RcdnModel, model_init, load_checkpoint, save_checkpoint
from .train_eval import (TrainConfig, cross_matrix, evaluate, report, summarize,
                         train)

__all__ = [
    "RcdnDetector",
    "SpectralTransformer",
    "ModelConfig",
    "RcdnModel",
    "model_init",
    "load_checkpoint",
    "save_checkpoint",
    "TrainConfig",
    "train",
    "evaluate",
    "cross_matrix",
    "summarize",
    "report",
    "__version__",
]
