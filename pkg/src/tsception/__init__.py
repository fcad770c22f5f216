"""Deterministic EEG spatiotemporal classifier toolkit.

A reverse-mode autodiff tensor core, an inception-style spatiotemporal
convnet in two variants, a signal-conditioning pipeline (zero-phase
Butterworth filtering, decimation, epoching, labeling), seeded training
with stratified splits and confidence intervals, and binary interchange
formats -- all reproducible bit for bit from (seed, data, config).
"""

__version__ = "0.1.0"

from .model import ModelConfig, ModelParams, build_model, model_forward
from .tensor import Tensor, backward, no_grad
from .train import TrainConfig, confidence_interval_95, evaluate, run_kfold, train

__all__ = [
    "ModelConfig", "ModelParams", "build_model", "model_forward",
    "Tensor", "backward", "no_grad",
    "TrainConfig", "confidence_interval_95", "evaluate", "run_kfold", "train",
    "__version__",
]
