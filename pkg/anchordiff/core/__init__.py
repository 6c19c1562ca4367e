"""
Core numerics: tensors, differentiable operations, the network and its
checkpoint format.
"""

from .tensor import Tensor, Function, GradTape
from .gradcheck import grad_check
from .model import (
    AnchorDiffusionNet,
    AdNetParams,
    FrameEmbedding,
    ModelConfig,
    Mode,
    TransitionMatrix,
    Variant,
    build_model,
)
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "Tensor",
    "Function",
    "GradTape",
    "grad_check",
    "AnchorDiffusionNet",
    "AdNetParams",
    "FrameEmbedding",
    "ModelConfig",
    "Mode",
    "TransitionMatrix",
    "Variant",
    "build_model",
    "save_checkpoint",
    "load_checkpoint",
]
