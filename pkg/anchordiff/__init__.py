"""
anchordiff - Anchor-diffusion video object segmentation

A numpy implementation of a video object segmenter that diffuses the pixel
embeddings of a video's first frame to every later frame, together with the
training loop, multi-scale inference, instance pruning, evaluation metrics
and a synthetic moving-shapes benchmark used to exercise all of it.

Version: 1.0.0
License: MIT
"""

__version__ = "1.0.0"
__license__ = "MIT"

# Core imports
from .core import (
    AnchorDiffusionNet,
    AdNetParams,
    ModelConfig,
    Mode,
    Tensor,
    Variant,
    build_model,
    grad_check,
    load_checkpoint,
    save_checkpoint,
)

# Pipeline stages
from .trainer import TrainConfig, Trainer, poly_lr
from .inference import InferenceConfig, VideoSegmenter, segment_video
from .pruning import Detection, InstancePruner, apply_pruning
from .metrics import EvalReport, contour_accuracy, embedding_drift, pr_curve, region_similarity
from .synthdata import BenchmarkConfig, gen_benchmark, pruning_scene
from .dataset import VideoSample, load_dataset

# Exceptions
from .exceptions import (
    AnchorDiffError,
    ShapeError,
    ValidationError,
    ConfigurationError,
    FileError,
    TrainingError,
    EvaluationError,
    ErrorCodes,
)

__all__ = [
    # Version info
    "__version__",
    "__license__",

    # Core classes
    "Tensor",
    "AnchorDiffusionNet",
    "AdNetParams",
    "ModelConfig",
    "Mode",
    "Variant",
    "build_model",
    "grad_check",
    "save_checkpoint",
    "load_checkpoint",

    # Pipeline
    "TrainConfig",
    "Trainer",
    "poly_lr",
    "InferenceConfig",
    "VideoSegmenter",
    "segment_video",
    "Detection",
    "InstancePruner",
    "apply_pruning",
    "EvalReport",
    "region_similarity",
    "contour_accuracy",
    "pr_curve",
    "embedding_drift",
    "BenchmarkConfig",
    "gen_benchmark",
    "pruning_scene",
    "VideoSample",
    "load_dataset",

    # Exceptions
    "AnchorDiffError",
    "ShapeError",
    "ValidationError",
    "ConfigurationError",
    "FileError",
    "TrainingError",
    "EvaluationError",
    "ErrorCodes",
]

# Package metadata
PACKAGE_INFO = {
    "name": "anchordiff",
    "version": __version__,
    "description": "Anchor-diffusion video object segmentation in numpy",
    "license": __license__,
    "keywords": [
        "video", "segmentation", "autodiff", "attention", "tracking", "numpy"
    ],
    "variants": [v.value for v in Variant],
}


def get_version_info() -> dict:
    """Get version, variant list and the versions of the numeric stack."""
    import numpy
    import scipy

    info = PACKAGE_INFO.copy()
    info["numpy"] = numpy.__version__
    info["scipy"] = scipy.__version__
    return info
