"""
Video inference with test-time augmentation.

Every frame is segmented against the first frame of its video. Each frame
pair is evaluated at several scales, optionally mirrored, and the heatmaps
(resized back to the original resolution) are averaged. Anchor embeddings
are computed once per scale and mirror setting.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .algorithms import SegmentationModel
from .core.model import Mode
from .dataset import HEATMAPS_DIR, MASKS_DIR, VideoSample
from .exceptions import ConfigurationError, ValidationError, ErrorCodes
from .utils.imaging import mirror, resize_image
from .utils.netpbm import write_heatmap, write_mask

logger = logging.getLogger(__name__)


@dataclass
class InferenceConfig:
    """Test-time augmentation and binarisation settings."""
    scales: Tuple[float, ...] = (0.75, 1.0, 1.5)
    mirror: bool = True
    threshold: float = 0.5

    def __post_init__(self):
        if isinstance(self.scales, (int, float)):
            self.scales = (self.scales,)
        self.scales = tuple(float(s) for s in self.scales)
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ConfigurationError(f"scales must be non-empty and positive, got {self.scales}",
                                     ErrorCodes.INVALID_CONFIGURATION)
        if not 0.0 < self.threshold < 1.0:
            raise ConfigurationError(f"threshold must lie in (0, 1), got {self.threshold}",
                                     ErrorCodes.INVALID_CONFIGURATION)

    @property
    def variants(self) -> List[Tuple[float, bool]]:
        flips = (False, True) if self.mirror else (False,)
        return [(s, f) for s in self.scales for f in flips]

    def get_info(self) -> Dict[str, Any]:
        return {"scales": list(self.scales), "mirror": self.mirror, "threshold": self.threshold}


@dataclass
class SegmentationResult:
    video_id: str
    heatmaps: List[np.ndarray]
    masks: List[np.ndarray]


def binarize(heatmap: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Foreground where the heatmap is at least ``threshold``."""
    return np.asarray(heatmap) >= threshold


def scaled_size(size: int, scale: float, stride: int) -> int:
    """``size * scale`` rounded to the nearest multiple of ``stride``."""
    scaled = int(round(size * scale / stride)) * stride
    if scaled < stride:
        raise ConfigurationError(
            f"scale {scale} shrinks size {size} below the encoder stride {stride}",
            ErrorCodes.INCOMPATIBLE_OPTIONS
        )
    return scaled


class VideoSegmenter:
    """
    Segments videos with a fixed model and augmentation settings.

    Attributes:
        anchor_encode_calls (int): Number of times the anchor frame was encoded.
    """

    def __init__(self, model: SegmentationModel, config: Optional[InferenceConfig] = None, use_cache: bool = True):
        self.model = model
        self.config = config or InferenceConfig()
        self.use_cache = use_cache
        self.anchor_encode_calls = 0
        self._cache: Dict[Tuple[float, bool], Tuple[np.ndarray, Any]] = {}

    def reset_cache(self) -> None:
        self._cache = {}

    def _prepare(self, frame: np.ndarray, scale: float, flipped: bool) -> np.ndarray:
        _, height, width = frame.shape
        stride = self.model.stride
        out = resize_image(frame, scaled_size(height, scale, stride), scaled_size(width, scale, stride))
        return mirror(out) if flipped else out

    def _prepared_anchor(self, anchor: np.ndarray, scale: float, flipped: bool) -> Tuple[np.ndarray, Any]:
        """Resized anchor frame and its embedding for one scale/flip, cached per video."""
        key = (scale, flipped)
        if self.use_cache and key in self._cache:
            return self._cache[key]
        prepared = self._prepare(anchor, scale, flipped)
        entry = (prepared, self.model.encode(prepared))
        self.anchor_encode_calls += 1
        if self.use_cache:
            self._cache[key] = entry
        return entry

    def tta_aggregate(self, anchor: np.ndarray, frame: np.ndarray) -> np.ndarray:
        """Mean heatmap over all scale/mirror variants, at the frame's resolution."""
        _, height, width = frame.shape
        total = np.zeros((height, width))
        variants = self.config.variants
        for scale, flipped in variants:
            prepared_anchor, anchor_emb = self._prepared_anchor(anchor, scale, flipped)
            current = self._prepare(frame, scale, flipped)
            out = self.model.forward(prepared_anchor, current, mode=Mode.EVAL, anchor_embedding=anchor_emb)
            heatmap = out.data if hasattr(out, "data") else np.asarray(out)
            if flipped:
                heatmap = mirror(heatmap)
            total = total + resize_image(heatmap, height, width)
        return total / len(variants)

    def segment_video(self, video: VideoSample) -> SegmentationResult:
        """
        Heatmap and binary mask for every frame, anchored on frame 0.

        Raises:
            ValidationError: If the video is empty or its frames differ in size.
        """
        if len(video) == 0:
            raise ValidationError(f"video {video.video_id} has no frames", ErrorCodes.INVALID_INPUT_SIZE)
        shape = video.frames[0].shape
        for t, frame in enumerate(video.frames):
            if frame.shape != shape:
                raise ValidationError(
                    f"video {video.video_id}: frame {t} has shape {frame.shape}, frame 0 has {shape}",
                    ErrorCodes.INVALID_INPUT_SIZE
                )

        self.reset_cache()
        anchor = video.frames[0]
        heatmaps, masks = [], []
        for frame in video.frames:
            heatmap = self.tta_aggregate(anchor, frame)
            heatmaps.append(heatmap)
            masks.append(binarize(heatmap, self.config.threshold))
        logger.info("Segmented %s: %d frames, %d anchor encodings",
                    video.video_id, len(video), self.anchor_encode_calls)
        return SegmentationResult(video.video_id, heatmaps, masks)


def segment_video(model: SegmentationModel, video: VideoSample,
                  config: Optional[InferenceConfig] = None) -> SegmentationResult:
    return VideoSegmenter(model, config).segment_video(video)


def write_predictions(out_dir: Union[str, Path], result: SegmentationResult) -> None:
    """Write ``heatmaps/%05d.pgm`` (16-bit) and ``masks/%05d.pgm`` (8-bit) under ``out_dir``."""
    out_dir = Path(out_dir)
    for t, (heatmap, mask) in enumerate(zip(result.heatmaps, result.masks)):
        write_heatmap(out_dir / HEATMAPS_DIR / f"{t:05d}.pgm", heatmap)
        write_mask(out_dir / MASKS_DIR / f"{t:05d}.pgm", mask)
