"""
Video samples and their on-disk layout.

    <root>/<video_id>/frames/00000.ppm ...
    <root>/<video_id>/masks/00000.pgm ...      (optional, 0/255)
    <root>/<video_id>/detections.txt           (optional)
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from .exceptions import FileError, ValidationError, ErrorCodes
from .pruning import Detection, read_detections, write_detections
from .utils.netpbm import read_heatmap, read_mask, read_ppm, write_mask, write_ppm

logger = logging.getLogger(__name__)

FRAMES_DIR = "frames"
MASKS_DIR = "masks"
HEATMAPS_DIR = "heatmaps"
DETECTIONS_FILE = "detections.txt"


@dataclass
class VideoSample:
    """
    Ordered frames of one video with optional ground truth.

    Attributes:
        video_id: Directory name of the video.
        frames: 3 x H x W float arrays in [0, 1].
        masks: Boolean H x W ground-truth masks, one per frame, or None.
        detections: Instance detections over all frames.
    """
    video_id: str
    frames: List[np.ndarray]
    masks: Optional[List[np.ndarray]] = None
    detections: List[Detection] = field(default_factory=list)

    def __post_init__(self):
        if self.masks is not None and len(self.masks) != len(self.frames):
            raise ValidationError(
                f"video {self.video_id}: {len(self.frames)} frames but {len(self.masks)} masks",
                ErrorCodes.COUNT_MISMATCH
            )

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def frame_shape(self) -> Tuple[int, int]:
        return self.frames[0].shape[1], self.frames[0].shape[2]


def _numbered(directory: Path, suffix: str) -> List[Path]:
    files = [p for p in directory.iterdir() if p.suffix == suffix and p.stem.isdigit()]
    return sorted(files, key=lambda p: int(p.stem))


def read_masks_dir(directory: Union[str, Path]) -> List[np.ndarray]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileError(f"Mask directory not found: {directory}", ErrorCodes.FILE_NOT_FOUND,
                        details={"path": str(directory)})
    return [read_mask(p) for p in _numbered(directory, ".pgm")]


def read_heatmaps_dir(directory: Union[str, Path]) -> List[np.ndarray]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileError(f"Heatmap directory not found: {directory}", ErrorCodes.FILE_NOT_FOUND,
                        details={"path": str(directory)})
    return [read_heatmap(p) for p in _numbered(directory, ".pgm")]


def write_masks_dir(directory: Union[str, Path], masks: List[np.ndarray]) -> None:
    directory = Path(directory)
    for t, mask in enumerate(masks):
        write_mask(directory / f"{t:05d}.pgm", mask)


def load_video(directory: Union[str, Path], require_masks: bool = False) -> VideoSample:
    """
    Load one video directory.

    Raises:
        ValidationError: If frame and mask counts differ, or masks are
            required but missing.
        FileError: If a file is missing or cannot be decoded.
    """
    directory = Path(directory)
    frames_dir = directory / FRAMES_DIR
    if not frames_dir.is_dir():
        raise FileError(f"No frames directory in {directory}", ErrorCodes.FILE_NOT_FOUND,
                        details={"path": str(frames_dir)})

    frames = [read_ppm(p) for p in _numbered(frames_dir, ".ppm")]
    if not frames:
        raise ValidationError(f"video {directory.name} has no frames", ErrorCodes.INVALID_INPUT_SIZE)

    masks = None
    masks_dir = directory / MASKS_DIR
    if masks_dir.is_dir():
        masks = read_masks_dir(masks_dir)
        if len(masks) != len(frames):
            raise ValidationError(
                f"video {directory.name}: {len(frames)} frames but {len(masks)} masks",
                ErrorCodes.COUNT_MISMATCH, details={"video": directory.name}
            )
    elif require_masks:
        raise ValidationError(f"video {directory.name} has no masks directory", ErrorCodes.INVALID_INPUT_FORMAT,
                              details={"video": directory.name})

    detections_path = directory / DETECTIONS_FILE
    detections = read_detections(detections_path) if detections_path.exists() else []
    return VideoSample(directory.name, frames, masks, detections)


def load_dataset(root: Union[str, Path], require_masks: bool = False) -> List[VideoSample]:
    """Load every video under ``root`` in lexicographic order."""
    root = Path(root)
    if not root.is_dir():
        raise FileError(f"Dataset root not found: {root}", ErrorCodes.FILE_NOT_FOUND, details={"path": str(root)})
    videos = [load_video(d, require_masks) for d in sorted(root.iterdir()) if d.is_dir()]
    logger.info("Loaded %d videos from %s", len(videos), root)
    return videos


def save_video(root: Union[str, Path], video: VideoSample) -> Path:
    """Write a video under ``root/<video_id>`` and return that directory."""
    directory = Path(root) / video.video_id
    for t, frame in enumerate(video.frames):
        write_ppm(directory / FRAMES_DIR / f"{t:05d}.ppm", frame)
    if video.masks is not None:
        write_masks_dir(directory / MASKS_DIR, video.masks)
    write_detections(directory / DETECTIONS_FILE, video.detections)
    return directory
