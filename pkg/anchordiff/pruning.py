"""
Instance pruning of predicted masks.

Detected instances that are small and nearly static across the video are
removed from a frame's prediction when that frame is dominated by one much
larger instance. Trajectories are linked greedily by bounding-box IoU between
consecutive frames.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import AnchorDiffError, FileError, ShapeError, ValidationError, ErrorCodes
from .utils.netpbm import read_mask, write_mask

logger = logging.getLogger(__name__)

Box = Tuple[int, int, int, int]

DEFAULT_LINK_IOU = 0.5
DEFAULT_STATIC_IOU = 0.6
DEFAULT_SUPPORT_RATIO = 0.5


def mask_box(mask: np.ndarray) -> Box:
    """Tight (x0, y0, x1, y1) box of a non-empty mask, exclusive upper corner."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise ValidationError("cannot box an empty mask", ErrorCodes.INVALID_INPUT_SIZE)
    return int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1


def box_iou(a: Box, b: Box) -> float:
    """Intersection over union of two (x0, y0, x1, y1) boxes."""
    inter_w = max(0, min(a[2], b[2]) - max(a[0], b[0]))
    inter_h = max(0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = inter_w * inter_h
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def pairwise_iou(boxes: np.ndarray) -> np.ndarray:
    """IoU matrix of an M x 4 integer box array."""
    x0 = np.maximum(boxes[:, None, 0], boxes[None, :, 0])
    y0 = np.maximum(boxes[:, None, 1], boxes[None, :, 1])
    x1 = np.minimum(boxes[:, None, 2], boxes[None, :, 2])
    y1 = np.minimum(boxes[:, None, 3], boxes[None, :, 3])
    inter = np.maximum(0, x1 - x0) * np.maximum(0, y1 - y0)
    areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    union = areas[:, None] + areas[None, :] - inter
    return np.where(union > 0, inter / np.maximum(union, 1), 0.0)


@dataclass(eq=False)
class Detection:
    """
    One detected instance on one frame.

    Attributes:
        frame_index: Frame the instance was detected on.
        box: Tight (x0, y0, x1, y1) bounding box, exclusive upper corner.
        mask: Full-frame boolean instance mask.
        track_hint: Optional identity supplied by the detector (-1 if none).
    """
    frame_index: int
    box: Box
    mask: np.ndarray
    track_hint: int = -1
    area: int = field(init=False)

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        self.box = tuple(int(v) for v in self.box)
        self.area = int(self.mask.sum())
        if self.area < 1:
            raise ValidationError(f"detection on frame {self.frame_index} has an empty mask",
                                  ErrorCodes.INVALID_INPUT_SIZE)
        if mask_box(self.mask) != self.box:
            raise ValidationError(
                f"detection box {self.box} on frame {self.frame_index} does not tightly bound "
                f"its mask {mask_box(self.mask)}",
                ErrorCodes.INVALID_INPUT_FORMAT
            )

    @classmethod
    def from_mask(cls, frame_index: int, mask: np.ndarray, track_hint: int = -1) -> "Detection":
        mask = np.asarray(mask, dtype=bool)
        return cls(frame_index, mask_box(mask), mask, track_hint)

    @property
    def key(self) -> Tuple[int, Box]:
        return self.frame_index, self.box


@dataclass
class Track:
    """Detections linked over consecutive frames."""
    track_id: int
    detections: List[Detection] = field(default_factory=list)

    @property
    def last(self) -> Detection:
        return self.detections[-1]

    @property
    def cumulative_area(self) -> int:
        return sum(d.area for d in self.detections)

    def __len__(self) -> int:
        return len(self.detections)


def link_trajectories(detections: Sequence[Detection], link_iou: float = DEFAULT_LINK_IOU) -> List[Track]:
    """
    Link detections into tracks frame by frame.

    On each frame transition, candidate (track, detection) pairs are matched
    greedily in descending IoU order; a pair is accepted when its IoU is at
    least ``link_iou`` and neither side is already matched. Unmatched
    detections start new tracks; a track ends at its first unmatched frame.
    """
    by_frame: Dict[int, List[Detection]] = defaultdict(list)
    for det in detections:
        by_frame[det.frame_index].append(det)

    tracks: List[Track] = []
    for frame in sorted(by_frame):
        current = by_frame[frame]
        open_tracks = [t for t in tracks if t.last.frame_index == frame - 1]

        candidates = []
        for ti, track in enumerate(open_tracks):
            for di, det in enumerate(current):
                score = box_iou(track.last.box, det.box)
                if score >= link_iou:
                    candidates.append((-score, ti, di))
        candidates.sort()

        used_tracks, used_dets = set(), set()
        for _, ti, di in candidates:
            if ti in used_tracks or di in used_dets:
                continue
            open_tracks[ti].detections.append(current[di])
            used_tracks.add(ti)
            used_dets.add(di)

        for di, det in enumerate(current):
            if di not in used_dets:
                tracks.append(Track(len(tracks), [det]))

    return tracks


def size_low(detections: Sequence[Detection], n_frames: int) -> int:
    """
    Area of the ``n_frames``-th largest detection, or the smallest if there are fewer.

    Raises:
        ValidationError: If there are no detections.
    """
    if not detections:
        raise ValidationError("size_low needs at least one detection", ErrorCodes.INVALID_INPUT_SIZE)
    areas = sorted(d.area for d in detections)
    if len(areas) < n_frames:
        return areas[0]
    return areas[-n_frames]


def small_static(detections: Sequence[Detection], size_thr: float, support: float,
                 iou_thr: float = DEFAULT_STATIC_IOU) -> List[Detection]:
    """
    Detections that are small and nearly static.

    A detection qualifies when more than ``support`` detections (itself
    included) overlap its box with IoU above ``iou_thr`` and its area is
    below ``size_thr``. Result order follows the input order.
    """
    if not detections:
        return []
    boxes = np.array([d.box for d in detections], dtype=np.int64)
    counts = (pairwise_iou(boxes) > iou_thr).sum(axis=1)
    return [d for d, count in zip(detections, counts) if count > support and d.area < size_thr]


def pruning_mask(frame_index: int, predicted_mask: np.ndarray, small_static_set: Sequence[Detection],
                 detections_t: Sequence[Detection], size_thr: float) -> np.ndarray:
    """
    Keep-mask for one frame.

    Pruning is active only when the frame's largest detection exceeds
    ``size_thr`` and, if there is a second detection, is more than twice its
    area. Then small-static instances on this frame smaller than a third of
    the largest detection are removed.
    """
    keep = np.ones(predicted_mask.shape, dtype=bool)
    ordered = sorted(detections_t, key=lambda d: d.area, reverse=True)
    if not ordered:
        return keep

    largest = ordered[0].area
    dominant = largest > size_thr and (len(ordered) == 1 or largest > 2 * ordered[1].area)
    if not dominant:
        return keep

    for det in small_static_set:
        if det.frame_index == frame_index and det.area < largest / 3.0:
            if det.mask.shape != keep.shape:
                raise ShapeError(
                    f"instance mask {det.mask.shape} does not match prediction {keep.shape}",
                    ErrorCodes.DIMENSION_MISMATCH
                )
            keep &= ~det.mask
    return keep


class InstancePruner:
    """
    Video-level pruning with fixed thresholds.

    Example:
        >>> pruner = InstancePruner()
        >>> refined = pruner.prune(predicted_masks, detections)
    """

    def __init__(self, link_iou: float = DEFAULT_LINK_IOU, static_iou: float = DEFAULT_STATIC_IOU,
                 support_ratio: float = DEFAULT_SUPPORT_RATIO):
        for name, value in (("link_iou", link_iou), ("static_iou", static_iou), ("support_ratio", support_ratio)):
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {value}", ErrorCodes.INVALID_INPUT_SIZE)
        self.link_iou = link_iou
        self.static_iou = static_iou
        self.support_ratio = support_ratio

    def prune(self, predicted_masks: Sequence[np.ndarray], detections: Sequence[Detection]) -> List[np.ndarray]:
        """
        Refined masks for one video.

        The small-static rule compares every detection against all others by
        box IoU, so it needs no track identities. Trajectories are linked only
        for the debug log, which lists each track with its cumulative area.

        Raises:
            ValidationError: If a detection lies past the last predicted frame.
            ShapeError: If an instance mask does not match its prediction.
        """
        n_frames = len(predicted_masks)
        masks = [np.asarray(m, dtype=bool) for m in predicted_masks]

        for det in detections:
            if not 0 <= det.frame_index < n_frames:
                raise ValidationError(
                    f"detection on frame {det.frame_index} but only {n_frames} predicted masks",
                    ErrorCodes.COUNT_MISMATCH
                )
            if det.mask.shape != masks[det.frame_index].shape:
                raise ShapeError(
                    f"instance mask {det.mask.shape} does not match prediction {masks[det.frame_index].shape}",
                    ErrorCodes.DIMENSION_MISMATCH
                )

        if not detections:
            return [m.copy() for m in masks]

        threshold = size_low(detections, n_frames)
        static = small_static(detections, threshold, self.support_ratio * n_frames, self.static_iou)

        per_frame: Dict[int, List[Detection]] = defaultdict(list)
        for det in detections:
            per_frame[det.frame_index].append(det)

        refined = []
        for t, mask in enumerate(masks):
            keep = pruning_mask(t, mask, static, per_frame.get(t, []), threshold)
            refined.append(mask & keep)

        removed = sum(int(m.sum()) - int(r.sum()) for m, r in zip(masks, refined))
        logger.info("Pruning: size_low=%d, %d small-static detections, %d pixels removed",
                    threshold, len(static), removed)
        if logger.isEnabledFor(logging.DEBUG):
            for track, area in track_areas(detections, self.link_iou):
                logger.debug("track %d: %d detections, cumulative area %d", track.track_id, len(track), area)
        return refined

    def get_info(self) -> Dict[str, float]:
        return {
            "link_iou": self.link_iou,
            "static_iou": self.static_iou,
            "support_ratio": self.support_ratio,
        }


def track_areas(detections: Sequence[Detection], link_iou: float = DEFAULT_LINK_IOU) -> List[Tuple[Track, int]]:
    """Tracks with their cumulative instance area, largest first."""
    tracks = link_trajectories(detections, link_iou)
    return sorted(((t, t.cumulative_area) for t in tracks), key=lambda item: (-item[1], item[0].track_id))


def apply_pruning(predicted_masks: Sequence[np.ndarray], detections: Sequence[Detection],
                  link_iou: float = DEFAULT_LINK_IOU) -> List[np.ndarray]:
    """Refined masks: each prediction AND its frame's keep-mask."""
    return InstancePruner(link_iou=link_iou).prune(predicted_masks, detections)


def read_detections(path: Union[str, Path]) -> List[Detection]:
    """
    Parse a detections file.

    Each non-comment line is ``frame_idx track_hint x0 y0 x1 y1 mask_path``;
    mask paths are relative to the file's directory.
    """
    path = Path(path)
    if not path.exists():
        raise FileError(f"Detections file not found: {path}", ErrorCodes.FILE_NOT_FOUND,
                        details={"path": str(path)})

    detections = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 7:
            raise FileError(f"{path}:{lineno}: expected 7 fields, got {len(parts)}",
                            ErrorCodes.INVALID_FILE_FORMAT, details={"path": str(path)})
        try:
            frame_index, hint, x0, y0, x1, y1 = (int(v) for v in parts[:6])
        except ValueError:
            raise FileError(f"{path}:{lineno}: non-integer field in {line!r}",
                            ErrorCodes.INVALID_FILE_FORMAT, details={"path": str(path)})
        try:
            detections.append(Detection(frame_index, (x0, y0, x1, y1), read_mask(path.parent / parts[6]), hint))
        except ValidationError as e:
            raise ValidationError(f"{path}:{lineno}: {e.message}", e.error_code, details={"path": str(path)})

    logger.debug("Read %d detections from %s", len(detections), path)
    return detections


def write_detections(path: Union[str, Path], detections: Sequence[Detection],
                     mask_dir: str = "instances") -> None:
    """Write a detections file plus one 8-bit mask per instance under ``mask_dir``."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = []
        per_frame_count: Dict[int, int] = defaultdict(int)
        for det in detections:
            k = per_frame_count[det.frame_index]
            per_frame_count[det.frame_index] += 1
            rel = f"{mask_dir}/{det.frame_index:05d}_{k:03d}.pgm"
            write_mask(path.parent / rel, det.mask)
            x0, y0, x1, y1 = det.box
            lines.append(f"{det.frame_index} {det.track_hint} {x0} {y0} {x1} {y1} {rel}")
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    except AnchorDiffError:
        raise
    except Exception as e:
        raise FileError(f"Failed to write detections {path}: {e}", ErrorCodes.FILE_CORRUPTED,
                        details={"path": str(path)})
