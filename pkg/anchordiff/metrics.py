"""
Segmentation metrics.

Region similarity J (mask IoU), contour accuracy F (boundary F-measure with
a distance tolerance), per-sequence mean / recall / decay statistics, mean
absolute error, saliency precision-recall curves and the embedding drift of
foreground pixels relative to the anchor frame.
"""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from .algorithms import SegmentationModel
from .dataset import VideoSample
from .exceptions import AnchorDiffError, EvaluationError, FileError, ShapeError, ValidationError, ErrorCodes
from .utils.imaging import downsample_mask

logger = logging.getLogger(__name__)

RECALL_THRESHOLD = 0.5
BETA_SQUARED = 0.3
# Boundary tolerance as a fraction of the image diagonal.
TOLERANCE_FRACTION = 0.008

_FOUR_NEIGHBOURHOOD = ndimage.generate_binary_structure(2, 1)


def _check_shapes(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ", ErrorCodes.DIMENSION_MISMATCH)


def region_similarity(pred: np.ndarray, gt: np.ndarray) -> float:
    """Jaccard index of two binary masks; 1.0 when both are empty."""
    pred, gt = np.asarray(pred, dtype=bool), np.asarray(gt, dtype=bool)
    _check_shapes(pred, gt, "region_similarity")
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred & gt) / union


def boundary(mask: np.ndarray) -> np.ndarray:
    """Mask pixels removed by a 4-neighbour erosion (outside the image counts as background)."""
    mask = np.asarray(mask, dtype=bool)
    return mask & ~ndimage.binary_erosion(mask, structure=_FOUR_NEIGHBOURHOOD, border_value=0)


def davis_tolerance(shape: Sequence[int]) -> int:
    """Boundary match radius: ceil(0.8% of the image diagonal)."""
    return int(math.ceil(TOLERANCE_FRACTION * math.hypot(shape[0], shape[1])))


def contour_accuracy(pred: np.ndarray, gt: np.ndarray, tol_radius: Optional[float] = None) -> float:
    """
    Boundary F-measure.

    Precision is the fraction of predicted boundary pixels within
    ``tol_radius`` of a ground-truth boundary pixel; recall swaps the roles.
    """
    pred, gt = np.asarray(pred, dtype=bool), np.asarray(gt, dtype=bool)
    _check_shapes(pred, gt, "contour_accuracy")
    radius = davis_tolerance(gt.shape) if tol_radius is None else tol_radius

    pred_b, gt_b = boundary(pred), boundary(gt)
    n_pred, n_gt = np.count_nonzero(pred_b), np.count_nonzero(gt_b)
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0

    dist_to_gt = ndimage.distance_transform_edt(~gt_b)
    dist_to_pred = ndimage.distance_transform_edt(~pred_b)
    precision = np.count_nonzero(dist_to_gt[pred_b] <= radius) / n_pred
    recall = np.count_nonzero(dist_to_pred[gt_b] <= radius) / n_gt
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


class SequenceStats(NamedTuple):
    mean: float
    recall: float
    decay: float


def sequence_stats(values: Sequence[float]) -> SequenceStats:
    """
    Mean, recall (fraction above 0.5) and decay of a per-frame series.

    Decay is the mean of the first quarter of frames minus the mean of the
    last quarter, each quarter holding ceil(n / 4) frames.
    """
    if len(values) == 0:
        raise ValidationError("sequence_stats needs at least one value", ErrorCodes.INVALID_INPUT_SIZE)
    series = np.asarray(values, dtype=np.float64)
    n = series.size
    quarter = math.ceil(n / 4)
    return SequenceStats(
        mean=float(series.mean()),
        recall=float(np.mean(series > RECALL_THRESHOLD)),
        decay=float(series[:quarter].mean() - series[n - quarter:].mean()),
    )


def mae(heatmap: np.ndarray, gt: np.ndarray) -> float:
    """Mean absolute error between a heatmap and a binary mask."""
    heatmap = np.asarray(heatmap, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _check_shapes(heatmap, gt, "mae")
    return float(np.mean(np.abs(heatmap - gt)))


@dataclass
class PRCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f_measure: np.ndarray

    @property
    def max_f(self) -> float:
        return float(self.f_measure.max())


def f_beta(precision: np.ndarray, recall: np.ndarray, beta_squared: float = BETA_SQUARED) -> np.ndarray:
    precision, recall = np.asarray(precision, dtype=np.float64), np.asarray(recall, dtype=np.float64)
    denominator = beta_squared * precision + recall
    safe = np.where(denominator > 0, denominator, 1.0)
    return np.where(denominator > 0, (1.0 + beta_squared) * precision * recall / safe, 0.0)


def pr_curve(heatmaps: Sequence[np.ndarray], gts: Sequence[np.ndarray], n_thresholds: int = 255) -> PRCurve:
    """
    Dataset-level precision and recall on a uniform threshold grid over [0, 1].

    A pixel is predicted foreground when its value is at least the threshold.
    Counts are pooled over all heatmaps before dividing.
    """
    if len(heatmaps) == 0:
        raise EvaluationError("pr_curve needs at least one heatmap", ErrorCodes.EMPTY_DATASET)
    if len(heatmaps) != len(gts):
        raise ValidationError(f"{len(heatmaps)} heatmaps but {len(gts)} masks", ErrorCodes.COUNT_MISMATCH)

    thresholds = np.linspace(0.0, 1.0, n_thresholds)
    tp = np.zeros(n_thresholds)
    fp = np.zeros(n_thresholds)
    positives = 0
    for heatmap, gt in zip(heatmaps, gts):
        heatmap = np.asarray(heatmap, dtype=np.float64)
        gt = np.asarray(gt, dtype=bool)
        _check_shapes(heatmap, gt, "pr_curve")
        values = heatmap.reshape(-1)
        labels = gt.reshape(-1)
        predicted = values[None, :] >= thresholds[:, None]
        tp += np.count_nonzero(predicted & labels[None, :], axis=1)
        fp += np.count_nonzero(predicted & ~labels[None, :], axis=1)
        positives += int(np.count_nonzero(labels))

    predicted_total = tp + fp
    precision = np.where(predicted_total > 0, tp / np.where(predicted_total > 0, predicted_total, 1.0), 0.0)
    recall = tp / positives if positives > 0 else np.zeros(n_thresholds)
    return PRCurve(thresholds, precision, recall, f_beta(precision, recall))


@dataclass
class FrameScore:
    frame_index: int
    j: float
    f: float
    mae: float

    def __post_init__(self):
        for name in ("j", "f", "mae"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"frame {self.frame_index}: {name}={value} outside [0, 1]",
                                      ErrorCodes.INVALID_INPUT_SIZE)


@dataclass
class SequenceReport:
    sequence_id: str
    frames: List[FrameScore]
    j: SequenceStats
    f: SequenceStats
    mae: float
    pr: PRCurve

    @property
    def max_f(self) -> float:
        return self.pr.max_f


def evaluate_sequence(sequence_id: str, pred_masks: Sequence[np.ndarray], gt_masks: Sequence[np.ndarray],
                      heatmaps: Optional[Sequence[np.ndarray]] = None,
                      tol_radius: Optional[float] = None) -> SequenceReport:
    """
    Score one video.

    Without heatmaps, MAE and the PR curve use the binary predictions.
    """
    if len(pred_masks) != len(gt_masks):
        raise ValidationError(
            f"{sequence_id}: {len(pred_masks)} predicted masks but {len(gt_masks)} ground-truth masks",
            ErrorCodes.COUNT_MISMATCH
        )
    if len(gt_masks) == 0:
        raise EvaluationError(f"{sequence_id}: no frames to evaluate", ErrorCodes.EMPTY_DATASET)
    soft = [np.asarray(m, dtype=np.float64) for m in pred_masks] if heatmaps is None else list(heatmaps)
    if len(soft) != len(gt_masks):
        raise ValidationError(f"{sequence_id}: {len(soft)} heatmaps but {len(gt_masks)} masks",
                              ErrorCodes.COUNT_MISMATCH)

    frames = []
    for t, (pred, gt, heat) in enumerate(zip(pred_masks, gt_masks, soft)):
        frames.append(FrameScore(t, region_similarity(pred, gt), contour_accuracy(pred, gt, tol_radius),
                                 mae(heat, gt)))

    return SequenceReport(
        sequence_id=sequence_id,
        frames=frames,
        j=sequence_stats([s.j for s in frames]),
        f=sequence_stats([s.f for s in frames]),
        mae=float(np.mean([s.mae for s in frames])),
        pr=pr_curve(soft, gt_masks),
    )


@dataclass
class EvalReport:
    """Per-sequence reports plus a PR curve pooled over the dataset."""
    sequences: List[SequenceReport]
    pr: PRCurve

    @property
    def j_mean(self) -> float:
        return float(np.mean([s.j.mean for s in self.sequences]))

    @property
    def f_mean(self) -> float:
        return float(np.mean([s.f.mean for s in self.sequences]))

    def summary_text(self) -> str:
        rows = [
            ("sequences", f"{len(self.sequences)}"),
            ("frames", f"{sum(len(s.frames) for s in self.sequences)}"),
            ("J mean", f"{self.j_mean:.3f}"),
            ("J recall", f"{np.mean([s.j.recall for s in self.sequences]):.3f}"),
            ("J decay", f"{np.mean([s.j.decay for s in self.sequences]):.3f}"),
            ("F mean", f"{self.f_mean:.3f}"),
            ("F recall", f"{np.mean([s.f.recall for s in self.sequences]):.3f}"),
            ("F decay", f"{np.mean([s.f.decay for s in self.sequences]):.3f}"),
            ("MAE", f"{np.mean([s.mae for s in self.sequences]):.3f}"),
            ("max F-measure", f"{self.pr.max_f:.3f}"),
        ]
        lines = [f"{name:<14}{value}" for name, value in rows]
        for s in self.sequences:
            lines.append(f"  {s.sequence_id:<20} J {s.j.mean:.3f}  F {s.f.mean:.3f}  MAE {s.mae:.3f}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path: Union[str, Path]) -> None:
        """One row per frame: sequence, frame, J, F, MAE."""
        rows = [[s.sequence_id, fs.frame_index, f"{fs.j:.6f}", f"{fs.f:.6f}", f"{fs.mae:.6f}"]
                for s in self.sequences for fs in s.frames]
        _write_rows(path, ["sequence", "frame", "J", "F", "MAE"], rows)

    def write_pr_csv(self, path: Union[str, Path]) -> None:
        write_pr_csv(path, self.pr)


def evaluate_dataset(items: Sequence[tuple], tol_radius: Optional[float] = None) -> EvalReport:
    """
    Score several videos.

    Args:
        items: ``(sequence_id, pred_masks, gt_masks, heatmaps_or_None)`` tuples.
    """
    if not items:
        raise EvaluationError("no sequences to evaluate", ErrorCodes.EMPTY_DATASET)
    sequences = [evaluate_sequence(sid, pred, gt, heat, tol_radius) for sid, pred, gt, heat in items]
    all_soft, all_gt = [], []
    for (_, pred, gt, heat) in items:
        all_soft.extend([np.asarray(m, dtype=np.float64) for m in pred] if heat is None else heat)
        all_gt.extend(gt)
    return EvalReport(sequences, pr_curve(all_soft, all_gt))


def write_pr_csv(path: Union[str, Path], curve: PRCurve) -> None:
    rows = [[f"{t:.6f}", f"{p:.6f}", f"{r:.6f}", f"{fm:.6f}"]
            for t, p, r, fm in zip(curve.thresholds, curve.precision, curve.recall, curve.f_measure)]
    _write_rows(path, ["threshold", "precision", "recall", "F"], rows)


def _write_rows(path: Union[str, Path], header: List[str], rows: List[list]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except AnchorDiffError:
        raise
    except Exception as e:
        raise FileError(f"Failed to write {path}: {e}", ErrorCodes.FILE_CORRUPTED, details={"path": str(path)})


def _foreground_mean(embedding, mask: np.ndarray) -> Optional[np.ndarray]:
    matrix = embedding.matrix.data
    small = downsample_mask(mask, embedding.h, embedding.w).reshape(-1)
    if not small.any():
        return None
    return matrix[small].mean(axis=0)


def embedding_drift(model: SegmentationModel, video: VideoSample,
                    gt_masks: Optional[Sequence[np.ndarray]] = None) -> List[Optional[float]]:
    """
    Cosine distance between each frame's mean foreground embedding and frame 0's.

    Masks are majority-vote downsampled to the embedding grid. Frames whose
    downsampled mask is empty give ``None``; all frames do when the anchor's
    does.
    """
    masks = list(gt_masks) if gt_masks is not None else video.masks
    if masks is None or len(masks) != len(video):
        raise ValidationError(f"video {video.video_id}: drift needs one ground-truth mask per frame",
                              ErrorCodes.COUNT_MISMATCH)

    anchor_mean = _foreground_mean(model.encode(video.frames[0]), masks[0])
    if anchor_mean is None:
        logger.warning("video %s: no foreground on the anchor embedding grid, drift undefined", video.video_id)
        return [None] * len(video)
    anchor_norm = float(np.linalg.norm(anchor_mean))

    drift: List[Optional[float]] = [0.0]
    for frame, mask in zip(video.frames[1:], masks[1:]):
        current = _foreground_mean(model.encode(frame), mask)
        if current is None:
            drift.append(None)
        elif np.array_equal(current, anchor_mean):
            drift.append(0.0)
        else:
            norm = anchor_norm * float(np.linalg.norm(current))
            drift.append(None if norm == 0.0 else 1.0 - float(np.dot(current, anchor_mean)) / norm)
    return drift


def tail_mean(series: Sequence[Optional[float]], fraction: float = 0.25) -> Optional[float]:
    """Mean of the non-missing values in the last ``fraction`` of a series."""
    n = len(series)
    if n == 0:
        return None
    tail = [v for v in series[n - math.ceil(n * fraction):] if v is not None]
    return float(np.mean(tail)) if tail else None


def write_drift_csv(path: Union[str, Path], drift: Sequence[Optional[float]]) -> None:
    """``frame,drift`` rows; missing values are left empty."""
    rows = [[t, "" if d is None else f"{d:.8f}"] for t, d in enumerate(drift)]
    _write_rows(path, ["frame", "drift"], rows)
