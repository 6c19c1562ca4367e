"""
Training: pair sampling, augmentation, BCE loss, SGD with a poly schedule.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage
from tqdm import tqdm

from .core import ops
from .core.model import AdNetParams, AnchorDiffusionNet, Mode
from .core.tensor import Tensor
from .dataset import VideoSample
from .exceptions import (
    AnchorDiffError, ConfigurationError, FileError, ShapeError, TrainingError, ValidationError, ErrorCodes
)
from .utils.imaging import downsample_mask, resize_image, resize_nearest

logger = logging.getLogger(__name__)

# k * 45 degrees; no rotation half of the time.
ROTATION_PROBABILITIES = np.array([0.51] + [0.07] * 7)

LOSS_RESOLUTIONS = ("mask", "embedding")


@dataclass
class TrainConfig:
    """
    Optimisation settings.

    ``max_iter`` is the horizon of the learning-rate schedule; ``iterations``
    is how many steps are actually run.
    """
    base_lr: float = 0.005
    max_iter: int = 40000
    poly_power: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 4
    seed: int = 0
    iterations: int = 2000
    input_size: int = 64
    augment_crop: bool = True
    augment_rotate: bool = True
    loss_resolution: str = "mask"
    log_every: int = 50
    progress: bool = False

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ConfigurationError(f"base_lr must be positive, got {self.base_lr}", ErrorCodes.INVALID_CONFIGURATION)
        if self.poly_power <= 0:
            raise ConfigurationError(f"poly_power must be positive, got {self.poly_power}",
                                     ErrorCodes.INVALID_CONFIGURATION)
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be at least 1, got {self.batch_size}",
                                     ErrorCodes.INVALID_CONFIGURATION)
        if self.max_iter < 1 or self.iterations < 0:
            raise ConfigurationError("max_iter must be positive and iterations non-negative",
                                     ErrorCodes.INVALID_CONFIGURATION)
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be non-negative, got {self.weight_decay}",
                                     ErrorCodes.INVALID_CONFIGURATION)
        if self.input_size < 1:
            raise ConfigurationError(f"input_size must be positive, got {self.input_size}",
                                     ErrorCodes.INVALID_CONFIGURATION)
        if self.loss_resolution not in LOSS_RESOLUTIONS:
            raise ConfigurationError(
                f"loss_resolution must be one of {LOSS_RESOLUTIONS}, got {self.loss_resolution!r}",
                ErrorCodes.INVALID_CONFIGURATION
            )
        if self.log_every < 1:
            raise ConfigurationError("log_every must be at least 1", ErrorCodes.INVALID_CONFIGURATION)

    def get_info(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class TrainPair:
    """Anchor (always frame 0) and target frame of one video, with masks."""
    anchor_frame: np.ndarray
    anchor_mask: np.ndarray
    target_frame: np.ndarray
    target_mask: np.ndarray
    video_id: str
    anchor_index: int
    target_index: int

    def __post_init__(self):
        if self.anchor_index != 0:
            raise ValidationError(f"anchor must be frame 0, got {self.anchor_index}", ErrorCodes.INVALID_INPUT_FORMAT)


@dataclass
class LossRecord:
    iteration: int
    lr: float
    loss: float


@dataclass
class TrainResult:
    params: AdNetParams
    history: List[LossRecord] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.history[-1].loss if self.history else float("nan")


def poly_lr(iteration: int, base_lr: float = 0.005, max_iter: int = 40000, power: float = 0.9) -> float:
    """base_lr * (1 - iteration / max_iter) ** power; zero past the horizon."""
    if iteration < 0:
        raise ConfigurationError(f"iteration must be non-negative, got {iteration}", ErrorCodes.INVALID_CONFIGURATION)
    if iteration > max_iter:
        logger.warning("iteration %d is past the schedule horizon %d; using lr 0", iteration, max_iter)
        return 0.0
    return base_lr * (1.0 - iteration / max_iter) ** power


def sample_pair(video: VideoSample, rng: np.random.Generator) -> TrainPair:
    """Anchor is frame 0; the target is drawn uniformly from all frames."""
    if len(video) == 0:
        raise ValidationError(f"video {video.video_id} has no frames", ErrorCodes.INVALID_INPUT_SIZE)
    if video.masks is None:
        raise ValidationError(f"video {video.video_id} has no masks to train on", ErrorCodes.INVALID_INPUT_FORMAT)
    t = int(rng.integers(len(video)))
    return TrainPair(video.frames[0], video.masks[0], video.frames[t], video.masks[t], video.video_id, 0, t)


def random_crop_box(mask: np.ndarray, rng: np.random.Generator) -> Tuple[int, int, int, int]:
    """
    Crop (top, bottom, left, right) enclosing the foreground box.

    Each side of the tight box is pushed out by (f - 1) times the box extent,
    f ~ U[1, 2] drawn per side, then clipped to the image. An empty mask
    yields the full frame.
    """
    height, width = mask.shape
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return 0, height, 0, width

    top, bottom = int(rows[0]), int(rows[-1]) + 1
    left, right = int(cols[0]), int(cols[-1]) + 1
    bh, bw = bottom - top, right - left
    f_top, f_bottom, f_left, f_right = rng.uniform(1.0, 2.0, size=4)
    return (
        max(0, math.floor(top - (f_top - 1.0) * bh)),
        min(height, math.ceil(bottom + (f_bottom - 1.0) * bh)),
        max(0, math.floor(left - (f_left - 1.0) * bw)),
        min(width, math.ceil(right + (f_right - 1.0) * bw)),
    )


def sample_rotation(rng: np.random.Generator) -> int:
    return int(rng.choice(8, p=ROTATION_PROBABILITIES))


def rotate(frame: np.ndarray, mask: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rotate a frame and its mask by k * 45 degrees.

    Right angles are exact array rotations; diagonals resample the frame
    bilinearly and the mask by nearest neighbour, zero-filling outside.
    """
    k = k % 8
    if k % 2 == 0:
        quarter = k // 2
        return (np.ascontiguousarray(np.rot90(frame, quarter, axes=(1, 2))),
                np.ascontiguousarray(np.rot90(mask, quarter)))
    angle = 45.0 * k
    rotated_frame = ndimage.rotate(frame, angle, axes=(1, 2), reshape=False, order=1, mode="constant", cval=0.0)
    rotated_mask = ndimage.rotate(mask.astype(np.uint8), angle, axes=(0, 1), reshape=False, order=0,
                                  mode="constant", cval=0) > 0
    return np.clip(rotated_frame, 0.0, 1.0), rotated_mask


def _prepare_frame(frame: np.ndarray, mask: np.ndarray, rng: np.random.Generator, size: int,
                   crop: bool, rotation: bool) -> Tuple[np.ndarray, np.ndarray]:
    if crop:
        top, bottom, left, right = random_crop_box(mask, rng)
        frame = frame[:, top:bottom, left:right]
        mask = mask[top:bottom, left:right]
    frame = resize_image(frame, size, size)
    mask = resize_nearest(mask, size, size)
    if rotation:
        frame, mask = rotate(frame, mask, sample_rotation(rng))
    return frame, mask


def augment(pair: TrainPair, rng: np.random.Generator, input_size: int = 64,
            crop: bool = True, rotation: bool = True) -> TrainPair:
    """
    Crop around the foreground, resize to ``input_size`` and rotate.

    Anchor and target are cropped and rotated independently.
    """
    anchor_frame, anchor_mask = _prepare_frame(pair.anchor_frame, pair.anchor_mask, rng, input_size, crop, rotation)
    target_frame, target_mask = _prepare_frame(pair.target_frame, pair.target_mask, rng, input_size, crop, rotation)
    return TrainPair(anchor_frame, anchor_mask, target_frame, target_mask,
                     pair.video_id, pair.anchor_index, pair.target_index)


def bce_loss(pred: Tensor, gt: np.ndarray, resolution: str = "mask", from_logits: bool = False) -> Tensor:
    """
    Mean binary cross-entropy between a heatmap and a binary mask.

    With ``resolution="mask"`` a smaller prediction is bilinearly upsampled
    to the mask; with ``"embedding"`` the mask is majority-vote downsampled
    to the prediction instead. With ``from_logits`` the prediction holds
    logits: they are upsampled before the sigmoid, so the mask boundary can
    fall between two embedding pixels with a confident score on either side.
    """
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape and pred.ndim == 2 and gt.ndim == 2:
        if resolution == "mask":
            h, w = pred.shape
            pred = ops.reshape(ops.bilinear_resize(ops.reshape(pred, (1, h, w)), gt.shape[0], gt.shape[1]), gt.shape)
        else:
            gt = downsample_mask(gt >= 0.5, pred.shape[0], pred.shape[1]).astype(np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and mask {gt.shape} differ after resizing",
                         ErrorCodes.DIMENSION_MISMATCH)
    if from_logits:
        return ops.bce_with_logits(pred, gt)
    return ops.binary_cross_entropy(pred, gt)


def sgd_step(params: AdNetParams, lr: float, weight_decay: float) -> None:
    """w <- w - lr * (grad + weight_decay * w) for every parameter with a gradient."""
    for _, tensor in params.items():
        if tensor.grad is None:
            continue
        tensor.data = tensor.data - lr * (tensor.grad + weight_decay * tensor.data)


class Trainer:
    """
    Runs the optimisation loop for one network.

    Example:
        >>> trainer = Trainer(build_model(), TrainConfig(iterations=100))
        >>> result = trainer.train_loop(videos)
    """

    def __init__(self, model: AnchorDiffusionNet, config: TrainConfig):
        self.model = model
        self.config = config
        stride = model.stride
        if config.input_size % stride:
            raise ConfigurationError(
                f"input_size {config.input_size} is not a multiple of the encoder stride {stride}",
                ErrorCodes.INCOMPATIBLE_OPTIONS
            )

    @property
    def params(self) -> AdNetParams:
        return self.model.params

    def train_step(self, batch: Sequence[TrainPair], lr: float, rng: np.random.Generator,
                   iteration: int = 0) -> float:
        """
        Accumulate the batch-mean gradient, take one SGD step, return the mean loss.

        The loss is taken on the network's logits, see :func:`bce_loss`.
        """
        self.params.zero_grad()
        total = 0.0
        for pair in batch:
            logits = self.model.forward_logits(pair.anchor_frame, pair.target_frame, mode=Mode.TRAIN, rng=rng)
            loss = bce_loss(logits, pair.target_mask, self.config.loss_resolution, from_logits=True)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(
                    f"non-finite loss at iteration {iteration} on video {pair.video_id}",
                    ErrorCodes.NON_FINITE_LOSS,
                    details={"iteration": iteration, "video_id": pair.video_id}
                )
            ops.scale(loss, 1.0 / len(batch)).backward()
            total += value
        sgd_step(self.params, lr, self.config.weight_decay)
        return total / len(batch)

    def train_loop(self, dataset: Sequence[VideoSample]) -> TrainResult:
        """
        Run ``config.iterations`` SGD steps over pairs drawn from ``dataset``.

        Raises:
            ValidationError: If the dataset is empty.
            TrainingError: If a loss becomes non-finite.
        """
        if not dataset:
            raise ValidationError("cannot train on an empty dataset", ErrorCodes.INVALID_INPUT_SIZE)

        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        result = TrainResult(self.params)

        logger.info("Training %s for %d iterations on %d videos",
                    self.model.config.variant.value, cfg.iterations, len(dataset))
        for it in tqdm(range(cfg.iterations), desc="train", disable=not cfg.progress):
            lr = poly_lr(it, cfg.base_lr, cfg.max_iter, cfg.poly_power)
            batch = []
            for _ in range(cfg.batch_size):
                video = dataset[int(rng.integers(len(dataset)))]
                pair = sample_pair(video, rng)
                batch.append(augment(pair, rng, cfg.input_size, cfg.augment_crop, cfg.augment_rotate))
            loss = self.train_step(batch, lr, rng, iteration=it)
            result.history.append(LossRecord(it, lr, loss))
            if it % cfg.log_every == 0 or it == cfg.iterations - 1:
                logger.info("iter %d lr %.6f loss %.5f", it, lr, loss)
        return result


def write_history_csv(path: Union[str, Path], history: Sequence[LossRecord]) -> None:
    """Write ``iteration,lr,loss`` rows."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["iteration", "lr", "loss"])
            for record in history:
                writer.writerow([record.iteration, repr(record.lr), repr(record.loss)])
    except AnchorDiffError:
        raise
    except Exception as e:
        raise FileError(f"Failed to write loss history {path}: {e}", ErrorCodes.FILE_CORRUPTED,
                        details={"path": str(path)})
