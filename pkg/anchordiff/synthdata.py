"""
Synthetic moving-shape videos with exact ground truth.

Each video shows one textured foreground object translating by whole pixels
over a textured background, plus smaller distractor objects that may be
static, moving, or enter after the first frame. Masks and detections are
exact because motion is pure integer translation.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .dataset import VideoSample, save_video
from .exceptions import ConfigurationError, ErrorCodes
from .pruning import Detection
from .utils.imaging import resize_image

logger = logging.getLogger(__name__)

SHAPE_KINDS = ("rect", "disk")


@dataclass
class ObjectSpec:
    """
    One rendered object.

    Attributes:
        kind: ``rect`` or ``disk`` (a disk uses ``size[0]`` as its diameter).
        size: (height, width) in pixels.
        position: (row, col) of the top-left corner on frame 0.
        velocity: (drow, dcol) per frame.
        texture_seed: Seed of the object's surface pattern.
        enter_frame: First frame the object is visible on.
        exit_frame: First frame it is no longer visible on (None: never leaves).
        bounce: Reflect off the frame borders; otherwise the object may leave
            the frame and is clipped.
    """
    kind: str = "rect"
    size: Tuple[int, int] = (16, 16)
    position: Tuple[int, int] = (0, 0)
    velocity: Tuple[int, int] = (0, 0)
    texture_seed: int = 0
    enter_frame: int = 0
    exit_frame: Optional[int] = None
    bounce: bool = True

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ConfigurationError(f"unknown shape kind {self.kind!r}", ErrorCodes.INVALID_CONFIGURATION)
        self.size = (int(self.size[0]), int(self.size[1]))
        self.position = (int(self.position[0]), int(self.position[1]))
        self.velocity = (int(self.velocity[0]), int(self.velocity[1]))
        if min(self.size) < 1:
            raise ConfigurationError(f"object size must be positive, got {self.size}",
                                     ErrorCodes.INVALID_CONFIGURATION)
        if self.kind == "disk" and self.size[0] != self.size[1]:
            raise ConfigurationError(f"disk size must be square, got {self.size}", ErrorCodes.INVALID_CONFIGURATION)

    def shape_mask(self) -> np.ndarray:
        h, w = self.size
        if self.kind == "rect":
            return np.ones((h, w), dtype=bool)
        yy, xx = np.mgrid[0:h, 0:w]
        centre = (h - 1) / 2.0
        return (yy - centre) ** 2 + (xx - centre) ** 2 <= (h / 2.0) ** 2

    def visible_at(self, t: int) -> bool:
        return t >= self.enter_frame and (self.exit_frame is None or t < self.exit_frame)

    def position_at(self, t: int, height: int, width: int) -> Tuple[int, int]:
        row = self.position[0] + self.velocity[0] * t
        col = self.position[1] + self.velocity[1] * t
        if self.bounce:
            row = _reflect(row, height - self.size[0])
            col = _reflect(col, width - self.size[1])
        return row, col


def _reflect(value: int, upper: int) -> int:
    """Fold ``value`` into [0, upper] as if bouncing between the bounds."""
    if upper <= 0:
        return 0
    period = 2 * upper
    m = value % period
    return m if m <= upper else period - m


@dataclass
class SceneSpec:
    """Everything needed to render one video."""
    height: int = 64
    width: int = 64
    n_frames: int = 16
    foreground: ObjectSpec = field(default_factory=lambda: ObjectSpec(position=(24, 24), velocity=(1, 2)))
    distractors: List[ObjectSpec] = field(default_factory=list)
    background_seed: int = 0
    noise_level: float = 0.0
    video_id: str = "video"

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.n_frames < 1:
            raise ConfigurationError(
                f"scene needs positive size and frame count, got {self.height}x{self.width}x{self.n_frames}",
                ErrorCodes.INVALID_CONFIGURATION
            )
        if self.foreground.enter_frame != 0:
            raise ConfigurationError("the foreground object must be visible on the first frame",
                                     ErrorCodes.INVALID_CONFIGURATION)
        for obj in [self.foreground] + list(self.distractors):
            h, w = obj.size
            if h > self.height or w > self.width:
                raise ConfigurationError(
                    f"object of size {obj.size} does not fit a {self.height}x{self.width} frame",
                    ErrorCodes.INVALID_CONFIGURATION
                )
            row, col = obj.position
            if obj.bounce and not (0 <= row <= self.height - h and 0 <= col <= self.width - w):
                raise ConfigurationError(f"object at {obj.position} starts outside the frame",
                                         ErrorCodes.INVALID_CONFIGURATION)
        if self.noise_level < 0:
            raise ConfigurationError(f"noise_level must be non-negative, got {self.noise_level}",
                                     ErrorCodes.INVALID_CONFIGURATION)


@dataclass
class BenchmarkConfig:
    """Size and variety of the generated benchmark."""
    n_train: int = 20
    n_test: int = 8
    n_frames: int = 16
    height: int = 64
    width: int = 64
    seed: int = 0
    max_distractors: int = 2
    late_distractor_prob: float = 0.5
    noise_level: float = 0.02

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 1 or self.n_frames < 1:
            raise ConfigurationError("benchmark counts must be at least 1", ErrorCodes.INVALID_CONFIGURATION)
        if self.height < 32 or self.width < 32:
            raise ConfigurationError(f"benchmark frames must be at least 32x32, got {self.height}x{self.width}",
                                     ErrorCodes.INVALID_CONFIGURATION)
        if not 0.0 <= self.late_distractor_prob <= 1.0:
            raise ConfigurationError("late_distractor_prob must lie in [0, 1]", ErrorCodes.INVALID_CONFIGURATION)

    def get_info(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class Benchmark:
    train: List[VideoSample]
    test: List[VideoSample]

    @property
    def n_frames(self) -> int:
        return sum(len(v) for v in self.train + self.test)


def texture(seed: int, height: int, width: int, contrast: float = 0.25) -> np.ndarray:
    """Smooth coloured noise around a random base colour, 3 x H x W in [0, 1]."""
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.15, 0.85, size=(3, 1, 1))
    coarse = rng.uniform(-contrast, contrast, size=(3, math.ceil(height / 4) + 1, math.ceil(width / 4) + 1))
    fine = rng.normal(0.0, contrast / 5.0, size=(3, height, width))
    return np.clip(base + resize_image(coarse, height, width) + fine, 0.0, 1.0)


def _paste(canvas: np.ndarray, patch: np.ndarray, shape: np.ndarray, row: int, col: int) -> np.ndarray:
    """Draw ``patch`` where ``shape`` is set; return the full-frame footprint."""
    _, height, width = canvas.shape
    h, w = shape.shape
    footprint = np.zeros((height, width), dtype=bool)

    r0, c0 = max(row, 0), max(col, 0)
    r1, c1 = min(row + h, height), min(col + w, width)
    if r0 >= r1 or c0 >= c1:
        return footprint

    local = shape[r0 - row:r1 - row, c0 - col:c1 - col]
    footprint[r0:r1, c0:c1] = local
    canvas[:, footprint] = patch[:, r0 - row:r1 - row, c0 - col:c1 - col][:, local]
    return footprint


def gen_video(spec: SceneSpec, rng: np.random.Generator) -> VideoSample:
    """
    Render a scene.

    Distractors are drawn first and the foreground last, so the foreground
    is never occluded. Every visible object yields one detection per frame;
    track hints are 0 for the foreground and 1.. for distractors.
    """
    background = texture(spec.background_seed, spec.height, spec.width, contrast=0.15)
    objects = list(spec.distractors) + [spec.foreground]
    patches = [texture(obj.texture_seed, *obj.size) for obj in objects]
    shapes = [obj.shape_mask() for obj in objects]
    hints = list(range(1, len(spec.distractors) + 1)) + [0]

    frames, masks, detections = [], [], []
    for t in range(spec.n_frames):
        canvas = background.copy()
        footprints = []
        for obj, patch, shape in zip(objects, patches, shapes):
            if not obj.visible_at(t):
                footprints.append(np.zeros((spec.height, spec.width), dtype=bool))
                continue
            row, col = obj.position_at(t, spec.height, spec.width)
            footprints.append(_paste(canvas, patch, shape, row, col))

        # Later objects cover earlier ones.
        covered = np.zeros((spec.height, spec.width), dtype=bool)
        visible = []
        for footprint in reversed(footprints):
            visible.append(footprint & ~covered)
            covered |= footprint
        visible.reverse()

        for hint, instance in zip(hints, visible):
            if instance.any():
                detections.append(Detection.from_mask(t, instance, track_hint=hint))

        if spec.noise_level > 0:
            canvas = np.clip(canvas + rng.normal(0.0, spec.noise_level, size=canvas.shape), 0.0, 1.0)
        frames.append(canvas)
        masks.append(visible[-1].copy())

    if not masks[0].any():
        raise ConfigurationError("the foreground object is not visible on the first frame",
                                 ErrorCodes.INVALID_CONFIGURATION)
    detections.sort(key=lambda d: (d.frame_index, d.track_hint))
    return VideoSample(spec.video_id, frames, masks, detections)


def _random_velocity(rng: np.random.Generator, max_speed: int = 3) -> Tuple[int, int]:
    while True:
        v = (int(rng.integers(-max_speed, max_speed + 1)), int(rng.integers(-max_speed, max_speed + 1)))
        if v != (0, 0):
            return v


def _random_object(rng: np.random.Generator, height: int, width: int, size_range: Tuple[int, int],
                   static: bool = False, enter_frame: int = 0) -> ObjectSpec:
    kind = SHAPE_KINDS[int(rng.integers(len(SHAPE_KINDS)))]
    side = int(rng.integers(size_range[0], size_range[1] + 1))
    size = (side, side) if kind == "disk" else (side, int(rng.integers(size_range[0], size_range[1] + 1)))
    position = (int(rng.integers(0, height - size[0] + 1)), int(rng.integers(0, width - size[1] + 1)))
    return ObjectSpec(
        kind=kind,
        size=size,
        position=position,
        velocity=(0, 0) if static else _random_velocity(rng),
        texture_seed=int(rng.integers(2 ** 31)),
        enter_frame=enter_frame,
    )


def random_scene(rng: np.random.Generator, config: BenchmarkConfig, video_id: str) -> SceneSpec:
    """Draw a scene: a large moving foreground and up to ``max_distractors`` small objects."""
    h, w = config.height, config.width
    fg_range = (max(8, h // 5), max(10, h // 3))
    distractor_range = (max(4, h // 10), max(6, h // 5))

    foreground = _random_object(rng, h, w, fg_range)
    distractors = []
    for _ in range(int(rng.integers(0, config.max_distractors + 1))):
        static = bool(rng.random() < 0.5)
        late = config.n_frames > 1 and bool(rng.random() < config.late_distractor_prob)
        enter = int(rng.integers(1, max(2, config.n_frames // 2 + 1))) if late else 0
        distractors.append(_random_object(rng, h, w, distractor_range, static=static, enter_frame=enter))

    return SceneSpec(
        height=h, width=w, n_frames=config.n_frames,
        foreground=foreground, distractors=distractors,
        background_seed=int(rng.integers(2 ** 31)),
        noise_level=config.noise_level,
        video_id=video_id,
    )


def gen_benchmark(config: Optional[BenchmarkConfig] = None,
                  rng: Optional[np.random.Generator] = None) -> Benchmark:
    """
    Generate the train and test splits.

    Each video draws from its own child seed; train and test children come
    from separate branches of the root seed, so the splits never share a
    random stream.
    """
    config = config or BenchmarkConfig()
    entropy = config.seed if rng is None else int(rng.integers(2 ** 63))
    train_root, test_root = np.random.SeedSequence(entropy).spawn(2)

    def build(root: np.random.SeedSequence, count: int, prefix: str) -> List[VideoSample]:
        videos = []
        for i, child in enumerate(root.spawn(count)):
            video_rng = np.random.default_rng(child)
            spec = random_scene(video_rng, config, f"{prefix}-{i:03d}")
            videos.append(gen_video(spec, video_rng))
        return videos

    benchmark = Benchmark(build(train_root, config.n_train, "train"), build(test_root, config.n_test, "test"))
    logger.info("Generated %d train and %d test videos (%d frames)",
                len(benchmark.train), len(benchmark.test), benchmark.n_frames)
    return benchmark


def pruning_scene(n_frames: int = 10, height: int = 64, width: int = 64) -> SceneSpec:
    """
    A 30x30 mover sliding in from the left edge plus a 5x6 static distractor.

    The mover is clipped on the first frame, which makes it the smallest of
    its own detections, so every later frame's mover is strictly larger than
    the video's size threshold. The distractor appears from frame 1 onwards.
    """
    if n_frames < 3:
        raise ConfigurationError("the pruning scene needs at least 3 frames", ErrorCodes.INVALID_CONFIGURATION)
    speed = 4
    if -speed + speed * (n_frames - 1) + 30 > width:
        raise ConfigurationError(f"{n_frames} frames do not fit a width of {width}",
                                 ErrorCodes.INVALID_CONFIGURATION)
    return SceneSpec(
        height=height, width=width, n_frames=n_frames,
        foreground=ObjectSpec(kind="rect", size=(30, 30), position=(10, -speed), velocity=(0, speed),
                              texture_seed=11, bounce=False),
        distractors=[ObjectSpec(kind="rect", size=(5, 6), position=(height - 14, width - 14),
                                texture_seed=12, enter_frame=1)],
        background_seed=13,
        video_id="pruning-scene",
    )


def write_benchmark(root: Union[str, Path], benchmark: Benchmark) -> None:
    """Write ``root/train/<video>`` and ``root/test/<video>``."""
    root = Path(root)
    for split, videos in (("train", benchmark.train), ("test", benchmark.test)):
        for video in videos:
            save_video(root / split, video)
    logger.info("Wrote benchmark to %s", root)
