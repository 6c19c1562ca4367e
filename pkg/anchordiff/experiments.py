"""
Ablation study over network variants on the synthetic benchmark.

Each (variant, seed) run trains a fresh network, segments the test split and
records mean region similarity and the late-frame embedding drift.
"""

import csv
import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .core.model import ModelConfig, Variant, build_model, parse_variant
from .exceptions import AnchorDiffError, ConfigurationError, FileError, ErrorCodes
from .inference import InferenceConfig, VideoSegmenter
from .metrics import embedding_drift, evaluate_dataset, tail_mean
from .synthdata import Benchmark, BenchmarkConfig, gen_benchmark
from .trainer import TrainConfig, Trainer

logger = logging.getLogger(__name__)

DEFAULT_VARIANTS = (Variant.BASELINE, Variant.ANCHOR_DIFFUSION, Variant.ADNET)
DEFAULT_SEEDS = (0, 1, 2)

# Ablation training: whole, upright frames and a poly schedule that reaches
# zero on the last step.
ABLATION_TRAIN_DEFAULTS = {
    "base_lr": 0.05,
    "max_iter": 2000,
    "augment_crop": False,
    "augment_rotate": False,
}


@dataclass
class AblationRow:
    variant: str
    seed: int
    test_j: float
    drift_tail: Optional[float]
    final_loss: float


def evaluate_variant(model, benchmark: Benchmark, inference: InferenceConfig):
    """Mean test J and mean tail drift of a trained model."""
    segmenter = VideoSegmenter(model, inference)
    items, tails = [], []
    for video in benchmark.test:
        result = segmenter.segment_video(video)
        items.append((video.video_id, result.masks, video.masks, result.heatmaps))
        tail = tail_mean(embedding_drift(model, video))
        if tail is not None:
            tails.append(tail)
    report = evaluate_dataset(items)
    return report.j_mean, (float(np.mean(tails)) if tails else None)


def run_ablation(variants: Sequence[Union[Variant, str]] = DEFAULT_VARIANTS,
                 seeds: Sequence[int] = DEFAULT_SEEDS,
                 benchmark_config: Optional[BenchmarkConfig] = None,
                 train_config: Optional[TrainConfig] = None,
                 model_config: Optional[ModelConfig] = None,
                 inference_config: Optional[InferenceConfig] = None) -> List[AblationRow]:
    """
    Train every variant once per seed on the same benchmark.

    The seed drives weight initialisation and the training stream; the
    benchmark itself is fixed by ``benchmark_config.seed``. Training defaults
    to :data:`ABLATION_TRAIN_DEFAULTS`; inference to a single scale without
    mirroring.
    """
    if not variants or not seeds:
        raise ConfigurationError("ablation needs at least one variant and one seed",
                                 ErrorCodes.INVALID_CONFIGURATION)
    benchmark = gen_benchmark(benchmark_config or BenchmarkConfig())
    train_config = train_config or TrainConfig(**ABLATION_TRAIN_DEFAULTS)
    model_config = model_config or ModelConfig()
    inference_config = inference_config or InferenceConfig(scales=(1.0,), mirror=False)

    rows = []
    for variant in (parse_variant(v) for v in variants):
        for seed in seeds:
            model = build_model(dataclasses.replace(model_config, variant=variant, init_seed=seed))
            result = Trainer(model, dataclasses.replace(train_config, seed=seed)).train_loop(benchmark.train)
            test_j, drift = evaluate_variant(model, benchmark, inference_config)
            rows.append(AblationRow(variant.value, seed, test_j, drift, result.final_loss))
            logger.info("ablation %s seed %d: J %.4f drift %s loss %.5f",
                        variant.value, seed, test_j, "n/a" if drift is None else f"{drift:.4f}",
                        result.final_loss)
    return rows


def summarize_ablation(rows: Sequence[AblationRow]) -> Dict[str, Dict[str, Optional[float]]]:
    """Per-variant means over seeds, in first-seen variant order."""
    summary: Dict[str, Dict[str, Optional[float]]] = {}
    for variant in dict.fromkeys(r.variant for r in rows):
        mine = [r for r in rows if r.variant == variant]
        drifts = [r.drift_tail for r in mine if r.drift_tail is not None]
        summary[variant] = {
            "test_j": float(np.mean([r.test_j for r in mine])),
            "drift_tail": float(np.mean(drifts)) if drifts else None,
        }
    return summary


def write_ablation_csv(path: Union[str, Path], rows: Sequence[AblationRow]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["variant", "seed", "test_j", "drift_tail", "final_loss"])
            for r in rows:
                writer.writerow([r.variant, r.seed, f"{r.test_j:.6f}",
                                 "" if r.drift_tail is None else f"{r.drift_tail:.6f}", f"{r.final_loss:.6f}"])
    except AnchorDiffError:
        raise
    except Exception as e:
        raise FileError(f"Failed to write ablation table {path}: {e}", ErrorCodes.FILE_CORRUPTED,
                        details={"path": str(path)})
