"""
Command-line interface.

    anchordiff gen-data --out data --seed 0
    anchordiff train    --dataset data/train --out run --seed 0
    anchordiff infer    --checkpoint run/model.ckpt --dataset data/test --out pred
    anchordiff prune    --pred pred --dataset data/test --out pruned
    anchordiff eval     --pred pruned --gt data/test --out report
    anchordiff drift    --checkpoint run/model.ckpt --video data/test/test-000 --out drift.csv
    anchordiff ablate   --seed 0,1,2 --out ablation.csv

Exit status is 0 on success, 1 on bad input or usage and 2 on any other
failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .core.checkpoint import load_checkpoint, save_checkpoint
from .core.model import AnchorDiffusionNet, ModelConfig, Variant, build_model
from .dataset import (
    DETECTIONS_FILE, HEATMAPS_DIR, MASKS_DIR, load_dataset, load_video, read_heatmaps_dir, read_masks_dir,
    save_video, write_masks_dir
)
from .exceptions import INPUT_ERRORS, ConfigurationError, FileError, ValidationError, ErrorCodes
from .experiments import ABLATION_TRAIN_DEFAULTS, run_ablation, summarize_ablation, write_ablation_csv
from .inference import InferenceConfig, VideoSegmenter, write_predictions
from .metrics import embedding_drift, evaluate_dataset, write_drift_csv
from .pruning import InstancePruner, read_detections
from .synthdata import BenchmarkConfig, gen_benchmark, gen_video, pruning_scene, write_benchmark
from .trainer import TrainConfig, Trainer, write_history_csv
from .utils.config import build_config, read_config_file

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "model.ckpt"
LOSS_NAME = "loss.csv"
REPORT_NAME = "report.csv"
SUMMARY_NAME = "summary.txt"
PR_NAME = "pr.csv"
MODEL_PREFIX = "model_"

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INTERNAL = 2

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class UsageError(Exception):
    """Raised instead of exiting when the command line cannot be parsed."""


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


def _float_list(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _variant_list(text: str) -> Tuple[str, ...]:
    names = tuple(part.strip() for part in text.split(",") if part.strip())
    known = [v.value for v in Variant]
    for name in names:
        if name not in known:
            raise argparse.ArgumentTypeError(f"unknown variant {name!r}; choose from {', '.join(known)}")
    return names


def _split_train_config(values: Dict[str, Any]) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    """Separate ``model_*`` keys (ModelConfig) from TrainConfig keys."""
    train, model = {}, {}
    for key, value in values.items():
        if key.startswith(MODEL_PREFIX):
            model[key[len(MODEL_PREFIX):]] = value
        else:
            train[key] = value
    return train, model


def _training_configs(args: argparse.Namespace) -> Tuple[TrainConfig, ModelConfig]:
    values = read_config_file(args.config) if args.config else {}
    source = args.config or "<command line>"
    train_values, model_values = _split_train_config(values)
    train_values["seed"] = args.seed
    if args.iterations is not None:
        train_values["iterations"] = args.iterations
    if getattr(args, "variant", None):
        model_values["variant"] = args.variant
    return build_config(TrainConfig, train_values, source), build_config(ModelConfig, model_values, source)


def _inference_config(args: argparse.Namespace) -> InferenceConfig:
    values: Dict[str, Any] = {"mirror": not args.no_mirror, "threshold": args.threshold}
    if args.scales is not None:
        values["scales"] = args.scales
    return build_config(InferenceConfig, values, "<command line>")


def _load_model(path: str) -> AnchorDiffusionNet:
    params = load_checkpoint(path)
    model = AnchorDiffusionNet(params)
    logger.info("Loaded %s network (%d parameters) from %s",
                params.config.variant.value, params.num_parameters, path)
    return model


def _require_one(args: argparse.Namespace, *names: str) -> str:
    given = [n for n in names if getattr(args, n) is not None]
    if len(given) != 1:
        flags = " or ".join(f"--{n}" for n in names)
        raise ConfigurationError(f"{args.command}: give exactly one of {flags}", ErrorCodes.INCOMPATIBLE_OPTIONS)
    return given[0]


def cmd_gen_data(args: argparse.Namespace) -> int:
    if args.preset == "pruning-scene":
        video = gen_video(pruning_scene(), np.random.default_rng(args.seed))
        save_video(args.out, video)
        logger.info("Wrote %s to %s", video.video_id, args.out)
        return EXIT_OK

    values = read_config_file(args.config) if args.config else {}
    values["seed"] = args.seed
    config = build_config(BenchmarkConfig, values, args.config or "<command line>")
    write_benchmark(args.out, gen_benchmark(config))
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    train_config, model_config = _training_configs(args)
    videos = load_dataset(args.dataset, require_masks=True)
    model = build_model(model_config)
    result = Trainer(model, train_config).train_loop(videos)

    out = Path(args.out)
    save_checkpoint(out / CHECKPOINT_NAME, result.params)
    write_history_csv(out / LOSS_NAME, result.history)
    logger.info("Final loss %.5f; checkpoint written to %s", result.final_loss, out / CHECKPOINT_NAME)
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    source = _require_one(args, "video", "dataset")
    segmenter = VideoSegmenter(_load_model(args.checkpoint), _inference_config(args))
    out = Path(args.out)
    if source == "video":
        write_predictions(out, segmenter.segment_video(load_video(args.video)))
    else:
        for video in load_dataset(args.dataset):
            write_predictions(out / video.video_id, segmenter.segment_video(video))
    return EXIT_OK


def cmd_prune(args: argparse.Namespace) -> int:
    pruner = InstancePruner()
    out = Path(args.out)
    if args.masks is not None:
        if args.detections is None:
            raise ConfigurationError("prune: --masks needs --detections", ErrorCodes.INCOMPATIBLE_OPTIONS)
        masks = read_masks_dir(args.masks)
        write_masks_dir(out, pruner.prune(masks, read_detections(args.detections)))
        return EXIT_OK

    if args.pred is None or args.dataset is None:
        raise ConfigurationError("prune: give --masks and --detections, or --pred and --dataset",
                                 ErrorCodes.INCOMPATIBLE_OPTIONS)
    if not Path(args.dataset).is_dir():
        raise FileError(f"Dataset root not found: {args.dataset}", ErrorCodes.FILE_NOT_FOUND,
                        details={"path": args.dataset})
    for video_dir in sorted(p for p in Path(args.dataset).iterdir() if p.is_dir()):
        masks = read_masks_dir(Path(args.pred) / video_dir.name / MASKS_DIR)
        detections_path = video_dir / DETECTIONS_FILE
        detections = read_detections(detections_path) if detections_path.exists() else []
        write_masks_dir(out / video_dir.name / MASKS_DIR, pruner.prune(masks, detections))
    return EXIT_OK


def _eval_items(pred: Path, gt: Path) -> List[tuple]:
    """Pair predicted and ground-truth sequences; a root holding ``masks/`` is a single video."""
    if (gt / MASKS_DIR).is_dir():
        pairs = [(gt.name, pred, gt)]
    else:
        if not gt.is_dir():
            raise FileError(f"Ground-truth root not found: {gt}", ErrorCodes.FILE_NOT_FOUND,
                            details={"path": str(gt)})
        pairs = [(d.name, pred / d.name, d) for d in sorted(gt.iterdir()) if d.is_dir()]
    if not pairs:
        raise ValidationError(f"no ground-truth videos under {gt}", ErrorCodes.INVALID_INPUT_SIZE)

    items = []
    for video_id, pred_dir, gt_dir in pairs:
        heatmaps_dir = pred_dir / HEATMAPS_DIR
        heatmaps = read_heatmaps_dir(heatmaps_dir) if heatmaps_dir.is_dir() else None
        items.append((video_id, read_masks_dir(pred_dir / MASKS_DIR), read_masks_dir(gt_dir / MASKS_DIR), heatmaps))
    return items


def cmd_eval(args: argparse.Namespace) -> int:
    report = evaluate_dataset(_eval_items(Path(args.pred), Path(args.gt)))
    out = Path(args.out)
    report.write_csv(out / REPORT_NAME)
    report.write_pr_csv(out / PR_NAME)
    summary = report.summary_text()
    (out / SUMMARY_NAME).write_text(summary, encoding="utf-8")
    sys.stdout.write(summary)
    return EXIT_OK


def cmd_drift(args: argparse.Namespace) -> int:
    video = load_video(args.video, require_masks=True)
    write_drift_csv(args.out, embedding_drift(_load_model(args.checkpoint), video))
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    values = read_config_file(args.config) if args.config else {}
    train_values, model_values = _split_train_config(values)
    if args.iterations is not None:
        train_values["iterations"] = args.iterations
    source = args.config or "<command line>"
    bench = BenchmarkConfig(seed=args.benchmark_seed)
    train_config = build_config(TrainConfig, {**ABLATION_TRAIN_DEFAULTS, **train_values}, source)
    rows = run_ablation(args.variants, args.seed, bench, train_config,
                        build_config(ModelConfig, model_values, source))
    write_ablation_csv(args.out, rows)
    for variant, stats in summarize_ablation(rows).items():
        drift = "n/a" if stats["drift_tail"] is None else f"{stats['drift_tail']:.4f}"
        sys.stdout.write(f"{variant:<18} J {stats['test_j']:.4f}  drift {drift}\n")
    return EXIT_OK


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="anchordiff", description="Anchor-diffusion video object segmentation")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("gen-data", help="generate the synthetic benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", help="BenchmarkConfig key = value file")
    p.add_argument("--preset", choices=["benchmark", "pruning-scene"], default="benchmark")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a network and write a checkpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", help="TrainConfig file; model_* keys configure the network")
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--iterations", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="segment videos with a trained network")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--video")
    p.add_argument("--dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--scales", type=_float_list)
    p.add_argument("--no-mirror", action="store_true")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("prune", help="remove small static instances from predicted masks")
    p.add_argument("--masks")
    p.add_argument("--detections")
    p.add_argument("--pred")
    p.add_argument("--dataset")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("drift", help="foreground embedding drift of one video")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--video", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_drift)

    p = sub.add_parser("ablate", help="train and compare network variants")
    p.add_argument("--seed", type=_int_list, required=True, help="comma-separated training seeds")
    p.add_argument("--variants", type=_variant_list, default=("baseline", "anchor-diffusion", "adnet"))
    p.add_argument("--benchmark-seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--iterations", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run one command and return its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_INPUT
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)
    try:
        return args.func(args)
    except INPUT_ERRORS as e:
        logger.error("%s: %s", args.command, e)
        sys.stderr.write(f"anchordiff {args.command}: {e}\n")
        return EXIT_INPUT
    except Exception as e:
        logger.exception("%s failed", args.command)
        sys.stderr.write(f"anchordiff {args.command}: internal error: {e}\n")
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
