"""
Tests for the command-line interface.
"""

import pytest

from anchordiff import __version__, get_version_info
from anchordiff.cli import EXIT_INPUT, EXIT_OK, build_parser, run

BENCHMARK_CFG = """\
n_train = 1
n_test = 1
n_frames = 3
height = 32
width = 32
"""

TRAIN_CFG = """\
# tiny network for tests
model_hidden_channels = 4, 4
model_embed_dim = 4
model_fusion_dim = 8
input_size = 16
batch_size = 1
iterations = 2
"""


@pytest.fixture
def workspace(tmp_path):
    (tmp_path / "bench.cfg").write_text(BENCHMARK_CFG)
    (tmp_path / "train.cfg").write_text(TRAIN_CFG)
    assert run(["gen-data", "--out", str(tmp_path / "data"), "--seed", "0",
                "--config", str(tmp_path / "bench.cfg")]) == EXIT_OK
    return tmp_path


def _train(workspace, out="run", seed="0"):
    return run(["train", "--dataset", str(workspace / "data" / "train"), "--out", str(workspace / out),
                "--seed", seed, "--config", str(workspace / "train.cfg")])


class TestUsage:
    """Test suite for argument handling and exit codes."""

    def test_version(self, capsys):
        """Test --version prints the package version."""
        assert run(["--version"]) == EXIT_OK
        assert __version__ in capsys.readouterr().out

    def test_version_info(self):
        """Test the version info lists every variant and the numeric stack."""
        info = get_version_info()
        assert info["version"] == __version__
        assert "adnet" in info["variants"]
        assert "numpy" in info and "scipy" in info

    def test_unknown_flag(self):
        """Test an unknown flag is a usage error."""
        assert run(["train", "--bogus"]) == EXIT_INPUT

    def test_missing_command(self):
        """Test a command is required."""
        assert run([]) == EXIT_INPUT

    def test_ablate_requires_seed(self, tmp_path):
        """Test ablate refuses to run without --seed."""
        assert run(["ablate", "--out", str(tmp_path / "a.csv")]) == EXIT_INPUT

    def test_unknown_variant(self, tmp_path):
        """Test unknown variant names are rejected."""
        assert run(["ablate", "--seed", "0", "--variants", "baseline,magic", "--out", str(tmp_path / "a.csv")]) \
            == EXIT_INPUT

    def test_parser_lists_commands(self):
        """Test every command is registered."""
        parser = build_parser()
        args = parser.parse_args(["eval", "--pred", "p", "--gt", "g", "--out", "o"])
        assert args.command == "eval"

    def test_missing_dataset(self, tmp_path, capsys):
        """Test a missing dataset is reported as bad input."""
        assert run(["train", "--dataset", str(tmp_path / "none"), "--out", str(tmp_path / "run"),
                    "--seed", "0"]) == EXIT_INPUT
        assert "anchordiff train" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path, workspace):
        """Test an unknown configuration key is bad input."""
        (tmp_path / "bad.cfg").write_text("learning_rate = 0.1\n")
        assert run(["train", "--dataset", str(workspace / "data" / "train"), "--out", str(tmp_path / "run"),
                    "--seed", "0", "--config", str(tmp_path / "bad.cfg")]) == EXIT_INPUT

    def test_infer_needs_one_source(self, tmp_path):
        """Test infer needs exactly one of --video and --dataset."""
        assert run(["infer", "--checkpoint", str(tmp_path / "m.ckpt"), "--out", str(tmp_path / "o")]) == EXIT_INPUT


class TestCommands:
    """Test suite for individual commands."""

    def test_gen_data_layout(self, workspace):
        """Test the benchmark directory layout."""
        video = workspace / "data" / "train" / "train-000"
        assert len(list((video / "frames").glob("*.ppm"))) == 3
        assert len(list((video / "masks").glob("*.pgm"))) == 3
        assert (video / "detections.txt").exists()

    def test_gen_pruning_scene(self, tmp_path):
        """Test the pruning-scene preset."""
        assert run(["gen-data", "--preset", "pruning-scene", "--out", str(tmp_path), "--seed", "0"]) == EXIT_OK
        assert len(list((tmp_path / "pruning-scene" / "frames").glob("*.ppm"))) == 10

    def test_eval_identical(self, workspace, capsys):
        """Test ground truth scored against itself."""
        gt = str(workspace / "data" / "test")
        assert run(["eval", "--pred", gt, "--gt", gt, "--out", str(workspace / "report")]) == EXIT_OK
        out = capsys.readouterr().out
        assert "J mean        1.000" in out
        assert "F mean        1.000" in out
        assert (workspace / "report" / "report.csv").exists()
        assert (workspace / "report" / "pr.csv").exists()
        assert (workspace / "report" / "summary.txt").read_text() == out

    def test_prune_without_detections_is_identity(self, workspace):
        """Test masks pass through byte for byte when there are no detections."""
        masks = workspace / "data" / "test" / "test-000" / "masks"
        empty = workspace / "empty.txt"
        empty.write_text("")
        assert run(["prune", "--masks", str(masks), "--detections", str(empty),
                    "--out", str(workspace / "pruned")]) == EXIT_OK
        for original in sorted(masks.glob("*.pgm")):
            assert (workspace / "pruned" / original.name).read_bytes() == original.read_bytes()

    def test_prune_masks_needs_detections(self, workspace):
        """Test --masks without --detections is bad input."""
        masks = workspace / "data" / "test" / "test-000" / "masks"
        assert run(["prune", "--masks", str(masks), "--out", str(workspace / "p")]) == EXIT_INPUT

    def test_full_pipeline(self, workspace, capsys):
        """Test train, infer, prune, eval and drift end to end."""
        assert _train(workspace) == EXIT_OK
        checkpoint = workspace / "run" / "model.ckpt"
        assert checkpoint.exists()
        assert (workspace / "run" / "loss.csv").read_text().count("\n") == 3

        test_root = workspace / "data" / "test"
        assert run(["infer", "--checkpoint", str(checkpoint), "--dataset", str(test_root),
                    "--out", str(workspace / "pred"), "--scales", "1.0,2.0"]) == EXIT_OK
        assert len(list((workspace / "pred" / "test-000" / "heatmaps").glob("*.pgm"))) == 3

        assert run(["prune", "--pred", str(workspace / "pred"), "--dataset", str(test_root),
                    "--out", str(workspace / "pruned")]) == EXIT_OK
        assert len(list((workspace / "pruned" / "test-000" / "masks").glob("*.pgm"))) == 3

        capsys.readouterr()
        assert run(["eval", "--pred", str(workspace / "pred"), "--gt", str(test_root),
                    "--out", str(workspace / "report")]) == EXIT_OK
        assert "J mean" in capsys.readouterr().out

        assert run(["drift", "--checkpoint", str(checkpoint), "--video", str(test_root / "test-000"),
                    "--out", str(workspace / "drift.csv")]) == EXIT_OK
        lines = (workspace / "drift.csv").read_text().splitlines()
        assert lines[0] == "frame,drift"
        assert len(lines) == 4

    def test_single_video_infer(self, workspace):
        """Test inference on one video directory."""
        assert _train(workspace) == EXIT_OK
        video = workspace / "data" / "test" / "test-000"
        assert run(["infer", "--checkpoint", str(workspace / "run" / "model.ckpt"), "--video", str(video),
                    "--out", str(workspace / "one"), "--no-mirror", "--scales", "1"]) == EXIT_OK
        assert len(list((workspace / "one" / "masks").glob("*.pgm"))) == 3

    @pytest.mark.slow
    def test_training_is_deterministic(self, workspace):
        """Test two runs with the same seed write identical checkpoints."""
        assert _train(workspace, "run_a") == EXIT_OK
        assert _train(workspace, "run_b") == EXIT_OK
        assert (workspace / "run_a" / "model.ckpt").read_bytes() == (workspace / "run_b" / "model.ckpt").read_bytes()
        assert (workspace / "run_a" / "loss.csv").read_text() == (workspace / "run_b" / "loss.csv").read_text()
