"""
Tests for video directories, image files and configuration files.
"""

import numpy as np
import pytest

from anchordiff.core.model import ModelConfig
from anchordiff.dataset import (
    VideoSample, load_dataset, load_video, read_heatmaps_dir, read_masks_dir, save_video, write_masks_dir
)
from anchordiff.exceptions import ConfigurationError, FileError, ValidationError, ErrorCodes
from anchordiff.inference import InferenceConfig
from anchordiff.trainer import TrainConfig
from anchordiff.utils.config import build_config, load_config, parse_config_text, parse_value
from anchordiff.utils.netpbm import (
    read_heatmap, read_mask, read_pgm, read_ppm, write_heatmap, write_mask, write_pgm, write_ppm
)


class TestNetpbm:
    """Test suite for PPM/PGM reading and writing."""

    def test_ppm(self, tmp_path, rng):
        """Test frames are stored with 8-bit precision."""
        frame = rng.random((3, 5, 7))
        write_ppm(tmp_path / "f.ppm", frame)
        assert (tmp_path / "f.ppm").read_bytes().startswith(b"P6")
        np.testing.assert_allclose(read_ppm(tmp_path / "f.ppm"), np.round(frame * 255) / 255, atol=1e-12)

    def test_mask(self, tmp_path, rng):
        """Test masks are written as 0/255 graymaps."""
        mask = rng.random((6, 4)) > 0.5
        write_mask(tmp_path / "m.pgm", mask)
        assert set(np.unique(read_pgm(tmp_path / "m.pgm")).tolist()) <= {0, 255}
        np.testing.assert_array_equal(read_mask(tmp_path / "m.pgm"), mask)

    def test_heatmap_is_16_bit(self, tmp_path):
        """Test heatmaps keep 16-bit precision and a 65535 maxval."""
        heatmap = np.array([[0.0, 0.5], [0.123456, 1.0]])
        write_heatmap(tmp_path / "h.pgm", heatmap)
        header = (tmp_path / "h.pgm").read_bytes()[:20]
        assert header.startswith(b"P5") and b"65535" in header
        values = read_pgm(tmp_path / "h.pgm")
        np.testing.assert_array_equal(values, np.round(heatmap * 65535))
        np.testing.assert_allclose(read_heatmap(tmp_path / "h.pgm"), heatmap, atol=0.5 / 65535)

    def test_corrupt_header(self, tmp_path):
        """Test a damaged graymap raises FileError naming the file."""
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P5\nxx yy\n255\n\x00")
        with pytest.raises(FileError) as exc:
            read_pgm(path)
        assert exc.value.error_code == ErrorCodes.FILE_CORRUPTED
        assert "bad.pgm" in str(exc.value)

    def test_missing_file(self, tmp_path):
        """Test reading a missing file raises FileError."""
        with pytest.raises(FileError):
            read_ppm(tmp_path / "none.ppm")

    def test_ppm_is_not_a_mask(self, tmp_path, rng):
        """Test a colour image is rejected where a graymap is expected."""
        write_ppm(tmp_path / "f.ppm", rng.random((3, 4, 4)))
        with pytest.raises(FileError):
            read_pgm(tmp_path / "f.ppm")

    def test_unsupported_bit_depth(self, tmp_path):
        """Test only 8 and 16 bit graymaps are written."""
        with pytest.raises(FileError):
            write_pgm(tmp_path / "x.pgm", np.zeros((2, 2), dtype=np.int64), bit_depth=12)


class TestVideoDirectories:
    """Test suite for the video directory layout."""

    def test_save_and_load(self, tmp_path, moving_video):
        """Test a saved video loads with the same masks and frame count."""
        directory = save_video(tmp_path, moving_video)
        assert directory == tmp_path / "moving"
        video = load_video(directory)
        assert video.video_id == "moving"
        assert len(video) == len(moving_video)
        assert video.frame_shape == (16, 16)
        for a, b in zip(video.masks, moving_video.masks):
            np.testing.assert_array_equal(a, b)
        assert len(video.detections) == len(moving_video.detections)

    def test_masks_optional(self, tmp_path, moving_video):
        """Test videos without a masks directory load with masks None."""
        save_video(tmp_path, VideoSample("bare", moving_video.frames))
        video = load_video(tmp_path / "bare")
        assert video.masks is None
        assert video.detections == []
        with pytest.raises(ValidationError):
            load_video(tmp_path / "bare", require_masks=True)

    def test_count_mismatch(self, tmp_path, moving_video):
        """Test a missing mask file is reported as a count mismatch."""
        directory = save_video(tmp_path, moving_video)
        (directory / "masks" / "00003.pgm").unlink()
        with pytest.raises(ValidationError) as exc:
            load_video(directory)
        assert exc.value.error_code == ErrorCodes.COUNT_MISMATCH

    def test_numeric_order(self, tmp_path):
        """Test numbered files load in numeric order."""
        masks = [np.full((2, 2), bool(t % 2)) for t in range(12)]
        write_masks_dir(tmp_path / "m", masks)
        (tmp_path / "m" / "notes.txt").write_text("ignored")
        loaded = read_masks_dir(tmp_path / "m")
        assert [bool(m[0, 0]) for m in loaded] == [bool(t % 2) for t in range(12)]

    def test_missing_directories(self, tmp_path):
        """Test missing directories raise FileError."""
        with pytest.raises(FileError):
            load_video(tmp_path / "nothing")
        with pytest.raises(FileError):
            load_dataset(tmp_path / "nothing")
        with pytest.raises(FileError):
            read_heatmaps_dir(tmp_path / "nothing")

    def test_empty_frames_dir(self, tmp_path):
        """Test a video without frames is rejected."""
        (tmp_path / "v" / "frames").mkdir(parents=True)
        with pytest.raises(ValidationError):
            load_video(tmp_path / "v")

    def test_sample_validation(self, moving_video):
        """Test frame and mask counts must agree in memory too."""
        with pytest.raises(ValidationError):
            VideoSample("x", moving_video.frames, moving_video.masks[:2])


class TestConfigFiles:
    """Test suite for key = value configuration files."""

    def test_parse_value(self):
        """Test value conversion."""
        assert parse_value("true") is True
        assert parse_value("Off") is False
        assert parse_value("12") == 12
        assert parse_value("0.25") == 0.25
        assert parse_value("4, 8") == (4, 8)
        assert parse_value("0.75,1,1.5") == (0.75, 1, 1.5)
        assert parse_value("adnet") == "adnet"

    def test_parse_text(self):
        """Test comments, blank lines and dashed keys."""
        values = parse_config_text("# model\nembed-dim = 8\n\nvariant = anchor  # branch layout\n")
        assert values == {"embed_dim": 8, "variant": "anchor"}

    def test_malformed_line(self):
        """Test a line without '=' reports its position."""
        with pytest.raises(ConfigurationError) as exc:
            parse_config_text("embed_dim 8", source="cfg")
        assert "cfg:1" in str(exc.value)

    def test_build_config(self):
        """Test values reach the dataclass and are validated there."""
        config = build_config(ModelConfig, {"embed_dim": 8, "hidden_channels": (4, 4), "variant": "anchor"})
        assert config.stride == 4
        with pytest.raises(ConfigurationError):
            build_config(ModelConfig, {"embed_dim": -1})

    def test_unknown_key(self):
        """Test unknown keys are rejected by name."""
        with pytest.raises(ConfigurationError) as exc:
            build_config(TrainConfig, {"learning_rate": 0.1})
        assert exc.value.error_code == ErrorCodes.UNKNOWN_CONFIG_KEY
        assert "learning_rate" in str(exc.value)

    def test_load_with_overrides(self, tmp_path):
        """Test keyword overrides win and None overrides are ignored."""
        path = tmp_path / "infer.cfg"
        path.write_text("scales = 0.5, 1.0\nmirror = false\n")
        config = load_config(path, InferenceConfig, threshold=0.4, mirror=None)
        assert config.scales == (0.5, 1.0)
        assert config.mirror is False
        assert config.threshold == 0.4

    def test_missing_config_file(self, tmp_path):
        """Test a missing config file raises FileError."""
        with pytest.raises(FileError):
            load_config(tmp_path / "absent.cfg", TrainConfig)
