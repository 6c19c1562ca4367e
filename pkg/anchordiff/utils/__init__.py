"""
Utility modules for the anchordiff package.

Image resampling, PPM/PGM file access and key = value configuration files.
"""

from .imaging import downsample_mask, mirror, resize_image, resize_nearest
from .netpbm import read_heatmap, read_mask, read_ppm, write_heatmap, write_mask, write_ppm
from .config import build_config, load_config

__all__ = [
    "downsample_mask",
    "mirror",
    "resize_image",
    "resize_nearest",
    "read_heatmap",
    "read_mask",
    "read_ppm",
    "write_heatmap",
    "write_mask",
    "write_ppm",
    "build_config",
    "load_config",
]
