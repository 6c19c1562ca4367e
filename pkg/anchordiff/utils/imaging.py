"""
Array-level image helpers shared by training, inference and evaluation.

Frames are float64 arrays shaped 3 x H x W with values in [0, 1];
masks are boolean H x W arrays.
"""

import numpy as np

from ..core.ops import interpolation_matrix
from ..exceptions import ShapeError, ErrorCodes


def resize_image(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """
    Bilinear resize of a C x H x W (or H x W) array.

    Uses the same interpolation weights as ``ops.bilinear_resize``.
    """
    squeeze = image.ndim == 2
    data = image[None] if squeeze else image
    if data.ndim != 3:
        raise ShapeError(f"resize_image expects 2-D or 3-D input, got shape {image.shape}",
                         ErrorCodes.DIMENSION_MISMATCH)
    ry = interpolation_matrix(data.shape[1], out_h)
    rx = interpolation_matrix(data.shape[2], out_w)
    out = ry @ data.astype(np.float64) @ rx.T
    return out[0] if squeeze else out


def resize_nearest(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbour resize of an H x W mask; keeps it binary."""
    h, w = mask.shape
    rows = np.minimum(((np.arange(out_h) + 0.5) * h / out_h).astype(int), h - 1)
    cols = np.minimum(((np.arange(out_w) + 0.5) * w / out_w).astype(int), w - 1)
    return mask[rows][:, cols]


def downsample_mask(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """
    Majority-vote downsample of a binary mask by an integer factor.

    A cell is foreground when at least half of its block is foreground.
    """
    h, w = mask.shape
    if h % out_h or w % out_w or h // out_h != w // out_w:
        raise ShapeError(
            f"cannot downsample a {h}x{w} mask to {out_h}x{out_w} by an integer factor",
            ErrorCodes.STRIDE_INDIVISIBLE
        )
    factor = h // out_h
    blocks = mask.astype(np.float64).reshape(out_h, factor, out_w, factor)
    return blocks.mean(axis=(1, 3)) >= 0.5


def mirror(image: np.ndarray) -> np.ndarray:
    """Flip the last (width) axis."""
    return np.ascontiguousarray(image[..., ::-1])
