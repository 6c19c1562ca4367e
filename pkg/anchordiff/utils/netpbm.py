"""
Portable pixmap / graymap reading and writing through Pillow.

Frames are exchanged as 8-bit binary PPM, masks as 8-bit PGM (0/255) and
heatmaps as 16-bit PGM (round(p * 65535)).
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from ..exceptions import AnchorDiffError, FileError, ShapeError, ErrorCodes

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _open(path: PathLike) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileError(f"File not found: {path}", ErrorCodes.FILE_NOT_FOUND, details={"path": str(path)})
    try:
        with Image.open(path) as img:
            img.load()
            return np.array(img)
    except Exception as e:
        raise FileError(f"Cannot decode image {path}: {e}", ErrorCodes.FILE_CORRUPTED,
                        details={"path": str(path)})


def _save(path: PathLike, array: np.ndarray) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(array).save(path, format="PPM")
    except AnchorDiffError:
        raise
    except Exception as e:
        raise FileError(f"Failed to write image {path}: {e}", ErrorCodes.FILE_CORRUPTED,
                        details={"path": str(path)})


def read_ppm(path: PathLike) -> np.ndarray:
    """Read a colour frame as a float64 3 x H x W array in [0, 1]."""
    pixels = _open(path)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise FileError(f"{path} is not an RGB pixmap (shape {pixels.shape})", ErrorCodes.INVALID_FILE_FORMAT,
                        details={"path": str(path)})
    return pixels.transpose(2, 0, 1).astype(np.float64) / 255.0


def write_ppm(path: PathLike, frame: np.ndarray) -> None:
    """Write a 3 x H x W float frame in [0, 1] as an 8-bit pixmap."""
    if frame.ndim != 3 or frame.shape[0] != 3:
        raise ShapeError(f"frames must be 3 x H x W, got {frame.shape}", ErrorCodes.DIMENSION_MISMATCH)
    pixels = np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
    _save(path, np.ascontiguousarray(pixels.transpose(1, 2, 0)))


def read_pgm(path: PathLike) -> np.ndarray:
    """Read a graymap as an integer H x W array (8- or 16-bit values)."""
    pixels = _open(path)
    if pixels.ndim != 2:
        raise FileError(f"{path} is not a graymap (shape {pixels.shape})", ErrorCodes.INVALID_FILE_FORMAT,
                        details={"path": str(path)})
    return pixels.astype(np.int64)


def write_pgm(path: PathLike, values: np.ndarray, bit_depth: int = 8) -> None:
    """Write integer values as an 8-bit or 16-bit graymap."""
    if values.ndim != 2:
        raise ShapeError(f"graymaps must be 2-D, got {values.shape}", ErrorCodes.DIMENSION_MISMATCH)
    if bit_depth == 8:
        _save(path, np.clip(values, 0, 255).astype(np.uint8))
    elif bit_depth == 16:
        # Pillow writes 32-bit integer images as maxval-65535 graymaps.
        _save(path, np.clip(values, 0, 65535).astype(np.int32))
    else:
        raise FileError(f"unsupported graymap bit depth {bit_depth}", ErrorCodes.INVALID_FILE_FORMAT)


def read_mask(path: PathLike) -> np.ndarray:
    """Read an 8-bit mask, binarised at 128."""
    return read_pgm(path) >= 128


def write_mask(path: PathLike, mask: np.ndarray) -> None:
    write_pgm(path, np.where(mask, 255, 0), bit_depth=8)


def read_heatmap(path: PathLike) -> np.ndarray:
    """Read a 16-bit heatmap back into [0, 1]."""
    return read_pgm(path).astype(np.float64) / 65535.0


def write_heatmap(path: PathLike, heatmap: np.ndarray) -> None:
    write_pgm(path, np.round(np.clip(heatmap, 0.0, 1.0) * 65535.0).astype(np.int64), bit_depth=16)
