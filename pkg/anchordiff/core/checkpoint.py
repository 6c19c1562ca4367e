"""
Binary checkpoint format for network parameters.

Layout (all integers little-endian):

    magic            8 bytes   b"ADNETCKP"
    version          u16
    config length    u32, followed by the config block
    tensor count     u32
    per tensor:      u16 name length, UTF-8 name, u8 rank, rank x u32 dims,
                     prod(dims) x f64 values (row-major)

The config block stores embed_dim, fusion_dim, the hidden channel list,
encoder kernel, downsampling flag, stride, leaky slope, dropout rate,
variant name and init seed.
"""

import logging
import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from .model import AdNetParams, ModelConfig
from .tensor import Tensor
from ..exceptions import AnchorDiffError, FileError, ErrorCodes

logger = logging.getLogger(__name__)

MAGIC = b"ADNETCKP"
FORMAT_VERSION = 1


def _encode_config(config: ModelConfig) -> bytes:
    block = bytearray()
    block += struct.pack("<II", config.embed_dim, config.fusion_dim)
    block += struct.pack("<I", len(config.hidden_channels))
    block += struct.pack(f"<{len(config.hidden_channels)}I", *config.hidden_channels)
    block += struct.pack("<BBI", config.encoder_kernel, int(config.downsample), config.stride)
    block += struct.pack("<dd", config.leaky_slope, config.dropout_rate)
    variant = config.variant.value.encode("utf-8")
    block += struct.pack("<B", len(variant)) + variant
    block += struct.pack("<Q", config.init_seed)
    return bytes(block)


class _Reader:
    """Sequential little-endian reader that reports truncation as FileError."""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise FileError("checkpoint is truncated", ErrorCodes.FILE_CORRUPTED,
                            details={"offset": self.offset, "needed": n})
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _decode_config(block: bytes) -> ModelConfig:
    reader = _Reader(block)
    embed_dim, fusion_dim = reader.unpack("<II")
    (n_hidden,) = reader.unpack("<I")
    hidden = reader.unpack(f"<{n_hidden}I")
    kernel, downsample, stride = reader.unpack("<BBI")
    leaky_slope, dropout_rate = reader.unpack("<dd")
    (variant_len,) = reader.unpack("<B")
    variant = reader.take(variant_len).decode("utf-8")
    (init_seed,) = reader.unpack("<Q")

    config = ModelConfig(
        embed_dim=embed_dim, fusion_dim=fusion_dim, hidden_channels=tuple(hidden),
        encoder_kernel=kernel, downsample=bool(downsample), leaky_slope=leaky_slope,
        dropout_rate=dropout_rate, variant=variant, init_seed=init_seed,
    )
    if config.stride != stride:
        raise FileError(f"checkpoint stride {stride} disagrees with its layer list",
                        ErrorCodes.FILE_CORRUPTED)
    return config


def encode_checkpoint(params: AdNetParams) -> bytes:
    """Serialize parameters and their configuration."""
    out = bytearray(MAGIC)
    out += struct.pack("<H", FORMAT_VERSION)
    config_block = _encode_config(params.config)
    out += struct.pack("<I", len(config_block)) + config_block
    out += struct.pack("<I", len(params))
    for name, tensor in params.items():
        encoded_name = name.encode("utf-8")
        out += struct.pack("<H", len(encoded_name)) + encoded_name
        out += struct.pack("<B", tensor.ndim)
        out += struct.pack(f"<{tensor.ndim}I", *tensor.shape)
        out += tensor.data.astype("<f8").tobytes()
    return bytes(out)


def decode_checkpoint(data: bytes) -> AdNetParams:
    """
    Rebuild parameters from checkpoint bytes.

    Raises:
        FileError: On a bad magic string, unknown version or truncated data.
    """
    reader = _Reader(data)
    if reader.take(len(MAGIC)) != MAGIC:
        raise FileError("not a checkpoint file (bad magic)", ErrorCodes.INVALID_FILE_FORMAT)
    (version,) = reader.unpack("<H")
    if version != FORMAT_VERSION:
        raise FileError(f"unsupported checkpoint version {version}", ErrorCodes.UNSUPPORTED_VERSION)

    (config_len,) = reader.unpack("<I")
    config = _decode_config(reader.take(config_len))

    (count,) = reader.unpack("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<B")
        dims = reader.unpack(f"<{rank}I")
        n_values = int(np.prod(dims)) if rank else 1
        values = np.frombuffer(reader.take(8 * n_values), dtype="<f8").astype(np.float64)
        tensors[name] = Tensor(values.reshape(dims), requires_grad=True)

    if reader.offset != len(data):
        raise FileError("trailing bytes after the last tensor", ErrorCodes.FILE_CORRUPTED)
    return AdNetParams(config, tensors)


def save_checkpoint(path: Union[str, Path], params: AdNetParams) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_checkpoint(params))
    except AnchorDiffError:
        raise
    except Exception as e:
        raise FileError(f"Failed to write checkpoint {path}: {e}", ErrorCodes.FILE_CORRUPTED,
                        details={"path": str(path)})
    logger.info("Saved checkpoint with %d tensors to %s", len(params), path)


def load_checkpoint(path: Union[str, Path]) -> AdNetParams:
    path = Path(path)
    if not path.exists():
        raise FileError(f"Checkpoint not found: {path}", ErrorCodes.FILE_NOT_FOUND,
                        details={"path": str(path)})
    try:
        params = decode_checkpoint(path.read_bytes())
    except FileError as e:
        raise FileError(f"{path}: {e.message}", e.error_code, details={"path": str(path)})
    except AnchorDiffError:
        raise
    except Exception as e:
        raise FileError(f"Failed to read checkpoint {path}: {e}", ErrorCodes.FILE_CORRUPTED,
                        details={"path": str(path)})
    logger.debug("Loaded checkpoint %s (%s)", path, params.config.variant.value)
    return params
