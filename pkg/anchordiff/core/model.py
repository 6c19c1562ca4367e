"""
Anchor-diffusion segmentation network.

A small convolutional encoder embeds the anchor frame and the current frame.
Three parallel branches re-encode the current frame: the embedding itself
(skip), the embedding diffused through the anchor-to-current transition
matrix, and the same non-local operation applied within the current frame.
Their concatenation is reduced by a 1x1 convolution and classified per pixel.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import ops
from .tensor import Tensor
from ..algorithms import SegmentationModel
from ..exceptions import ConfigurationError, ShapeError, ValidationError, ErrorCodes

logger = logging.getLogger(__name__)


class Variant(Enum):
    """Branch layouts, from the plain encoder up to the full network."""
    BASELINE = "baseline"
    INTRA = "intra"
    ANCHOR = "anchor"
    ANCHOR_DIFFUSION = "anchor-diffusion"
    ADNET = "adnet"


class Mode(Enum):
    TRAIN = "train"
    EVAL = "eval"


# Branches concatenated (in this order) ahead of the fusion convolution.
VARIANT_BRANCHES = {
    Variant.BASELINE: ("skip",),
    Variant.INTRA: ("skip", "intra"),
    Variant.ANCHOR: ("skip", "anchor"),
    Variant.ANCHOR_DIFFUSION: ("skip", "diffusion"),
    Variant.ADNET: ("skip", "diffusion", "intra"),
}


def parse_variant(value: Union[Variant, str]) -> Variant:
    if isinstance(value, Variant):
        return value
    try:
        return Variant(str(value).lower())
    except ValueError:
        choices = ", ".join(v.value for v in Variant)
        raise ConfigurationError(
            f"Unknown model variant: {value} (choose from {choices})",
            ErrorCodes.INVALID_CONFIGURATION
        )


def parse_mode(value: Union[Mode, str]) -> Mode:
    if isinstance(value, Mode):
        return value
    try:
        return Mode(str(value).lower())
    except ValueError:
        raise ConfigurationError(f"Unknown forward mode: {value}", ErrorCodes.INVALID_CONFIGURATION)


@dataclass
class ModelConfig:
    """
    Architecture settings.

    Attributes:
        embed_dim: Pixel embedding width c.
        fusion_dim: Output channels of the fusion 1x1 convolution.
        hidden_channels: Channels of the encoder layers before the embedding layer.
        encoder_kernel: Encoder kernel size (3, or 1 for the pointwise encoder).
        downsample: Whether the hidden encoder layers use stride 2.
        leaky_slope: Negative slope of every leaky ReLU.
        dropout_rate: Dropout probability after the fusion convolution.
        variant: Which branches feed the fusion convolution.
        init_seed: Seed for weight initialisation.
    """
    embed_dim: int = 32
    fusion_dim: int = 128
    hidden_channels: Tuple[int, ...] = (16, 32, 32)
    encoder_kernel: int = 3
    downsample: bool = True
    leaky_slope: float = 0.01
    dropout_rate: float = 0.1
    variant: Union[Variant, str] = Variant.ADNET
    init_seed: int = 0

    def __post_init__(self):
        self.variant = parse_variant(self.variant)
        self.hidden_channels = tuple(int(c) for c in self.hidden_channels)

        if self.embed_dim < 1 or self.fusion_dim < 1:
            raise ConfigurationError(
                f"embed_dim and fusion_dim must be positive, got {self.embed_dim} and {self.fusion_dim}",
                ErrorCodes.INVALID_CONFIGURATION
            )
        if any(c < 1 for c in self.hidden_channels):
            raise ConfigurationError(f"hidden channels must be positive: {self.hidden_channels}",
                                     ErrorCodes.INVALID_CONFIGURATION)
        if self.encoder_kernel < 1 or self.encoder_kernel % 2 == 0:
            raise ConfigurationError(f"encoder_kernel must be odd, got {self.encoder_kernel}",
                                     ErrorCodes.INVALID_CONFIGURATION)
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}",
                                     ErrorCodes.INVALID_CONFIGURATION)
        if self.leaky_slope < 0.0:
            raise ConfigurationError(f"leaky_slope must be non-negative, got {self.leaky_slope}",
                                     ErrorCodes.INVALID_CONFIGURATION)

    @property
    def stride(self) -> int:
        return 2 ** len(self.hidden_channels) if self.downsample else 1

    @property
    def branches(self) -> Tuple[str, ...]:
        return VARIANT_BRANCHES[self.variant]

    def layer_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """Shapes of every parameter tensor, keyed by name."""
        k = self.encoder_kernel
        shapes: Dict[str, Tuple[int, ...]] = {}
        in_ch = 3
        for i, out_ch in enumerate(self.hidden_channels + (self.embed_dim,)):
            shapes[f"encoder.{i}.weight"] = (out_ch, in_ch, k, k)
            shapes[f"encoder.{i}.bias"] = (out_ch,)
            in_ch = out_ch
        fused = len(self.branches) * self.embed_dim
        shapes["fusion.weight"] = (self.fusion_dim, fused, 1, 1)
        shapes["fusion.bias"] = (self.fusion_dim,)
        shapes["classifier.weight"] = (1, self.fusion_dim, 1, 1)
        shapes["classifier.bias"] = (1,)
        return shapes

    def get_info(self) -> Dict[str, Any]:
        return {
            "embed_dim": self.embed_dim,
            "fusion_dim": self.fusion_dim,
            "hidden_channels": list(self.hidden_channels),
            "encoder_kernel": self.encoder_kernel,
            "stride": self.stride,
            "leaky_slope": self.leaky_slope,
            "dropout_rate": self.dropout_rate,
            "variant": self.variant.value,
            "branches": list(self.branches),
            "init_seed": self.init_seed,
        }


class AdNetParams:
    """
    Named parameter tensors of one network, plus its configuration.

    Parameter names follow ``ModelConfig.layer_shapes``; iteration order is
    the insertion order, which is also the checkpoint order.
    """

    def __init__(self, config: ModelConfig, tensors: Dict[str, Tensor]):
        expected = config.layer_shapes()
        if list(tensors) != list(expected):
            raise ValidationError(
                f"parameter names {list(tensors)} do not match configuration {list(expected)}",
                ErrorCodes.INVALID_INPUT_FORMAT
            )
        for name, tensor in tensors.items():
            if tensor.shape != expected[name]:
                raise ShapeError(
                    f"parameter {name} has shape {tensor.shape}, expected {expected[name]}",
                    ErrorCodes.DIMENSION_MISMATCH
                )
        if tensors["classifier.weight"].shape[0] != 1:
            raise ValidationError("classifier must have exactly one output channel",
                                  ErrorCodes.INVALID_INPUT_SIZE)
        self.config = config
        self._tensors = dict(tensors)

    @classmethod
    def initialize(cls, config: ModelConfig) -> "AdNetParams":
        """He-uniform weights scaled by fan-in, zero biases."""
        rng = np.random.default_rng(config.init_seed)
        gain = 2.0 / (1.0 + config.leaky_slope ** 2)
        tensors = {}
        for name, shape in config.layer_shapes().items():
            if name.endswith(".bias"):
                tensors[name] = Tensor(np.zeros(shape), requires_grad=True)
                continue
            fan_in = int(np.prod(shape[1:]))
            bound = math.sqrt(3.0 * gain / fan_in)
            tensors[name] = Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)
        logger.debug("Initialised %d parameter tensors for variant %s",
                     len(tensors), config.variant.value)
        return cls(config, tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __setitem__(self, name: str, tensor: Tensor) -> None:
        if name not in self._tensors:
            raise ValidationError(f"unknown parameter {name}", ErrorCodes.INVALID_INPUT_FORMAT)
        if tensor.shape != self._tensors[name].shape:
            raise ShapeError(f"parameter {name}: shape {tensor.shape} != {self._tensors[name].shape}",
                             ErrorCodes.DIMENSION_MISMATCH)
        self._tensors[name] = tensor

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> List[str]:
        return list(self._tensors)

    def items(self) -> List[Tuple[str, Tensor]]:
        return list(self._tensors.items())

    def zero_grad(self) -> None:
        for tensor in self._tensors.values():
            tensor.zero_grad()

    def copy(self) -> "AdNetParams":
        return AdNetParams(self.config, {
            name: Tensor(t.data.copy(), requires_grad=True) for name, t in self._tensors.items()
        })

    @property
    def num_parameters(self) -> int:
        return sum(t.size for t in self._tensors.values())


@dataclass
class FrameEmbedding:
    """Pixel embeddings of one frame as an hw x c matrix."""
    matrix: Tensor
    h: int
    w: int

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.h * self.w:
            raise ShapeError(
                f"embedding matrix {self.matrix.shape} does not hold {self.h}x{self.w} pixels",
                ErrorCodes.DIMENSION_MISMATCH
            )

    @property
    def c(self) -> int:
        return self.matrix.shape[1]

    @property
    def hw(self) -> int:
        return self.h * self.w

    @classmethod
    def from_spatial(cls, features: Tensor) -> "FrameEmbedding":
        """Build from a c x h x w feature map."""
        c, h, w = features.shape
        return cls(ops.transpose(ops.reshape(features, (c, h * w))), h, w)

    def to_spatial(self) -> Tensor:
        return ops.reshape(ops.transpose(self.matrix), (self.c, self.h, self.w))


@dataclass
class TransitionMatrix:
    """Row-stochastic hw x hw correspondence matrix."""
    matrix: Tensor

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ShapeError(f"transition matrix must be square, got {self.matrix.shape}",
                             ErrorCodes.DIMENSION_MISMATCH)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def row_sums(self) -> np.ndarray:
        return self.matrix.data.sum(axis=1)


def _as_frame(frame: Union[np.ndarray, Tensor]) -> Tensor:
    tensor = frame if isinstance(frame, Tensor) else Tensor(frame)
    if tensor.ndim != 3 or tensor.shape[0] != 3:
        raise ShapeError(f"frames must be 3 x H x W, got {tensor.shape}", ErrorCodes.DIMENSION_MISMATCH)
    return tensor


class AnchorDiffusionNet(SegmentationModel):
    """
    The segmentation network.

    Example:
        >>> params = AdNetParams.initialize(ModelConfig(embed_dim=8))
        >>> net = AnchorDiffusionNet(params)
        >>> heatmap = net.forward(frame0, frame_t)   # h x w Tensor in (0, 1)
    """

    def __init__(self, params: AdNetParams):
        self.params = params

    @property
    def config(self) -> ModelConfig:
        return self.params.config

    @property
    def stride(self) -> int:
        return self.config.stride

    def encode(self, frame: Union[np.ndarray, Tensor]) -> FrameEmbedding:
        """
        Embed a 3 x H x W frame into an (H/stride * W/stride) x c matrix.

        Each colour channel is standardised over the frame before the first
        convolution, so the embedding ignores global brightness and contrast.

        Raises:
            ShapeError: If the stride does not divide H and W.
        """
        x = _as_frame(frame)
        _, height, width = x.shape
        if height % self.stride or width % self.stride:
            raise ShapeError(
                f"frame size {height}x{width} is not divisible by the encoder stride {self.stride}; "
                f"pad the frame to a multiple of {self.stride}",
                ErrorCodes.STRIDE_INDIVISIBLE
            )

        x = ops.standardize_channels(x)
        cfg = self.config
        n_layers = len(cfg.hidden_channels) + 1
        padding = (cfg.encoder_kernel - 1) // 2
        for i in range(n_layers):
            last = i == n_layers - 1
            stride = 2 if (cfg.downsample and not last) else 1
            x = ops.conv2d(x, self.params[f"encoder.{i}.weight"], self.params[f"encoder.{i}.bias"],
                           stride=stride, padding=padding)
            if not last:
                x = ops.leaky_relu(x, cfg.leaky_slope)
        return FrameEmbedding.from_spatial(x)

    def transition_matrix(self, x0: FrameEmbedding, xt: FrameEmbedding) -> TransitionMatrix:
        """P = softmax_rows(X0 Xt^T / sqrt(c)); row i is anchor pixel i over current pixels."""
        if (x0.h, x0.w, x0.c) != (xt.h, xt.w, xt.c):
            raise ShapeError(
                f"embeddings differ: {x0.h}x{x0.w}x{x0.c} vs {xt.h}x{xt.w}x{xt.c}",
                ErrorCodes.DIMENSION_MISMATCH
            )
        logits = ops.scale(ops.matmul(x0.matrix, ops.transpose(xt.matrix)), 1.0 / math.sqrt(x0.c))
        return TransitionMatrix(ops.softmax_rows(logits))

    def anchor_diffuse(self, p: TransitionMatrix, xt: FrameEmbedding) -> FrameEmbedding:
        """Re-encode the current frame as P Xt."""
        if p.size != xt.hw:
            raise ShapeError(f"transition matrix of size {p.size} cannot diffuse {xt.hw} pixels",
                             ErrorCodes.DIMENSION_MISMATCH)
        return FrameEmbedding(ops.matmul(p.matrix, xt.matrix), xt.h, xt.w)

    def intra_frame(self, xt: FrameEmbedding) -> FrameEmbedding:
        return self.anchor_diffuse(self.transition_matrix(xt, xt), xt)

    def branch_embeddings(self, x0: FrameEmbedding, xt: FrameEmbedding) -> List[FrameEmbedding]:
        branches = []
        for branch in self.config.branches:
            if branch == "skip":
                branches.append(xt)
            elif branch == "anchor":
                branches.append(x0)
            elif branch == "diffusion":
                branches.append(self.anchor_diffuse(self.transition_matrix(x0, xt), xt))
            elif branch == "intra":
                branches.append(self.intra_frame(xt))
        return branches

    def pre_classifier(self, branches: Sequence[FrameEmbedding]) -> Tensor:
        """Channel-wise concatenation of the branch embeddings (hw x k*c)."""
        first = branches[0]
        for other in branches[1:]:
            if (other.h, other.w, other.c) != (first.h, first.w, first.c):
                raise ShapeError(
                    f"branch embeddings differ: {first.h}x{first.w}x{first.c} vs {other.h}x{other.w}x{other.c}",
                    ErrorCodes.DIMENSION_MISMATCH
                )
        return ops.concat([b.matrix for b in branches], axis=1)

    def fuse_logits(self, branches: Sequence[FrameEmbedding], mode: Union[Mode, str] = Mode.EVAL,
                    rng: Optional[np.random.Generator] = None) -> Tensor:
        """
        Concatenate branches, reduce with a 1x1 convolution, score per pixel.

        Returns:
            Tensor: h x w foreground logits.
        """
        mode = parse_mode(mode)
        cfg = self.config
        first = branches[0]
        fused = FrameEmbedding(self.pre_classifier(branches), first.h, first.w).to_spatial()

        hidden = ops.conv2d(fused, self.params["fusion.weight"], self.params["fusion.bias"])
        hidden = ops.leaky_relu(hidden, cfg.leaky_slope)
        hidden = ops.dropout(hidden, cfg.dropout_rate, rng=rng, training=mode is Mode.TRAIN)
        logits = ops.conv2d(hidden, self.params["classifier.weight"], self.params["classifier.bias"])
        return ops.reshape(logits, (first.h, first.w))

    def fuse_and_classify(self, branches: Sequence[FrameEmbedding], mode: Union[Mode, str] = Mode.EVAL,
                          rng: Optional[np.random.Generator] = None) -> Tensor:
        """Foreground probabilities, the sigmoid of :meth:`fuse_logits`."""
        return ops.sigmoid(self.fuse_logits(branches, mode=mode, rng=rng))

    def forward_logits(self, anchor: Union[np.ndarray, Tensor], current: Union[np.ndarray, Tensor],
                       mode: Union[Mode, str] = Mode.EVAL, rng: Optional[np.random.Generator] = None,
                       anchor_embedding: Optional[FrameEmbedding] = None) -> Tensor:
        """
        Foreground logits of the current frame at embedding resolution.

        Args:
            anchor: First frame of the video, 3 x H x W.
            current: Frame to segment, same size as ``anchor``.
            mode: ``train`` enables dropout, which then needs ``rng``.
            rng: Random generator for dropout masks.
            anchor_embedding: Precomputed ``encode(anchor)``; skips re-encoding.
        """
        mode = parse_mode(mode)
        anchor_t, current_t = _as_frame(anchor), _as_frame(current)
        if anchor_t.shape != current_t.shape:
            raise ShapeError(f"anchor {anchor_t.shape} and current {current_t.shape} frames differ in size",
                             ErrorCodes.DIMENSION_MISMATCH)
        if mode is Mode.TRAIN and rng is None and self.config.dropout_rate > 0.0:
            raise ConfigurationError("training-mode forward needs a random generator for dropout",
                                     ErrorCodes.INCOMPATIBLE_OPTIONS)

        x0 = anchor_embedding if anchor_embedding is not None else self.encode(anchor_t)
        xt = self.encode(current_t)
        return self.fuse_logits(self.branch_embeddings(x0, xt), mode=mode, rng=rng)

    def forward(self, anchor: Union[np.ndarray, Tensor], current: Union[np.ndarray, Tensor],
                mode: Union[Mode, str] = Mode.EVAL, rng: Optional[np.random.Generator] = None,
                anchor_embedding: Optional[FrameEmbedding] = None) -> Tensor:
        """Heatmap of the current frame at embedding resolution; arguments as :meth:`forward_logits`."""
        return ops.sigmoid(self.forward_logits(anchor, current, mode=mode, rng=rng,
                                               anchor_embedding=anchor_embedding))

    def correspondence_map(self, anchor: np.ndarray, current: np.ndarray, pixel: Tuple[int, int]) -> np.ndarray:
        """
        Similarity of one current-frame pixel to every anchor pixel.

        Args:
            pixel: (row, col) on the embedding grid of the current frame.

        Returns:
            np.ndarray: h x w softmax weights over anchor pixels.
        """
        x0, xt = self.encode(anchor), self.encode(current)
        row, col = pixel
        if not (0 <= row < xt.h and 0 <= col < xt.w):
            raise ValidationError(f"pixel {pixel} outside the {xt.h}x{xt.w} embedding grid",
                                  ErrorCodes.INVALID_INPUT_SIZE)
        p = self.transition_matrix(xt, x0)
        return p.matrix.data[row * xt.w + col].reshape(x0.h, x0.w).copy()

    def get_info(self) -> Dict[str, Any]:
        info = super().get_info()
        info.update(self.config.get_info())
        info["num_parameters"] = self.params.num_parameters
        return info


def build_model(config: Optional[ModelConfig] = None) -> AnchorDiffusionNet:
    """Create a freshly initialised network."""
    return AnchorDiffusionNet(AdNetParams.initialize(config or ModelConfig()))
