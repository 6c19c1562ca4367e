"""
Differentiable operations on :class:`Tensor`.

Each operation is a :class:`Function` subclass plus a lowercase wrapper.
All arithmetic is float64 and deterministic: no operation depends on
thread scheduling or hash ordering.
"""

import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Function, Tensor
from ..exceptions import ShapeError, ValidationError, ErrorCodes

logger = logging.getLogger(__name__)

# Probabilities are clamped to [BCE_EPS, 1 - BCE_EPS] before taking logs.
BCE_EPS = 1e-7


def _require_same_shape(name: str, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(
            f"{name}: shapes {a.shape} and {b.shape} differ",
            ErrorCodes.DIMENSION_MISMATCH,
            details={"left": a.shape, "right": b.shape}
        )


def _require_ndim(name: str, array: np.ndarray, ndim: int) -> None:
    if array.ndim != ndim:
        raise ShapeError(
            f"{name}: expected a {ndim}-D input, got shape {array.shape}",
            ErrorCodes.DIMENSION_MISMATCH
        )


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------

class Add(Function):
    def forward(self, a, b):
        _require_same_shape("add", a, b)
        return a + b

    def backward(self, grad):
        return grad, grad


class Sub(Function):
    def forward(self, a, b):
        _require_same_shape("sub", a, b)
        return a - b

    def backward(self, grad):
        return grad, -grad


class Mul(Function):
    def forward(self, a, b):
        _require_same_shape("mul", a, b)
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return grad * self.b, grad * self.a


class Scale(Function):
    def forward(self, x, factor: float = 1.0):
        self.factor = factor
        return x * factor

    def backward(self, grad):
        return (grad * self.factor,)


class AddBias(Function):
    """Add a per-channel bias to a C x H x W map."""

    def forward(self, x, bias):
        _require_ndim("add_bias", x, 3)
        if bias.shape != (x.shape[0],):
            raise ShapeError(
                f"add_bias: bias shape {bias.shape} does not match {x.shape[0]} channels",
                ErrorCodes.DIMENSION_MISMATCH
            )
        return x + bias[:, None, None]

    def backward(self, grad):
        return grad, grad.sum(axis=(1, 2))


# ---------------------------------------------------------------------------
# Linear algebra and reshaping
# ---------------------------------------------------------------------------

class MatMul(Function):
    def forward(self, a, b):
        _require_ndim("matmul", a, 2)
        _require_ndim("matmul", b, 2)
        if a.shape[1] != b.shape[0]:
            raise ShapeError(
                f"matmul: cannot multiply {a.shape} by {b.shape}",
                ErrorCodes.DIMENSION_MISMATCH,
                details={"left": a.shape, "right": b.shape}
            )
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        return grad @ self.b.T, self.a.T @ grad


class Transpose(Function):
    def forward(self, x):
        _require_ndim("transpose", x, 2)
        return x.T

    def backward(self, grad):
        return (grad.T,)


class Reshape(Function):
    def forward(self, x, shape: Tuple[int, ...] = ()):
        self.in_shape = x.shape
        try:
            return x.reshape(shape)
        except ValueError as e:
            raise ShapeError(
                f"reshape: cannot view {x.shape} as {shape}",
                ErrorCodes.DIMENSION_MISMATCH
            ) from e

    def backward(self, grad):
        return (grad.reshape(self.in_shape),)


class Concat(Function):
    def forward(self, *arrays, axis: int = 0):
        if not arrays:
            raise ValidationError("concat needs at least one input", ErrorCodes.INVALID_INPUT_SIZE)
        reference = list(arrays[0].shape)
        for array in arrays[1:]:
            other = list(array.shape)
            if len(other) != len(reference) or any(
                    r != o for i, (r, o) in enumerate(zip(reference, other)) if i != axis % len(reference)):
                raise ShapeError(
                    f"concat: shapes {arrays[0].shape} and {array.shape} disagree off axis {axis}",
                    ErrorCodes.DIMENSION_MISMATCH
                )
        self.axis = axis
        self.sections = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        return tuple(np.split(grad, self.sections, axis=self.axis))


class Sum(Function):
    def forward(self, x):
        self.in_shape = x.shape
        return np.sum(x)

    def backward(self, grad):
        return (np.full(self.in_shape, np.asarray(grad).item()),)


class Mean(Function):
    def forward(self, x):
        self.in_shape = x.shape
        return np.mean(x)

    def backward(self, grad):
        return (np.full(self.in_shape, np.asarray(grad).item() / max(1, int(np.prod(self.in_shape)))),)


class SoftmaxRows(Function):
    """Row-wise softmax of a 2-D matrix, shifted by the row maximum."""

    def forward(self, x):
        _require_ndim("softmax_rows", x, 2)
        shifted = x - x.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        self.out = e / e.sum(axis=1, keepdims=True)
        return self.out

    def backward(self, grad):
        s = self.out
        return (s * (grad - np.sum(grad * s, axis=1, keepdims=True)),)


# ---------------------------------------------------------------------------
# Spatial operations
# ---------------------------------------------------------------------------

class Conv2d(Function):
    """
    2-D cross-correlation of a C x H x W map with O x C x k x k weights.

    Implemented as an im2col product: every output position becomes one row
    of patch values, so forward and backward are single matrix products plus
    a fixed-order scatter of patch gradients back onto the input.
    """

    def forward(self, x, weight, bias=None, stride: int = 1, padding: int = 0):
        _require_ndim("conv2d input", x, 3)
        _require_ndim("conv2d weight", weight, 4)
        out_ch, in_ch, kh, kw = weight.shape
        if in_ch != x.shape[0]:
            raise ShapeError(
                f"conv2d: weight expects {in_ch} channels, input has {x.shape[0]}",
                ErrorCodes.DIMENSION_MISMATCH
            )
        if kh != kw or kh % 2 == 0:
            raise ShapeError(f"conv2d: kernel must be square and odd, got {kh}x{kw}",
                             ErrorCodes.DIMENSION_MISMATCH)
        if stride < 1 or padding < 0:
            raise ShapeError(f"conv2d: invalid stride {stride} or padding {padding}",
                             ErrorCodes.DIMENSION_MISMATCH)

        padded = np.pad(x, ((0, 0), (padding, padding), (padding, padding))) if padding else x
        if padded.shape[1] < kh or padded.shape[2] < kw:
            raise ShapeError(
                f"conv2d: {kh}x{kw} kernel larger than padded input {padded.shape[1:]}",
                ErrorCodes.KERNEL_TOO_LARGE
            )

        windows = sliding_window_view(padded, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
        out_h, out_w = windows.shape[1], windows.shape[2]
        cols = windows.transpose(1, 2, 0, 3, 4).reshape(out_h * out_w, in_ch * kh * kw)
        w_mat = weight.reshape(out_ch, -1)

        self.cols = cols
        self.w_mat = w_mat
        self.weight_shape = weight.shape
        self.padded_shape = padded.shape
        self.out_hw = (out_h, out_w)
        self.stride = stride
        self.padding = padding
        self.has_bias = bias is not None

        out = (cols @ w_mat.T).T.reshape(out_ch, out_h, out_w)
        if bias is not None:
            out = out + bias[:, None, None]
        return out

    def backward(self, grad):
        out_ch, in_ch, k, _ = self.weight_shape
        out_h, out_w = self.out_hw
        s = self.stride
        g = grad.reshape(out_ch, out_h * out_w)

        grad_w = (g @ self.cols).reshape(self.weight_shape)
        grad_cols = (g.T @ self.w_mat).reshape(out_h, out_w, in_ch, k, k)

        grad_padded = np.zeros(self.padded_shape)
        for i in range(k):
            for j in range(k):
                grad_padded[:, i:i + s * (out_h - 1) + 1:s, j:j + s * (out_w - 1) + 1:s] += \
                    grad_cols[:, :, :, i, j].transpose(2, 0, 1)

        p = self.padding
        grad_x = grad_padded[:, p:self.padded_shape[1] - p, p:self.padded_shape[2] - p] if p else grad_padded
        if self.has_bias:
            return grad_x, grad_w, g.sum(axis=1)
        return grad_x, grad_w


def interpolation_matrix(in_size: int, out_size: int) -> np.ndarray:
    """
    Linear interpolation weights mapping ``in_size`` samples to ``out_size``.

    Uses half-pixel centres (align_corners=False): output sample ``i`` reads
    source coordinate ``(i + 0.5) * in/out - 0.5``, clamped to the valid
    range. Rows sum to one; equal sizes give the identity.
    """
    if in_size < 1 or out_size < 1:
        raise ShapeError(f"interpolation sizes must be positive, got {in_size} -> {out_size}",
                         ErrorCodes.DIMENSION_MISMATCH)

    matrix = np.zeros((out_size, in_size))
    scale = in_size / out_size
    for i in range(out_size):
        src = min(max((i + 0.5) * scale - 0.5, 0.0), in_size - 1.0)
        lo = int(math.floor(src))
        hi = min(lo + 1, in_size - 1)
        frac = src - lo
        matrix[i, lo] += 1.0 - frac
        matrix[i, hi] += frac
    return matrix


class BilinearResize(Function):
    """Separable bilinear resampling of a C x H x W map."""

    def forward(self, x, out_h: int = 1, out_w: int = 1):
        _require_ndim("bilinear_resize", x, 3)
        self.ry = interpolation_matrix(x.shape[1], out_h)
        self.rx = interpolation_matrix(x.shape[2], out_w)
        return self.ry @ x @ self.rx.T

    def backward(self, grad):
        return (self.ry.T @ grad @ self.rx,)


class FlipHorizontal(Function):
    def forward(self, x):
        return x[..., ::-1]

    def backward(self, grad):
        return (np.ascontiguousarray(grad[..., ::-1]),)


class ChannelStandardize(Function):
    """Per-channel zero mean and unit variance over the spatial axes of a (c, h, w) map."""

    def forward(self, x, eps: float = 1e-5):
        _require_ndim("standardize_channels", x, 3)
        centred = x - x.mean(axis=(1, 2), keepdims=True)
        self.inv_std = 1.0 / np.sqrt(np.mean(centred ** 2, axis=(1, 2), keepdims=True) + eps)
        self.out = centred * self.inv_std
        return self.out

    def backward(self, grad):
        y = self.out
        mean_grad = grad.mean(axis=(1, 2), keepdims=True)
        mean_proj = (grad * y).mean(axis=(1, 2), keepdims=True)
        return (self.inv_std * (grad - mean_grad - y * mean_proj),)


# ---------------------------------------------------------------------------
# Nonlinearities and losses
# ---------------------------------------------------------------------------

class LeakyReLU(Function):
    def forward(self, x, slope: float = 0.01):
        self.factor = np.where(x > 0, 1.0, slope)
        return x * self.factor

    def backward(self, grad):
        return (grad * self.factor,)


class Sigmoid(Function):
    def forward(self, x):
        e = np.exp(-np.abs(x))
        self.out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Dropout(Function):
    """Inverted dropout with a caller-supplied keep mask."""

    def forward(self, x, keep=None, rate: float = 0.0):
        if keep is None:
            self.factor = np.ones_like(x)
        else:
            if keep.shape != x.shape:
                raise ShapeError(f"dropout: keep mask {keep.shape} does not match input {x.shape}",
                                 ErrorCodes.DIMENSION_MISMATCH)
            self.factor = keep.astype(np.float64) / (1.0 - rate)
        return x * self.factor

    def backward(self, grad):
        return (grad * self.factor,)


class BinaryCrossEntropy(Function):
    """Mean binary cross-entropy of probabilities against a fixed 0/1 target."""

    def forward(self, pred, target=None):
        _require_same_shape("binary_cross_entropy", pred, target)
        clipped = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
        self.clipped = clipped
        self.target = target
        self.inside = (pred >= BCE_EPS) & (pred <= 1.0 - BCE_EPS)
        losses = -(target * np.log(clipped) + (1.0 - target) * np.log(1.0 - clipped))
        return np.mean(losses)

    def backward(self, grad):
        p, y = self.clipped, self.target
        local = (p - y) / (p * (1.0 - p)) / p.size
        return (np.asarray(grad).item() * local * self.inside,)


class BinaryCrossEntropyWithLogits(Function):
    """
    Mean binary cross-entropy of sigmoid(logits) against a fixed 0/1 target.

    The value matches :class:`BinaryCrossEntropy` on ``sigmoid(logits)``,
    including the probability clamp; the gradient is ``sigmoid(x) - y``
    with no dead zone at the clamp.
    """

    def forward(self, logits, target=None):
        _require_same_shape("bce_with_logits", logits, target)
        e = np.exp(-np.abs(logits))
        self.prob = np.where(logits >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        self.target = target
        clipped = np.clip(self.prob, BCE_EPS, 1.0 - BCE_EPS)
        losses = -(target * np.log(clipped) + (1.0 - target) * np.log(1.0 - clipped))
        return np.mean(losses)

    def backward(self, grad):
        return (np.asarray(grad).item() * (self.prob - self.target) / self.prob.size,)


# ---------------------------------------------------------------------------
# Functional wrappers
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    return Add.apply(a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Sub.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Mul.apply(a, b)


def scale(x: Tensor, factor: float) -> Tensor:
    return Scale.apply(x, factor=factor)


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    return AddBias.apply(x, bias)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an n x k and a k x m tensor."""
    return MatMul.apply(a, b)


def transpose(x: Tensor) -> Tensor:
    return Transpose.apply(x)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def sum(x: Tensor) -> Tensor:  # noqa: A001
    return Sum.apply(x)


def mean(x: Tensor) -> Tensor:
    return Mean.apply(x)


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over each row; every output row sums to 1."""
    return SoftmaxRows.apply(x)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """
    Cross-correlate a C x H x W input with O x C x k x k weights.

    Output size per axis is ``(size + 2 * padding - k) // stride + 1``.
    """
    if bias is None:
        return Conv2d.apply(x, weight, stride=stride, padding=padding)
    return Conv2d.apply(x, weight, bias, stride=stride, padding=padding)


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    return BilinearResize.apply(x, out_h=out_h, out_w=out_w)


def flip_horizontal(x: Tensor) -> Tensor:
    return FlipHorizontal.apply(x)


def standardize_channels(x: Tensor, eps: float = 1e-5) -> Tensor:
    return ChannelStandardize.apply(x, eps=eps)


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    return LeakyReLU.apply(x, slope=slope)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator] = None,
            training: bool = False) -> Tensor:
    """
    Zero each activation with probability ``rate`` and rescale survivors.

    Outside training, or with a zero rate, this is the identity.
    """
    if not training or rate <= 0.0:
        return Dropout.apply(x)
    if rng is None:
        raise ValidationError("dropout in training mode needs a random generator",
                              ErrorCodes.INVALID_INPUT_FORMAT)
    keep = rng.random(x.shape) >= rate
    return Dropout.apply(x, keep=keep, rate=rate)


def binary_cross_entropy(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean BCE with predictions clamped to [1e-7, 1 - 1e-7]."""
    return BinaryCrossEntropy.apply(pred, target=np.asarray(target, dtype=np.float64))


def bce_with_logits(logits: Tensor, target: np.ndarray) -> Tensor:
    """Mean BCE of ``sigmoid(logits)``; same value as :func:`binary_cross_entropy` on the probabilities."""
    return BinaryCrossEntropyWithLogits.apply(logits, target=np.asarray(target, dtype=np.float64))
