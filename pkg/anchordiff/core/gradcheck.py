"""
Central-difference verification of backward passes.
"""

import logging
from typing import Callable

import numpy as np

from .tensor import Tensor
from ..exceptions import ConfigurationError, EvaluationError, ErrorCodes

logger = logging.getLogger(__name__)

MIN_EPS = 1e-6
MAX_EPS = 1e-4


def _evaluate(f: Callable[[Tensor], Tensor], values: np.ndarray) -> float:
    out = f(Tensor(values.copy()))
    if out.size != 1:
        raise EvaluationError(
            f"grad_check objective must be scalar, got shape {out.shape}",
            ErrorCodes.NON_FINITE_OBJECTIVE
        )
    value = out.item()
    if not np.isfinite(value):
        raise EvaluationError("grad_check objective is not finite", ErrorCodes.NON_FINITE_OBJECTIVE)
    return value


def numeric_gradient(f: Callable[[Tensor], Tensor], x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Estimate df/dx one coordinate at a time with central differences."""
    values = np.array(x, dtype=np.float64, copy=True)
    grad = np.zeros_like(values)
    for i in range(values.size):
        original = values.flat[i]
        values.flat[i] = original + eps
        f_plus = _evaluate(f, values)
        values.flat[i] = original - eps
        f_minus = _evaluate(f, values)
        values.flat[i] = original
        grad.flat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-6) -> float:
    """
    Compare the backward pass of ``f`` at ``x`` against central differences.

    Args:
        f: Maps a tensor shaped like ``x`` to a scalar tensor.
        x: Point at which to check.
        eps: Finite-difference step, between 1e-6 and 1e-4.

    Returns:
        float: max |analytic - numeric| / max(1, |analytic|, |numeric|).

    Raises:
        ConfigurationError: If eps is outside its allowed range.
        EvaluationError: If f is not finite at an evaluated point.
    """
    if not MIN_EPS <= eps <= MAX_EPS:
        raise ConfigurationError(
            f"grad_check eps must lie in [{MIN_EPS}, {MAX_EPS}], got {eps}",
            ErrorCodes.INVALID_CONFIGURATION
        )

    leaf = Tensor(x.data.copy(), requires_grad=True)
    out = f(leaf)
    if not np.isfinite(out.item()):
        raise EvaluationError("grad_check objective is not finite", ErrorCodes.NON_FINITE_OBJECTIVE)
    out.backward()
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)

    numeric = numeric_gradient(f, x.data, eps)

    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    error = float(np.max(np.abs(analytic - numeric) / scale)) if analytic.size else 0.0
    logger.debug("grad_check over %d coordinates: max relative error %.3e", x.size, error)
    return error
