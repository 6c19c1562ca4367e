"""
Dense tensor type and reverse-mode gradient tape.

A :class:`Tensor` wraps a contiguous float64 NumPy array. Operations are
implemented as :class:`Function` subclasses (see ``ops.py``); applying one
records the function as the creator of its output, and :class:`GradTape`
orders those creators so that a backward pass can replay them in reverse.
"""

import logging
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import ValidationError, ErrorCodes

logger = logging.getLogger(__name__)

# Set to 1/true to check every forward result for NaN/inf.
DEBUG_ENV_VAR = "ANCHORDIFF_DEBUG"

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]


def debug_checks_enabled() -> bool:
    """Return True when finiteness checks on forward results are switched on."""
    return os.environ.get(DEBUG_ENV_VAR, "").lower() in ("1", "true", "yes")


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement ``forward`` on raw arrays and ``backward``, which maps
    the gradient of the output to one gradient per input (``None`` for inputs
    that receive no gradient). State needed by ``backward`` is stored on the
    instance during ``forward``.
    """

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} does not implement forward")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__} does not implement backward")

    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs: Any) -> "Tensor":
        """
        Run the forward pass and wrap the result in a new Tensor.

        The function is recorded as the creator of the output only when at
        least one input requires a gradient.
        """
        func = cls(*tensors)
        out_data = np.asarray(func.forward(*(t.data for t in tensors), **kwargs), dtype=np.float64)

        if debug_checks_enabled() and not np.all(np.isfinite(out_data)):
            raise ValidationError(
                f"{cls.__name__} produced non-finite values",
                ErrorCodes.NON_FINITE_VALUE,
                details={"shapes": [t.shape for t in tensors]}
            )

        requires_grad = any(t.requires_grad for t in tensors)
        return Tensor(out_data, requires_grad=requires_grad, creator=func if requires_grad else None)


class Tensor:
    """
    Dense row-major float64 array with optional gradient tracking.

    Attributes:
        data (np.ndarray): Values, always C-contiguous float64.
        requires_grad (bool): Whether backward passes should produce ``grad``.
        grad (np.ndarray, optional): Accumulated gradient, same shape as data.
        creator (Function, optional): Operation that produced this tensor.
    """

    def __init__(self, data: ArrayLike, requires_grad: bool = False,
                 creator: Optional[Function] = None):
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.creator = creator

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.creator is None

    def numpy(self) -> np.ndarray:
        """Return a copy of the underlying values."""
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ValidationError(
                f"item() needs a single-element tensor, got shape {self.shape}",
                ErrorCodes.INVALID_INPUT_SIZE
            )
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Return a tensor sharing no graph with this one."""
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            raise ValidationError(
                f"Gradient shape {grad.shape} does not match tensor shape {self.shape}",
                ErrorCodes.INVALID_INPUT_SIZE
            )
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        Backpropagate from this tensor.

        Args:
            grad: Gradient of the objective with respect to this tensor.
                Defaults to ones, which is the usual seed for a scalar loss.
        """
        GradTape.record(self).backward(grad)

    # Operator sugar; the implementations live in ops.py.
    def __add__(self, other: "Tensor") -> "Tensor":
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other: Union["Tensor", float]) -> "Tensor":
        from . import ops
        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from . import ops
        return ops.matmul(self, other)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class GradTape:
    """
    Ordered record of the operations that produced an output.

    ``record`` walks the creator graph from an output and stores the reachable
    tensors in topological order (inputs before the tensors computed from
    them). ``backward`` replays that order in reverse, so every tensor's
    gradient is complete before it is propagated further, and writes the
    result into ``grad`` of each leaf that requires a gradient exactly once.
    A tape serves one backward pass.
    """

    def __init__(self, nodes: List[Tensor]):
        self._nodes = nodes

    @classmethod
    def record(cls, output: Tensor) -> "GradTape":
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(output, False)]

        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node.creator is not None:
                for parent in reversed(node.creator.inputs):
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))

        return cls(order)

    def __len__(self) -> int:
        return sum(1 for node in self._nodes if node.creator is not None)

    @property
    def functions(self) -> List[Function]:
        """Recorded operations in execution order."""
        return [node.creator for node in self._nodes if node.creator is not None]

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        if not self._nodes:
            return

        output = self._nodes[-1]
        if not output.requires_grad:
            raise ValidationError(
                "backward() called on a tensor that does not require grad",
                ErrorCodes.INVALID_INPUT_FORMAT
            )

        seed = np.ones_like(output.data) if grad is None else np.asarray(grad, dtype=np.float64)
        grads: Dict[int, np.ndarray] = {id(output): seed}

        for node in reversed(self._nodes):
            node_grad = grads.pop(id(node), None)
            if node_grad is None:
                continue

            if node.creator is None:
                node.accumulate_grad(node_grad)
                continue

            input_grads = node.creator.backward(node_grad)
            for parent, parent_grad in zip(node.creator.inputs, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad

        logger.debug("Backward pass replayed %d operations", len(self))
        self._nodes = []
