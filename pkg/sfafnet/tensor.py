"""
Tensor - dense N-dimensional arrays with reverse-mode automatic differentiation

A Tensor wraps a numpy buffer. Every differentiable operation is a Function
subclass; applying it records the function as the ``creator`` of its output,
which links the outputs back to their inputs. ``Tensor.backward`` traces that
graph into topological order and propagates gradients in reverse.
"""

from __future__ import annotations

import contextlib
import logging
import threading
from typing import Any, Iterator, Optional, Sequence, Union

import numpy as np

from .errors import ContractError, DimensionError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]


class _ThreadState(threading.local):
    """Grad mode and default dtype, private to each thread."""

    def __init__(self) -> None:
        self.default_dtype: type = np.float32
        self.grad_enabled: bool = True


_state = _ThreadState()


def get_default_dtype() -> type:
    """Return the floating-point dtype new tensors are created with (this thread)."""
    return _state.default_dtype


@contextlib.contextmanager
def default_dtype(dtype: type) -> Iterator[None]:
    """
    Temporarily change the dtype of newly created tensors in this thread.

    Training runs in float32; gradient checks wrap model construction in
    ``default_dtype(np.float64)``.
    """
    if np.dtype(dtype).kind != "f":
        raise ContractError(f"default dtype must be floating point, got {dtype}")
    previous = _state.default_dtype
    _state.default_dtype = dtype
    try:
        yield
    finally:
        _state.default_dtype = previous


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block for the calling thread only."""
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def is_grad_enabled() -> bool:
    return _state.grad_enabled


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement ``forward`` on raw numpy arrays and ``backward``,
    which receives dL/d(output) and returns one gradient (or None) per input.
    """

    def __init__(self, *tensors: "Tensor"):
        self.inputs = tensors

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__}.forward")

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__}.backward")

    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs: Any) -> "Tensor":
        """
        Run the forward pass and, when gradients are needed, record the node.

        Args:
            *tensors: Input tensors.
            **kwargs: Non-tensor arguments forwarded to ``forward``.

        Returns:
            Output tensor whose creator is this function instance.
        """
        func = cls(*tensors)
        out_data = func.forward(*(t.data for t in tensors), **kwargs)
        requires_grad = _state.grad_enabled and any(t.requires_grad for t in tensors)
        return Tensor(
            out_data,
            requires_grad=requires_grad,
            creator=func if requires_grad else None,
            name=cls.__name__,
        )

    @staticmethod
    def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
        """Sum out broadcast dimensions so ``grad`` matches ``shape``."""
        if grad.shape == shape:
            return grad
        while grad.ndim > len(shape):
            grad = grad.sum(axis=0)
        for axis, size in enumerate(shape):
            if size == 1 and grad.shape[axis] != 1:
                grad = grad.sum(axis=axis, keepdims=True)
        return grad


class Tensor:
    """Dense array with optional gradient tracking."""

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        creator: Optional[Function] = None,
        name: Optional[str] = None,
        dtype: Optional[type] = None,
    ):
        """
        Initialize a tensor.

        Args:
            data: Array contents. Floating numpy arrays keep their dtype
                  unless ``dtype`` is given; everything else is cast to the
                  current default dtype.
            requires_grad: Track gradients for this tensor.
            creator: Function that produced this tensor (None for leaves).
            name: Optional label used in diagnostics.
            dtype: Explicit dtype override.
        """
        if dtype is not None:
            array = np.asarray(data, dtype=dtype)
        elif isinstance(data, np.ndarray) and data.dtype.kind == "f":
            array = data
        else:
            array = np.asarray(data, dtype=_state.default_dtype)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.creator = creator
        self.name = name
        self.grad: Optional[np.ndarray] = None

    # ------------------------------------------------------------------
    # Basic properties
    # ------------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.creator is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Return a graph-free tensor sharing this tensor's buffer."""
        return Tensor(self.data, requires_grad=False, name=self.name)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray) -> None:
        """Add ``grad`` into this tensor's gradient buffer."""
        if grad.shape != self.shape:
            raise DimensionError(
                f"gradient shape {grad.shape} does not match tensor shape {self.shape}"
            )
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.dtype, copy=True)
        else:
            self.grad += grad

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"

    # ------------------------------------------------------------------
    # Autodiff
    # ------------------------------------------------------------------

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        Populate ``.grad`` on every leaf that requires gradients.

        Repeated calls without resetting the leaves accumulate.

        Raises:
            ContractError: If called on a non-scalar tensor without a seed,
                or on a tensor with no recorded graph (built under
                ``no_grad`` or from leaves that do not require grad).
        """
        if grad is None:
            if self.size != 1:
                raise ContractError(
                    f"backward() needs a scalar loss, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            raise ContractError(
                f"backward() on {self.name or 'a tensor'} that does not require grad "
                f"(grad mode enabled: {is_grad_enabled()})"
            )
        Graph.trace(self).backward(self, grad)

    # ------------------------------------------------------------------
    # Operators (implemented in ops)
    # ------------------------------------------------------------------

    def _wrap(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other):
        return ops.add(self, self._wrap(other))

    def __radd__(self, other):
        return ops.add(self._wrap(other), self)

    def __sub__(self, other):
        return ops.sub(self, self._wrap(other))

    def __rsub__(self, other):
        return ops.sub(self._wrap(other), self)

    def __mul__(self, other):
        return ops.mul(self, self._wrap(other))

    def __rmul__(self, other):
        return ops.mul(self._wrap(other), self)

    def __truediv__(self, other):
        return ops.div(self, self._wrap(other))

    def __rtruediv__(self, other):
        return ops.div(self._wrap(other), self)

    def __neg__(self):
        return ops.neg(self)

    def __matmul__(self, other):
        return ops.matmul(self, self._wrap(other))

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def sqrt(self) -> "Tensor":
        return ops.sqrt(self)

    def abs(self) -> "Tensor":
        return ops.abs(self)

    def sigmoid(self) -> "Tensor":
        return ops.sigmoid(self)


class Parameter(Tensor):
    """A named trainable leaf tensor."""

    def __init__(self, data: ArrayLike, name: Optional[str] = None):
        super().__init__(data, requires_grad=True, name=name)


class Graph:
    """
    Recorded computation, topologically ordered from leaves to root.

    A graph is single-writer: recording and backward must not be
    interleaved from several threads.
    """

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def trace(cls, root: Tensor) -> "Graph":
        """
        Collect every tensor reachable from ``root`` that requires grad.

        Iterative post-order DFS, so deep networks do not hit the recursion
        limit.
        """
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
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
                for parent in node.creator.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, root: Tensor, seed: np.ndarray) -> None:
        """Propagate ``seed`` = dL/d(root) to every leaf, each node once."""
        pending: dict[int, np.ndarray] = {id(root): seed}
        for node in reversed(self.nodes):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if node.creator is None:
                node.accumulate_grad(grad)
                continue
            parent_grads = node.creator.backward(grad)
            for parent, parent_grad in zip(node.creator.inputs, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + parent_grad
                else:
                    pending[key] = parent_grad

    def first_non_finite(self) -> Optional[Tensor]:
        """Return the earliest tensor (in evaluation order) holding NaN/Inf."""
        for node in self.nodes:
            if not node.is_finite():
                return node
        return None


from . import ops  # noqa: E402  (ops needs Tensor and Function defined first)
