"""Dense tensors with a dynamically recorded reverse-mode tape.

Every differentiable operation builds a node holding references to its
input tensors and a closure that maps the output gradient to per-input
gradients.  ``Tensor.backward`` walks the recorded subgraph in reverse
topological order.  Double-precision is supported throughout so that
finite-difference checks are meaningful; training defaults to float32.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from ..errors import NumericsError, ShapeError, UsageError

FLOAT_DTYPES = (np.float32, np.float64)

_grad_enabled = True
_nan_guard = False


def is_grad_enabled() -> bool:
    return _grad_enabled


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (used for momentum models)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextlib.contextmanager
def nan_guard(enabled: bool = True):
    """Check every op output for non-finite values inside the block (slow)."""
    global _nan_guard
    prev = _nan_guard
    _nan_guard = enabled
    try:
        yield
    finally:
        _nan_guard = prev


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype not in FLOAT_DTYPES:
        return arr.astype(np.float32)
    return arr


class Tensor:
    """N-dimensional float array, optionally recorded on the tape.

    ``grad`` holds the accumulated gradient after ``backward`` and always
    matches ``data`` in shape.  Tensors never mutate their inputs; gradient
    buffers are rebound (not written in place) during accumulation.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], tuple] | None = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}{flag})"

    # -- tape -----------------------------------------------------------------

    def detach(self) -> "Tensor":
        """Stop-gradient: same values, no tape edge back to the inputs."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate dL/dx into ``grad`` of every reachable recorded tensor."""
        if self.data.size != 1:
            raise UsageError(f"backward requires a scalar, got shape {self.shape}")
        if not np.isfinite(self.data):
            raise NumericsError("backward called on a non-finite loss")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited and p._parents:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None:
                    continue
                if not (parent.requires_grad or parent._parents):
                    continue
                if g.shape != parent.data.shape:
                    raise ShapeError(
                        f"gradient shape {g.shape} does not match tensor shape {parent.data.shape}"
                    )
                parent.grad = g if parent.grad is None else parent.grad + g

    # -- operators (implemented in ops.py, attached below) ---------------------

    def __neg__(self):
        return _ops.neg(self)

    def __add__(self, other):
        return _ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _ops.sub(self, other)

    def __rsub__(self, other):
        return _ops.sub(other, self)

    def __mul__(self, other):
        return _ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _ops.div(self, other)

    def __rtruediv__(self, other):
        return _ops.div(other, self)

    def __pow__(self, exponent):
        return _ops.pow_scalar(self, exponent)

    def __matmul__(self, other):
        return _ops.matmul(self, other)

    def __getitem__(self, key):
        return _ops.getitem(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops.reshape(self, shape)

    def transpose(self, axes: Sequence[int]):
        return _ops.transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return _ops.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return _ops.mean(self, axis, keepdims)

    def exp(self):
        return _ops.exp(self)

    def log(self):
        return _ops.log(self)

    def sqrt(self):
        return _ops.sqrt(self)


class Parameter(Tensor):
    """A leaf tensor owned by a module; discovered by ``Module.named_parameters``."""

    def __init__(self, data, requires_grad: bool = True, dtype=None):
        super().__init__(data, requires_grad=requires_grad, dtype=dtype)


def make_node(
    data: np.ndarray,
    parents: tuple[Tensor, ...],
    backward: Callable[[np.ndarray], tuple],
) -> Tensor:
    """Wrap an op result; records a tape node only when a parent needs one."""
    if _nan_guard and not np.all(np.isfinite(data)):
        raise NumericsError("non-finite value produced by a forward op")
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def as_tensor(value, like: Tensor | None = None) -> Tensor:
    """Coerce numbers or arrays to a constant Tensor (dtype follows ``like``)."""
    if isinstance(value, Tensor):
        return value
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype))


# ops.py imports this module; the late import avoids the cycle at load time.
from . import ops as _ops  # noqa: E402  (intentional tail import)
