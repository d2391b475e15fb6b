"""Defines the reverse-mode differentiation core: Tensor, Tape and the primitive operations

A forward pass run inside `with Tape() as tape:` records every operation whose inputs
require gradients. `tape.backward(loss)` then visits the recorded nodes once each in reverse
creation order (which is a reverse topological order, since a node is always created after
its inputs) and accumulates gradients into the parents.

Example Usage
-------------
>>> from echo_beam_toolbox.all.autodiff_tape import Tape, leaf, tanh
>>> import numpy as np
>>> sink = {}
>>> with Tape() as tape:
...     x = leaf(np.array([0.5, -1.0]), lambda g: sink.update(x=g))
...     y = (tanh(x) * 3.0).sum()
>>> tape.backward(y)
>>> sink["x"]
array([2.35..., 1.26...])
"""

import threading
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from echo_beam_toolbox.custom_exceptions import ShapeMismatchError, TapeError

# names of every operation that records a backward rule (used by the gradient-check suite
# to assert that its cases cover the whole toolkit)
DIFFERENTIABLE_OPS: set = set()

_THREAD_STATE = threading.local()


def register_op(name: str) -> str:
    """Adds [name] to the registry of differentiable operations and returns it"""
    DIFFERENTIABLE_OPS.add(name)
    return name


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sums [grad] over the axes that numpy broadcasting added to reach [shape]"""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A real-valued array node in the computation graph

    Attributes
    ----------
    value : numpy.ndarray
        The forward value
    grad : numpy.ndarray or None
        Accumulated gradient of the loss with respect to this node (set by Tape.backward)
    requires_grad : bool
        True if the node depends on a trainable leaf
    op : str or None
        Name of the operation that produced the node
    """

    __slots__ = ("value", "grad", "requires_grad", "op", "_backward")
    __array_priority__ = 100

    def __init__(self, value, requires_grad: bool = False) -> None:
        self.value = np.asarray(value)
        self.grad = None
        self.requires_grad = requires_grad
        self.op = None
        self._backward = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.value.shape}, op={self.op})"

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    def accumulate(self, grad: np.ndarray) -> None:
        """Adds [grad] (reduced over broadcast axes) into this node's gradient"""
        if not self.requires_grad:
            return
        grad = _unbroadcast(grad, self.value.shape)
        self.grad = grad if self.grad is None else self.grad + grad

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None, keepdims: bool = False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)


class Tape:
    """Records the operations of one forward pass so that they can be differentiated once

    Tapes nest: the innermost `with Tape()` block receives the records. The active tape is
    thread-local, so independent tapes may run in parallel threads.
    """

    def __init__(self) -> None:
        self.nodes: list = []
        self._backward_done: bool = False

    def __enter__(self) -> "Tape":
        stack = getattr(_THREAD_STATE, "stack", None)
        if stack is None:
            stack = []
            _THREAD_STATE.stack = stack
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc_value, traceback) -> None:
        _THREAD_STATE.stack.pop()

    def record(self, node: Tensor) -> None:
        self.nodes.append(node)

    @property
    def op_names(self) -> set:
        """Names of all operations recorded on this tape"""
        return {node.op for node in self.nodes if node.op is not None}

    def backward(self, loss: Tensor, seed_grad: np.ndarray | None = None) -> None:
        """Propagates d(loss)/d(node) to every recorded node, in reverse creation order

        Raises
        ------
        TapeError
            If backward was already called on this tape, or the loss does not depend on
            anything recorded
        """
        if self._backward_done:
            raise TapeError(
                "backward() was already called on this tape - run a new forward pass"
            )
        if not loss.requires_grad:
            raise TapeError("loss does not depend on any recorded trainable tensor")
        self._backward_done = True
        loss.grad = (
            np.ones_like(loss.value)
            if seed_grad is None
            else np.asarray(seed_grad, dtype=loss.value.dtype)
        )
        for node in reversed(self.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)
        for node in self.nodes:
            node._backward = None


def active_tape() -> Tape | None:
    """Returns the innermost active tape of the calling thread (or None)"""
    stack = getattr(_THREAD_STATE, "stack", None)
    if not stack:
        return None
    return stack[-1]


def as_tensor(value, like: Tensor | None = None) -> Tensor:
    """Wraps arrays and python scalars as constant tensors

    Python scalars take the dtype of [like] so that float32 graphs stay float32
    """
    if isinstance(value, Tensor):
        return value
    if like is not None and np.isscalar(value):
        return Tensor(np.asarray(value, dtype=like.value.dtype))
    return Tensor(value)


def leaf(value: np.ndarray, sink: Callable[[np.ndarray], None]) -> Tensor:
    """Creates a trainable leaf whose gradient is handed to [sink] during backward"""
    out = Tensor(value, requires_grad=True)
    out.op = "leaf"
    out._backward = sink
    tape = active_tape()
    if tape is not None:
        tape.record(out)
    return out


def make_node(
    value: np.ndarray,
    parents: Sequence[Tensor],
    backward: Callable[[np.ndarray], None],
    op_name: str,
) -> Tensor:
    """Creates the output node of an operation and records it on the active tape

    Nothing is recorded when no tape is active or no parent requires gradients, so inference
    runs without graph overhead.
    """
    out = Tensor(value)
    tape = active_tape()
    if tape is None or not any(parent.requires_grad for parent in parents):
        return out
    out.requires_grad = True
    out.op = op_name
    out._backward = backward
    tape.record(out)
    return out


# elementwise arithmetic ------------------------------------------------------------------- #
_ADD = register_op("add")
_SUB = register_op("sub")
_MUL = register_op("mul")
_DIV = register_op("div")
_NEG = register_op("neg")


def add(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)

    def backward(g):
        a.accumulate(g)
        b.accumulate(g)

    return make_node(a.value + b.value, (a, b), backward, _ADD)


def sub(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)

    def backward(g):
        a.accumulate(g)
        b.accumulate(-g)

    return make_node(a.value - b.value, (a, b), backward, _SUB)


def mul(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)

    def backward(g):
        a.accumulate(g * b.value)
        b.accumulate(g * a.value)

    return make_node(a.value * b.value, (a, b), backward, _MUL)


def div(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    out_value = a.value / b.value

    def backward(g):
        a.accumulate(g / b.value)
        b.accumulate(-g * out_value / b.value)

    return make_node(out_value, (a, b), backward, _DIV)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        a.accumulate(-g)

    return make_node(-a.value, (a,), backward, _NEG)


# unary functions -------------------------------------------------------------------------- #
_EXP = register_op("exp")
_LOG = register_op("log")
_SQRT = register_op("sqrt")
_SQUARE = register_op("square")
_TANH = register_op("tanh")
_SIGMOID = register_op("sigmoid")
_ELU = register_op("elu")
_CLIP = register_op("clip")


def exp(a: Tensor) -> Tensor:
    out_value = np.exp(a.value)

    def backward(g):
        a.accumulate(g * out_value)

    return make_node(out_value, (a,), backward, _EXP)


def log(a: Tensor) -> Tensor:
    def backward(g):
        a.accumulate(g / a.value)

    return make_node(np.log(a.value), (a,), backward, _LOG)


def sqrt(a: Tensor) -> Tensor:
    out_value = np.sqrt(a.value)

    def backward(g):
        a.accumulate(g / (2.0 * out_value))

    return make_node(out_value, (a,), backward, _SQRT)


def square(a: Tensor) -> Tensor:
    def backward(g):
        a.accumulate(2.0 * g * a.value)

    return make_node(a.value * a.value, (a,), backward, _SQUARE)


def tanh(a: Tensor) -> Tensor:
    out_value = np.tanh(a.value)

    def backward(g):
        a.accumulate(g * (1.0 - out_value * out_value))

    return make_node(out_value, (a,), backward, _TANH)


def sigmoid(a: Tensor) -> Tensor:
    out_value = expit(a.value)

    def backward(g):
        a.accumulate(g * out_value * (1.0 - out_value))

    return make_node(out_value, (a,), backward, _SIGMOID)


def elu(a: Tensor) -> Tensor:
    """Exponential linear unit (alpha = 1), continuously differentiable at zero"""
    positive = a.value > 0
    out_value = np.where(positive, a.value, np.expm1(np.minimum(a.value, 0.0)))

    def backward(g):
        a.accumulate(g * np.where(positive, 1.0, out_value + 1.0).astype(g.dtype))

    return make_node(out_value, (a,), backward, _ELU)


def clip(a: Tensor, low: float, high: float) -> Tensor:
    """Clamps to [low, high]; the gradient is zero where the clamp is active"""
    inside = (a.value >= low) & (a.value <= high)

    def backward(g):
        a.accumulate(g * inside)

    return make_node(np.clip(a.value, low, high), (a,), backward, _CLIP)


_SOFTMAX = register_op("softmax")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Softmax along [axis], stabilised by subtracting the running maximum"""
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    expd = np.exp(shifted)
    out_value = expd / expd.sum(axis=axis, keepdims=True)

    def backward(g):
        a.accumulate(out_value * (g - (g * out_value).sum(axis=axis, keepdims=True)))

    return make_node(out_value, (a,), backward, _SOFTMAX)


# reductions ------------------------------------------------------------------------------- #
_SUM = register_op("sum")
_MEAN = register_op("mean")


def _expand_reduced(g: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def backward(g):
        a.accumulate(np.array(_expand_reduced(g, a.value.shape, axis, keepdims)))

    return make_node(a.value.sum(axis=axis, keepdims=keepdims), (a,), backward, _SUM)


def tensor_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_value = a.value.mean(axis=axis, keepdims=keepdims)
    count = a.value.size // max(np.asarray(out_value).size, 1)

    def backward(g):
        a.accumulate(np.array(_expand_reduced(g, a.value.shape, axis, keepdims)) / count)

    return make_node(out_value, (a,), backward, _MEAN)


# linear algebra --------------------------------------------------------------------------- #
_MATMUL = register_op("matmul")


def matmul(a, b) -> Tensor:
    """Batched matrix product of operands with at least 2 dimensions"""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatchError("matmul operands must have at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError(
            f"matmul inner dimensions disagree: {a.shape} @ {b.shape}"
        )

    def backward(g):
        a.accumulate(g @ np.swapaxes(b.value, -1, -2))
        b.accumulate(np.swapaxes(a.value, -1, -2) @ g)

    return make_node(a.value @ b.value, (a, b), backward, _MATMUL)


# shape manipulation ----------------------------------------------------------------------- #
_RESHAPE = register_op("reshape")
_TRANSPOSE = register_op("transpose")
_GETITEM = register_op("getitem")
_CONCAT = register_op("concat")
_STACK = register_op("stack")
_PAD = register_op("pad")


def reshape(a: Tensor, shape: tuple) -> Tensor:
    def backward(g):
        a.accumulate(g.reshape(a.value.shape))

    return make_node(a.value.reshape(shape), (a,), backward, _RESHAPE)


def transpose(a: Tensor, axes: tuple) -> Tensor:
    inverse = tuple(np.argsort(axes))

    def backward(g):
        a.accumulate(np.transpose(g, inverse))

    return make_node(np.transpose(a.value, axes), (a,), backward, _TRANSPOSE)


def _is_fancy(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return any(isinstance(part, (list, np.ndarray)) for part in parts)


def getitem(a: Tensor, index) -> Tensor:
    fancy = _is_fancy(index)

    def backward(g):
        full = np.zeros_like(a.value)
        if fancy:
            np.add.at(full, index, g)
        else:
            full[index] = g
        a.accumulate(full)

    return make_node(a.value[index], (a,), backward, _GETITEM)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    boundaries = np.cumsum(sizes)[:-1]

    def backward(g):
        for tensor, piece in zip(tensors, np.split(g, boundaries, axis=axis)):
            tensor.accumulate(piece)

    return make_node(
        np.concatenate([t.value for t in tensors], axis=axis), tensors, backward, _CONCAT
    )


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        for position, tensor in enumerate(tensors):
            tensor.accumulate(np.take(g, position, axis=axis))

    return make_node(
        np.stack([t.value for t in tensors], axis=axis), tensors, backward, _STACK
    )


def pad(a: Tensor, pad_width: Sequence[tuple]) -> Tensor:
    """Zero-pads [a]; pad_width follows numpy.pad"""
    pad_width = tuple(tuple(int(v) for v in pair) for pair in pad_width)
    crop = tuple(
        slice(before, before + size)
        for (before, _), size in zip(pad_width, a.value.shape)
    )

    def backward(g):
        a.accumulate(g[crop])

    return make_node(np.pad(a.value, pad_width), (a,), backward, _PAD)
