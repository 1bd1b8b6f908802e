"""
Reverse-mode automatic differentiation over dense float64 numpy arrays.

Every primitive records itself on the active Tape when one of its inputs
requires a gradient. backward() walks the tape from the loss towards the
leaves and accumulates into each leaf's ``grad`` array, then clears the
tape so the next iteration starts empty.
"""
import contextlib
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from utils.errors import DimensionError, TapeError

logger = logging.getLogger(__name__)

INSTANCE_NORM_EPS = 1e-5


class Tensor:
    """
    A float64 array that can take part in gradient recording.

    Args:
        data: Anything numpy can turn into a float64 array (copied)
        requires_grad: Whether backward() should produce a gradient for it
        name: Optional label, used for parameters
    """

    __slots__ = ("data", "requires_grad", "grad", "node_id", "name", "_tape_token")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node_id: Optional[int] = None
        self.name = name
        self._tape_token: Optional[object] = None

    @classmethod
    def _wrap(cls, array: np.ndarray) -> "Tensor":
        # Primitive outputs own their arrays already, skip the copy
        out = cls.__new__(cls)
        out.data = np.asarray(array, dtype=np.float64)
        out.requires_grad = False
        out.grad = None
        out.node_id = None
        out.name = None
        out._tape_token = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError("item() needs a single-element tensor", self.shape)
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        """Copy of the value with no tape history and no gradient"""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __add__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            # scalar offsets act as constants of matching shape
            other = Tensor(np.full(self.shape, float(other)))
        return add(self, other)

    def __radd__(self, other) -> "Tensor":
        # lets the builtin sum() start from 0
        if isinstance(other, (int, float)) and other == 0:
            return self
        return self.__add__(other)

    def __mul__(self, other: float) -> "Tensor":
        if isinstance(other, Tensor):
            raise TypeError("Tensor * Tensor is not supported; only scalar factors are")
        return scale(self, float(other))

    __rmul__ = __mul__

    def __sub__(self, other: "Tensor") -> "Tensor":
        return add(self, scale(other, -1.0))

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"


BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


@dataclass
class TapeNode:
    kind: str
    inputs: Tuple[Tensor, ...]
    backward_fn: BackwardFn


class Tape:
    """
    Append-only record of primitive applications.

    Node ids are positions in ``nodes``, so inputs always precede outputs.
    Clearing the tape invalidates every node id handed out before.
    """

    def __init__(self):
        self.nodes: List[TapeNode] = []
        self.gradients: Dict[int, Tensor] = {}
        self._token = object()

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc_info) -> None:
        _TAPE_STACK.remove(self)

    def record(self, kind: str, inputs: Tuple[Tensor, ...], output: Tensor, backward_fn: BackwardFn) -> int:
        node_id = len(self.nodes)
        self.nodes.append(TapeNode(kind, inputs, backward_fn))
        output.node_id = node_id
        output._tape_token = self._token
        return node_id

    def owns(self, tensor: Tensor) -> bool:
        return tensor.node_id is not None and tensor._tape_token is self._token

    def clear(self) -> None:
        self.nodes = []
        self._token = object()


_TAPE_STACK: List[Tape] = [Tape()]
_GRAD_ENABLED = [True]


def current_tape() -> Tape:
    return _TAPE_STACK[-1]


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED[-1]


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Run forward passes without recording anything on the tape"""
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


def _record(kind: str, inputs: Tuple[Tensor, ...], out_data: np.ndarray, backward_fn: BackwardFn) -> Tensor:
    out = Tensor._wrap(out_data)
    if is_grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        current_tape().record(kind, inputs, out, backward_fn)
    return out


def _require_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: operands must have equal shapes", a.shape, b.shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("add", a, b)
    return _record("add", (a, b), a.data + b.data, lambda g: (g, g))


def scale(a: Tensor, factor: float) -> Tensor:
    return _record("scale", (a,), a.data * factor, lambda g: (g * factor,))


def sum_all(a: Tensor) -> Tensor:
    def backward_fn(g):
        return (np.full(a.shape, float(g)),)

    return _record("sum", (a,), np.asarray(a.data.sum()), backward_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product of an m×k and a k×n tensor.

    Raises:
        DimensionError: if either operand is not 2-D or the inner sizes differ
    """
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError("matmul: inner dimensions do not match", a.shape, b.shape)
    a_data, b_data = a.data, b.data

    def backward_fn(g):
        return g @ b_data.T, a_data.T @ g

    return _record("matmul", (a, b), a_data @ b_data, backward_fn)


def conv2d(x: Tensor, kernels: Tensor, stride: int = 1, pad: int = 0, bias: Optional[Tensor] = None) -> Tensor:
    """
    2-D cross-correlation of a c_in×h×w input with c_out×c_in×k×k kernels.

    Zero padding is applied on both spatial axes. The output is
    c_out×h'×w' with h' = floor((h + 2·pad − k)/stride) + 1.

    Args:
        x: Input feature map
        kernels: Filter bank
        stride: Step between windows (>= 1)
        pad: Zero rows/columns added on each side
        bias: Optional per-output-channel offset of shape (c_out,)

    Returns:
        Output feature map
    """
    if x.data.ndim != 3 or kernels.data.ndim != 4:
        raise DimensionError("conv2d: expected c×h×w input and o×c×k×k kernels", x.shape, kernels.shape)
    c_in, h, w = x.shape
    c_out, k_in, k, k_w = kernels.shape
    if k_in != c_in or k != k_w:
        raise DimensionError("conv2d: kernel channels must match input, kernels must be square",
                             x.shape, kernels.shape)
    if stride < 1 or pad < 0:
        raise ValueError(f"conv2d: stride must be >= 1 and pad >= 0, got stride={stride}, pad={pad}")
    if k > h + 2 * pad or k > w + 2 * pad:
        raise DimensionError(f"conv2d: kernel larger than padded input (pad={pad})", x.shape, kernels.shape)
    if bias is not None and bias.shape != (c_out,):
        raise DimensionError("conv2d: bias must have one entry per output channel", bias.shape, (c_out,))

    padded = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    h_out, w_out = windows.shape[1], windows.shape[2]
    weights = kernels.data
    out = np.einsum("chwij,ocij->ohw", windows, weights)
    if bias is not None:
        out = out + bias.data[:, None, None]

    def backward_fn(g):
        grad_kernels = np.einsum("ohw,chwij->ocij", g, windows)
        grad_padded = np.zeros_like(padded)
        row_end = stride * (h_out - 1) + 1
        col_end = stride * (w_out - 1) + 1
        for i in range(k):
            for j in range(k):
                grad_padded[:, i:i + row_end:stride, j:j + col_end:stride] += np.einsum(
                    "ohw,oc->chw", g, weights[:, :, i, j])
        grad_x = grad_padded[:, pad:pad + h, pad:pad + w]
        if bias is None:
            return grad_x, grad_kernels
        return grad_x, grad_kernels, g.sum(axis=(1, 2))

    inputs = (x, kernels) if bias is None else (x, kernels, bias)
    return _record("conv2d", inputs, out, backward_fn)


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour upsampling of a c×h×w map to c×2h×2w"""
    if x.data.ndim != 3:
        raise DimensionError("upsample2x: expected a c×h×w input", x.shape)
    c, h, w = x.shape

    def backward_fn(g):
        return (g.reshape(c, h, 2, w, 2).sum(axis=(2, 4)),)

    return _record("upsample2x", (x,), x.data.repeat(2, axis=1).repeat(2, axis=2), backward_fn)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    if not 0.0 <= slope < 1.0:
        raise ValueError(f"leaky_relu: slope must lie in [0, 1), got {slope}")
    positive = x.data > 0

    def backward_fn(g):
        return (g * np.where(positive, 1.0, slope),)

    return _record("leaky_relu", (x,), np.where(positive, x.data, slope * x.data), backward_fn)


def tanh_act(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _record("tanh", (x,), y, lambda g: (g * (1.0 - y * y),))


def instance_norm(x: Tensor, eps: float = INSTANCE_NORM_EPS) -> Tensor:
    """
    Normalize each channel of a c×h×w map to zero mean and unit variance.

    No affine parameters are learned.
    """
    if x.data.ndim != 3:
        raise DimensionError("instance_norm: expected a c×h×w input", x.shape)
    if eps <= 0:
        raise ValueError(f"instance_norm: eps must be positive, got {eps}")
    n = x.shape[1] * x.shape[2]
    if n < 2:
        raise DimensionError("instance_norm: spatial size must be at least 2", x.shape)
    centered = x.data - x.data.mean(axis=(1, 2), keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=(1, 2), keepdims=True) + eps)
    normalized = centered * inv_std

    def backward_fn(g):
        g_sum = g.sum(axis=(1, 2), keepdims=True)
        g_dot = (g * normalized).sum(axis=(1, 2), keepdims=True)
        return (inv_std / n * (n * g - g_sum - normalized * g_dot),)

    return _record("instance_norm", (x,), normalized, backward_fn)


def l1_loss(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference, a scalar tensor"""
    _require_same_shape("l1_loss", a, b)
    diff = a.data - b.data
    n = diff.size

    def backward_fn(g):
        grad = np.sign(diff) * (float(g) / n)
        return grad, -grad

    return _record("l1_loss", (a, b), np.asarray(np.abs(diff).mean()), backward_fn)


def mse_loss(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared difference, a scalar tensor"""
    _require_same_shape("mse_loss", a, b)
    diff = a.data - b.data
    n = diff.size

    def backward_fn(g):
        grad = diff * (2.0 * float(g) / n)
        return grad, -grad

    return _record("mse_loss", (a, b), np.asarray((diff * diff).mean()), backward_fn)


def backward(loss: Tensor, tape: Optional[Tape] = None) -> Dict[int, Tensor]:
    """
    Back-propagate a scalar loss through the tape.

    Leaf tensors that require a gradient accumulate into their ``grad``
    field. Intermediate gradients are returned keyed by node id. The tape
    is cleared afterwards.

    Args:
        loss: Single-element tensor produced on the tape
        tape: Tape to walk (defaults to the active one)

    Returns:
        Map from node id to the gradient of the loss w.r.t. that node
    """
    tape = tape or current_tape()
    if loss.size != 1:
        raise DimensionError("backward: loss must be a scalar", loss.shape)
    if not tape.owns(loss):
        raise TapeError("backward: loss was not recorded on this tape")

    grads: Dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    for node_id in range(loss.node_id, -1, -1):
        g = grads.get(node_id)
        if g is None:
            continue
        node = tape.nodes[node_id]
        for tensor, grad in zip(node.inputs, node.backward_fn(g)):
            if grad is None or not tensor.requires_grad:
                continue
            if tape.owns(tensor):
                previous = grads.get(tensor.node_id)
                grads[tensor.node_id] = grad if previous is None else previous + grad
            elif tensor.grad is None:
                tensor.grad = np.array(grad, dtype=np.float64)
            else:
                tensor.grad = tensor.grad + grad

    tape.gradients = {node_id: Tensor._wrap(g) for node_id, g in grads.items()}
    tape.clear()
    return tape.gradients


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-6) -> float:
    """
    Compare backward() against central differences of ``f`` at ``x``.

    Args:
        f: Scalar-valued function of one tensor
        x: Point to check; must require a gradient
        eps: Perturbation, within [1e-7, 1e-3]

    Returns:
        max |analytic − numeric| / max(1, |numeric|) over coordinates,
        or NaN when x does not require a gradient
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"finite_diff_check: eps must lie in [1e-7, 1e-3], got {eps}")
    if not x.requires_grad:
        logger.debug("finite_diff_check: input does not require grad, result undefined")
        return float("nan")

    x.grad = None
    with Tape() as tape:
        backward(f(x), tape)
    analytic = x.grad if x.grad is not None else np.zeros_like(x.data)

    numeric = np.zeros_like(x.data)
    with no_grad():
        for index in np.ndindex(*x.shape):
            original = x.data[index]
            x.data[index] = original + eps
            upper = f(x).item()
            x.data[index] = original - eps
            lower = f(x).item()
            x.data[index] = original
            numeric[index] = (upper - lower) / (2.0 * eps)

    if numeric.size == 0:
        return 0.0
    errors = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    return float(errors.max())
