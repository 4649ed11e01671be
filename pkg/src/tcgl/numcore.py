"""Dense float64 tensors with reverse-mode differentiation.

Every operation records its inputs, a forward function over raw arrays and a
backward rule, so a loss can be differentiated by reverse traversal and the
recorded computation can be replayed. Operations accept arbitrary leading
batch dimensions wherever that is unambiguous.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

NORM_EPS = 1e-12

_ids = itertools.count()


class DegenerateInputError(ValueError):
    """Raised when an input sits on a singularity of the operation."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "id", "op", "inputs", "_forward", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.id = next(_ids)
        self.op = "leaf"
        self.inputs: tuple[Tensor, ...] = ()
        self._forward = None
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

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

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(op: str, inputs: Sequence[Tensor], forward: Callable, backward_fn: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(forward(*(t.data for t in inputs)), dtype=np.float64)
    out.grad = None
    out.requires_grad = any(t.requires_grad for t in inputs)
    out.id = next(_ids)
    out.op = op
    out.inputs = tuple(inputs)
    out._forward = forward
    out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- elementwise

def _check_broadcast(a: Tensor, b: Tensor) -> None:
    try:
        result = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        result = None
    if result != a.shape:
        raise ValueError(f"cannot combine shapes {a.shape} and {b.shape}: "
                         "second operand must broadcast onto the first")


def elementwise(a, b, kind: str) -> Tensor:
    """add / sub / mul with ``b`` equal in shape to ``a`` or broadcast onto it."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)
    sb = b.shape
    if kind == "add":
        return _node("add", (a, b), np.add,
                     lambda g, x, y, out: (g, _unbroadcast(g, sb)))
    if kind == "sub":
        return _node("sub", (a, b), np.subtract,
                     lambda g, x, y, out: (g, -_unbroadcast(g, sb)))
    if kind == "mul":
        return _node("mul", (a, b), np.multiply,
                     lambda g, x, y, out: (g * y, _unbroadcast(g * x, sb)))
    raise ValueError(f"unknown elementwise kind {kind!r}")


def _ordered(a, b, kind):
    a, b = as_tensor(a), as_tensor(b)
    if np.broadcast_shapes(a.shape, b.shape) != a.shape and kind != "sub":
        a, b = b, a
    return elementwise(a, b, kind)


def add(a, b) -> Tensor:
    return _ordered(a, b, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if np.broadcast_shapes(a.shape, b.shape) != a.shape:
        return add(scale(b, -1.0), a)
    return elementwise(a, b, "sub")


def mul(a, b) -> Tensor:
    return _ordered(a, b, "mul")


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node("scale", (x,), lambda v: v * c, lambda g, v, out: (g * c,))


def add_scalar(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node("add_scalar", (x,), lambda v: v + c, lambda g, v, out: (g,))


def relu(x: Tensor) -> Tensor:
    # Subgradient at exactly zero is 0.
    return _node("relu", (x,), lambda v: np.maximum(v, 0.0),
                 lambda g, v, out: (g * (v > 0),))


def exp(x: Tensor) -> Tensor:
    return _node("exp", (x,), np.exp, lambda g, v, out: (g * out,))


def log(x: Tensor) -> Tensor:
    return _node("log", (x,), np.log, lambda g, v, out: (g / v,))


# ---------------------------------------------------------------- reductions and shape

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axes(axis, x.ndim)
    shape = x.shape

    def backward_fn(g, v, out):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return _node("sum", (x,), lambda v: v.sum(axis=axes, keepdims=keepdims), backward_fn)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes]))
    return scale(sum(x, axes, keepdims), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _node("reshape", (x,), lambda v: v.reshape(shape),
                 lambda g, v, out: (g.reshape(old),))


def swap_last(x: Tensor) -> Tensor:
    return _node("swap_last", (x,), lambda v: np.swapaxes(v, -1, -2),
                 lambda g, v, out: (np.swapaxes(g, -1, -2),))


def take(x: Tensor, index) -> Tensor:
    """Differentiable ``x[index]``; repeated indices accumulate gradient."""
    shape = x.shape

    def backward_fn(g, v, out):
        grad = np.zeros(shape)
        np.add.at(grad, index, g)
        return (grad,)

    return _node("take", (x,), lambda v: v[index], backward_fn)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward_fn(g, *args):
        return tuple(np.split(g, splits, axis=axis))

    return _node("concat", tensors, lambda *vs: np.concatenate(vs, axis=axis), backward_fn)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    count = len(tensors)

    def backward_fn(g, *args):
        return tuple(np.take(g, i, axis=axis) for i in range(count))

    return _node("stack", tensors, lambda *vs: np.stack(vs, axis=axis), backward_fn)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must have at least two dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    sa, sb = a.shape, b.shape

    def backward_fn(g, x, y, out):
        da = _unbroadcast(g @ np.swapaxes(y, -1, -2), sa)
        db = _unbroadcast(np.swapaxes(x, -1, -2) @ g, sb)
        return da, db

    return _node("matmul", (a, b), np.matmul, backward_fn)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` for row vectors ``x[..., in]`` and ``weight[in, out]``."""
    lead = x.shape[:-1]
    if x.ndim == 1:
        y = reshape(matmul(reshape(x, (1, -1)), weight), (weight.shape[-1],))
    elif x.ndim == 2:
        y = matmul(x, weight)
    else:
        y = reshape(matmul(reshape(x, (-1, x.shape[-1])), weight), lead + (weight.shape[-1],))
    return y if bias is None else add(y, bias)


# ---------------------------------------------------------------- losses and normalisation

def softmax(logits) -> np.ndarray:
    z = np.asarray(logits.data if isinstance(logits, Tensor) else logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, target) -> Tensor:
    """``-log softmax(logits)[target]`` over the last axis.

    ``target`` is an int for a single logit vector or an int array matching the
    leading dimensions; the result has the leading shape (a scalar for one vector).
    """
    num_classes = logits.shape[-1]
    if num_classes < 2:
        raise ValueError("need at least two classes")
    target = np.asarray(target, dtype=np.int64)
    if target.shape != logits.shape[:-1]:
        raise ValueError(f"target shape {target.shape} does not match logits {logits.shape}")
    if np.any(target < 0) or np.any(target >= num_classes):
        raise ValueError(f"target out of range [0, {num_classes})")
    onehot = np.zeros(logits.shape)
    np.put_along_axis(onehot, target[..., None], 1.0, axis=-1)

    def forward(z):
        shifted = z - z.max(axis=-1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=-1))
        return log_norm - (shifted * onehot).sum(axis=-1)

    def backward_fn(g, z, out):
        return ((softmax(z) - onehot) * np.expand_dims(g, -1),)

    return _node("softmax_cross_entropy", (logits,), forward, backward_fn)


def l2_normalize(x: Tensor, axis: int = -1) -> Tensor:
    norms = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    if np.any(norms <= NORM_EPS):
        raise DegenerateInputError("cannot normalise a (near-)zero vector")

    def forward(v):
        return v / np.sqrt((v * v).sum(axis=axis, keepdims=True))

    def backward_fn(g, v, out):
        n = np.sqrt((v * v).sum(axis=axis, keepdims=True))
        return ((g - out * (g * out).sum(axis=axis, keepdims=True)) / n,)

    return _node("l2_normalize", (x,), forward, backward_fn)


# ---------------------------------------------------------------- convolution

def _im2col(x: np.ndarray, extents: tuple[int, int, int]) -> np.ndarray:
    """Rows are output positions ``(b, l, h, w)``; columns are ``(c, dt, dy, dx)``."""
    t, d1, d2 = extents
    pad = [(0, 0), (0, 0), (t // 2, t // 2), (d1 // 2, d1 // 2), (d2 // 2, d2 // 2)]
    windows = np.lib.stride_tricks.sliding_window_view(np.pad(x, pad), extents, axis=(2, 3, 4))
    b, c, length, h, w = x.shape
    return windows.transpose(0, 2, 3, 4, 1, 5, 6, 7).reshape(b * length * h * w, c * t * d1 * d2)


def _col2im(cols: np.ndarray, shape: tuple[int, ...], extents: tuple[int, int, int]) -> np.ndarray:
    t, d1, d2 = extents
    b, c, length, h, w = shape
    cols = cols.reshape(b, length, h, w, c, t, d1, d2)
    padded = np.zeros((b, c, length + t - 1, h + d1 - 1, w + d2 - 1))
    for i in range(t):
        for j in range(d1):
            for k in range(d2):
                padded[:, :, i:i + length, j:j + h, k:k + w] += np.moveaxis(cols[..., i, j, k], -1, 1)
    return padded[:, :, t // 2:t // 2 + length, d1 // 2:d1 // 2 + h, d2 // 2:d2 // 2 + w]


def conv3d(x: Tensor, kernel: Tensor) -> Tensor:
    """Stride-1, same-padded direct 3-D convolution (cross-correlation).

    ``x`` is ``C x L x H x W`` or ``B x C x L x H x W``; ``kernel`` is ``O x C x t x d x d``
    with odd temporal and spatial extents. Inputs shorter than the kernel are
    allowed because the zero padding always covers the kernel support.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if kernel.ndim != 5:
        raise ValueError("kernel must be O x C x t x d x d")
    if x.ndim not in (4, 5):
        raise ValueError("input must be C x L x H x W, optionally with a batch axis")
    extents = tuple(kernel.shape[2:])
    if any(s % 2 == 0 for s in extents):
        raise ValueError(f"kernel extents must be odd, got {extents}")
    if x.shape[-4] != kernel.shape[1]:
        raise ValueError(f"input has {x.shape[-4]} channels, kernel expects {kernel.shape[1]}")
    padded = [n + e - 1 for n, e in zip(x.shape[-3:], extents)]
    if any(p < e for p, e in zip(padded, extents)):
        raise ValueError("kernel larger than padded input")
    batched = x.ndim == 5
    out_channels = kernel.shape[0]
    cache: dict = {}

    def columns(v):
        if cache.get("src") is not v:
            cache["src"] = v
            cache["cols"] = _im2col(v if batched else v[None], extents)
        return cache["cols"]

    def forward(v, k):
        vb = v if batched else v[None]
        out = columns(v) @ k.reshape(out_channels, -1).T
        out = np.moveaxis(out.reshape(vb.shape[0], *vb.shape[2:], out_channels), -1, 1)
        return out if batched else out[0]

    def backward_fn(g, v, k, out):
        gb = g if batched else g[None]
        gmat = np.moveaxis(gb, 1, -1).reshape(-1, out_channels)
        dk = (gmat.T @ columns(v)).reshape(k.shape) if kernel.requires_grad else None
        dx = None
        if x.requires_grad:
            vb = v if batched else v[None]
            dx = _col2im(gmat @ k.reshape(out_channels, -1), vb.shape, extents)
            if not batched:
                dx = dx[0]
        return dx, dk

    return _node("conv3d", (x, kernel), forward, backward_fn)


# ---------------------------------------------------------------- reverse traversal

def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if node.id in seen:
            continue
        seen.add(node.id)
        stack_.append((node, True))
        for parent in node.inputs:
            if parent.id not in seen:
                stack_.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tracked ancestor of a scalar ``loss``.

    Gradients add into existing ``.grad`` buffers, so fan-out and repeated calls
    accumulate.
    """
    if loss.data.size != 1 or loss.ndim != 0:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topological(loss)
    pending: dict[int, np.ndarray] = {loss.id: np.ones(())}
    for node in reversed(order):
        g = pending.pop(node.id, None)
        if g is None or not node.requires_grad:
            continue
        node.grad = g.copy() if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        grads = node._backward(g, *(t.data for t in node.inputs), node.data)
        for parent, pg in zip(node.inputs, grads):
            if pg is None or not parent.requires_grad:
                continue
            if parent.id in pending:
                pending[parent.id] = pending[parent.id] + pg
            else:
                pending[parent.id] = pg


# ---------------------------------------------------------------- computation record

class RecordEntry(NamedTuple):
    op: str
    input_ids: tuple[int, ...]
    output_id: int


@dataclass
class ComputationRecord:
    entries: list[RecordEntry]
    leaves: dict[int, Tensor]
    _nodes: dict[int, Tensor] = field(repr=False)

    def replay(self, leaf_values: dict[int, np.ndarray] | None = None) -> dict[int, np.ndarray]:
        """Re-run every recorded forward function; returns values by node id."""
        values = {i: (leaf_values or {}).get(i, t.data) for i, t in self.leaves.items()}
        for entry in self.entries:
            node = self._nodes[entry.output_id]
            values[entry.output_id] = node._forward(*(values[i] for i in entry.input_ids))
        return values


def record(output: Tensor) -> ComputationRecord:
    order = _topological(output)
    entries = [RecordEntry(t.op, tuple(p.id for p in t.inputs), t.id) for t in order if t.inputs]
    leaves = {t.id: t for t in order if not t.inputs}
    return ComputationRecord(entries, leaves, {t.id: t for t in order})


# ---------------------------------------------------------------- optimisation

@dataclass
class OptimizerState:
    lr: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if min(self.lr, self.momentum, self.weight_decay) < 0:
            raise ValueError("optimizer hyperparameters must be non-negative")


def sgd_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: OptimizerState) -> None:
    """In-place SGD with momentum and coupled weight decay.

    g' = g + wd * p;  v = momentum * v + g';  p = p - lr * v
    """
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        buf = state.buffers.get(name)
        if buf is None:
            buf = state.buffers[name] = np.zeros_like(p.data)
        elif buf.shape != p.shape:
            raise ValueError(f"momentum buffer for {name} has shape {buf.shape}, parameter {p.shape}")
        g = g + state.weight_decay * p.data if state.weight_decay else g
        buf *= state.momentum
        buf += g
        p.data -= state.lr * buf


# ---------------------------------------------------------------- gradient oracle

def relu_margin(output: Tensor) -> float:
    """Smallest ``|input|`` of any relu feeding ``output`` (``inf`` if none).

    Central differences are only meaningful when the step stays clear of every
    kink, so a margin below the step size flags an invalid check point.
    """
    inputs = [t.inputs[0].data for t in _topological(output) if t.op == "relu"]
    return min((float(np.abs(d).min()) for d in inputs if d.size), default=math.inf)


def grad_check(fn: Callable[..., Tensor], point, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` maps one Tensor per array in ``point`` to a scalar Tensor. The error
    per coordinate is ``|analytic - numeric| / max(1, |analytic|)``.
    """
    arrays = [np.array(point, dtype=np.float64)] if isinstance(point, (np.ndarray, float, int)) \
        else [np.array(p, dtype=np.float64) for p in point]
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    fn(*leaves).backward()
    worst = 0.0
    for leaf, arr in zip(leaves, arrays):
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(arr)
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = fn(*(Tensor(a) for a in arrays)).item()
            flat[i] = orig - eps
            lo = fn(*(Tensor(a) for a in arrays)).item()
            flat[i] = orig
            numeric = (hi - lo) / (2 * eps)
            a = analytic.reshape(-1)[i]
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst


def parameters_grad_check(loss_fn: Callable[[], Tensor], params: Iterable[Tensor], eps: float = 1e-5) -> float:
    """Like :func:`grad_check` but perturbs existing parameter tensors in place."""
    params = list(params)
    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_fn().item()
            flat[i] = orig - eps
            lo = loss_fn().item()
            flat[i] = orig
            numeric = (hi - lo) / (2 * eps)
            ai = a.reshape(-1)[i]
            worst = max(worst, abs(ai - numeric) / max(1.0, abs(ai)))
    return worst
