"""Dense float64 tensors with reverse-mode autodiff on a per-thread tape.

Storage is contiguous row-major numpy.  Every differentiable operation
appends one node to the thread's tape; ``backward`` replays the tape once
in reverse creation order, accumulating gradients additively, and then
clears it.  Graphs are rebuilt on every forward pass, never cached.

The operator set is exactly what the forecasters need: affine maps, strided
and dilated 1-d convolution, sigmoid, concatenation, broadcasting multiply,
edge padding, slicing, transposition, reshape, and mean-squared-error loss.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from .errors import ArgumentError, ReceptiveFieldError, ShapeError

_local = threading.local()


def _tape() -> list["TapeNode"]:
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = []
        _local.tape = tape
    return tape


def _grad_enabled() -> bool:
    return not getattr(_local, "no_grad", False)


@contextmanager
def no_grad():
    """Run forward computations without recording tape nodes."""
    prev = getattr(_local, "no_grad", False)
    _local.no_grad = True
    try:
        yield
    finally:
        _local.no_grad = prev


def clear_tape() -> None:
    _tape().clear()


class Tensor:
    """Value carrier: contiguous float64 buffer plus optional gradient."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        # asarray with order="C" keeps 0-d scalars 0-d, unlike ascontiguousarray
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class TapeNode:
    """One recorded operation: inputs, output, and a pullback closure."""

    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(self, op: str, inputs: tuple[Tensor, ...], output: Tensor,
                 backward: Callable[[np.ndarray], tuple]):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(op: str, inputs: tuple[Tensor, ...], out_data: np.ndarray,
            backward: Callable[[np.ndarray], tuple]) -> Tensor:
    requires = _grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires)
    if requires:
        _tape().append(TapeNode(op, inputs, out, backward))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Populate gradients of everything reachable from a scalar loss.

    Gradients accumulate additively across fan-out and across repeated
    backward calls; the tape is cleared afterwards.
    """
    if loss.size != 1:
        raise ArgumentError(f"backward: loss must be scalar, got shape {loss.shape}")
    tape = _tape()
    seed = np.ones_like(loss.data)
    loss.grad = seed if loss.grad is None else loss.grad + seed
    for node in reversed(tape):
        g = node.output.grad
        if g is None:
            continue
        grads = node.backward(g)
        for t, gin in zip(node.inputs, grads):
            if gin is None or not t.requires_grad:
                continue
            t.grad = gin if t.grad is None else t.grad + gin
    tape.clear()


# ---------------------------------------------------------------------------
# elementwise / broadcasting arithmetic

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = _broadcast_op("add", a, b, a.data + b.data)
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g):
        ga = _unbroadcast(g, a.shape) if a.requires_grad else None
        gb = -_unbroadcast(g, b.shape) if b.requires_grad else None
        return ga, gb

    _check_broadcast("sub", a, b)
    return _record("sub", (a, b), a.data - b.data, bw)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g * bd, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, b.shape) if b.requires_grad else None
        return ga, gb

    return _record("mul", (a, b), ad * bd, bw)


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from exc


def _broadcast_op(op: str, a: Tensor, b: Tensor, out_data: np.ndarray) -> Tensor:
    _check_broadcast(op, a, b)

    def bw(g):
        ga = _unbroadcast(g, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g, b.shape) if b.requires_grad else None
        return ga, gb

    return _record(op, (a, b), out_data, bw)


def broadcast_mul(a: Tensor, gate: Tensor) -> Tensor:
    """Multiply by a gate whose last axis has extent 1.

    Used for channel-adaptive scaling: the gate broadcasts over the feature
    axis, and its gradient sums over that axis.
    """
    a, gate = _as_tensor(a), _as_tensor(gate)
    if gate.ndim == 0 or gate.shape[-1] != 1:
        raise ShapeError(f"broadcast_mul: gate's last axis must have extent 1, got shape {gate.shape}")
    return mul(a, gate)


def sum_all(x: Tensor) -> Tensor:
    x = _as_tensor(x)

    def bw(g):
        return (np.full(x.shape, float(g)),) if x.requires_grad else (None,)

    return _record("sum", (x,), np.asarray(x.data.sum()), bw)


def sigmoid(x: Tensor) -> Tensor:
    """Elementwise logistic function; saturates without overflow."""
    x = _as_tensor(x)
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bw(g):
        return (g * out * (1.0 - out),) if x.requires_grad else (None,)

    return _record("sigmoid", (x,), out, bw)


# ---------------------------------------------------------------------------
# shape manipulation

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    old = x.shape

    def bw(g):
        return (g.reshape(old),) if x.requires_grad else (None,)

    return _record("reshape", (x,), x.data.reshape(shape), bw)


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    x = _as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(int(a) for a in axes)
    inv = tuple(np.argsort(axes))

    def bw(g):
        return (np.ascontiguousarray(g.transpose(inv)),) if x.requires_grad else (None,)

    return _record("transpose", (x,), np.ascontiguousarray(x.data.transpose(axes)), bw)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice along one axis; backward scatters into zeros."""
    x = _as_tensor(x)
    axis = axis % x.ndim
    if not (0 <= start < stop <= x.shape[axis]):
        raise ArgumentError(f"slice_axis: range [{start}, {stop}) invalid for axis {axis} of extent {x.shape[axis]}")
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)

    def bw(g):
        if not x.requires_grad:
            return (None,)
        gx = np.zeros(x.shape)
        gx[sl] = g
        return (gx,)

    return _record("slice", (x,), np.ascontiguousarray(x.data[sl]), bw)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    """Concatenate along one axis; backward slices the upstream gradient."""
    if len(tensors) == 0:
        raise ArgumentError("concat: need at least one tensor")
    tensors = tuple(_as_tensor(t) for t in tensors)
    first = tensors[0]
    axis = axis % first.ndim
    for t in tensors[1:]:
        if t.ndim != first.ndim:
            raise ShapeError(f"concat: rank mismatch {first.shape} vs {t.shape}")
        for ax in range(first.ndim):
            if ax != axis and t.shape[ax] != first.shape[ax]:
                raise ShapeError(f"concat: axis {ax} disagrees, {first.shape} vs {t.shape}")
    extents = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + extents)

    def bw(g):
        grads = []
        sl = [slice(None)] * first.ndim
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl[axis] = slice(int(lo), int(hi))
                grads.append(np.ascontiguousarray(g[tuple(sl)]))
            else:
                grads.append(None)
        return tuple(grads)

    return _record("concat", tensors, np.concatenate([t.data for t in tensors], axis=axis), bw)


def pad_edge(x: Tensor, left: int, right: int) -> Tensor:
    """Replicate the first/last value along the trailing axis.

    Backward sums the gradient of each padded position into the edge it
    replicated.
    """
    x = _as_tensor(x)
    if left < 0 or right < 0:
        raise ArgumentError(f"pad_edge: negative padding ({left}, {right})")
    if x.shape[-1] < 1:
        raise ShapeError("pad_edge: cannot pad an empty axis")
    n = x.shape[-1]
    parts = []
    if left:
        parts.append(np.repeat(x.data[..., :1], left, axis=-1))
    parts.append(x.data)
    if right:
        parts.append(np.repeat(x.data[..., -1:], right, axis=-1))
    out = np.concatenate(parts, axis=-1) if len(parts) > 1 else x.data

    def bw(g):
        if not x.requires_grad:
            return (None,)
        gx = g[..., left:left + n].copy()
        if left:
            gx[..., :1] += g[..., :left].sum(axis=-1, keepdims=True)
        if right:
            gx[..., -1:] += g[..., left + n:].sum(axis=-1, keepdims=True)
        return (gx,)

    return _record("pad_edge", (x,), out, bw)


# ---------------------------------------------------------------------------
# dense layers

def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map over the last axis: ``out[..., g] = x[..., :] @ W + b``."""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if weight.ndim != 2:
        raise ShapeError(f"linear: weight must be 2-d, got {weight.shape}")
    f, g_dim = weight.shape
    if x.shape[-1] != f:
        raise ShapeError(f"linear: input feature axis {x.shape[-1]} != weight rows {f}")
    if bias.shape != (g_dim,):
        raise ShapeError(f"linear: bias shape {bias.shape} != ({g_dim},)")
    lead = x.shape[:-1]
    xf = x.data.reshape(-1, f)
    out = (xf @ weight.data + bias.data).reshape(lead + (g_dim,))

    def bw(g):
        g2 = g.reshape(-1, g_dim)
        gx = (g2 @ weight.data.T).reshape(x.shape) if x.requires_grad else None
        gw = xf.T @ g2 if weight.requires_grad else None
        gb = g2.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    return _record("linear", (x, weight, bias), out, bw)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, dilation: int = 1) -> Tensor:
    """Strided, dilated cross-correlation with no implicit padding.

    Accepts ``[Cin, L]`` or batched ``[N, Cin, L]`` input and returns
    ``[Cout, Lout]`` or ``[N, Cout, Lout]`` with
    ``Lout = (L - (K-1)*dilation - 1)//stride + 1``.
    """
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if stride < 1 or dilation < 1:
        raise ArgumentError(f"conv1d: stride/dilation must be >= 1, got {stride}/{dilation}")
    if weight.ndim != 3:
        raise ShapeError(f"conv1d: weight must be [Cout, Cin, K], got {weight.shape}")
    c_out, c_in, k = weight.shape
    if bias.shape != (c_out,):
        raise ShapeError(f"conv1d: bias shape {bias.shape} != ({c_out},)")
    if x.ndim == 2:
        batched = False
        xd = x.data[None]
    elif x.ndim == 3:
        batched = True
        xd = x.data
    else:
        raise ShapeError(f"conv1d: input must be [Cin, L] or [N, Cin, L], got {x.shape}")
    n, cin_x, l_in = xd.shape
    if cin_x != c_in:
        raise ShapeError(f"conv1d: input channel axis {cin_x} != weight channel axis {c_in}")
    span = (k - 1) * dilation + 1
    if l_in < span:
        raise ReceptiveFieldError(
            f"conv1d: input length {l_in} shorter than receptive field {span} "
            f"(kernel {k}, dilation {dilation})")
    l_out = (l_in - span) // stride + 1
    w2 = weight.data.reshape(c_out, c_in * k)

    # Two exact-tiling layouts avoid any im2col copy: a dilated kernel whose
    # taps cover the input once (mining geometry), and a kernel marching at
    # its own width (patch geometry).  Both make the gather a pure reshape
    # and the input gradient a reshape of the upstream matmul.
    if stride == 1 and l_in == k * dilation:
        cols = xd.reshape(n, c_in * k, l_out)
        out = np.matmul(w2, cols) + bias.data[:, None]

        def bw(g):
            g3 = g if batched else g[None]
            gw = gb = gx = None
            if weight.requires_grad:
                gw = np.tensordot(g3, cols, axes=([0, 2], [0, 2])).reshape(c_out, c_in, k)
            if bias.requires_grad:
                gb = g3.sum(axis=(0, 2))
            if x.requires_grad:
                gx3 = np.matmul(w2.T, g3).reshape(n, c_in, l_in)
                gx = gx3 if batched else gx3[0]
            return gx, gw, gb

    elif dilation == 1 and stride == k and l_in == k * l_out:
        cols = xd.reshape(n, c_in, l_out, k)
        out = np.tensordot(cols, weight.data, axes=([1, 3], [1, 2]))  # [N, Lout, Cout]
        out = np.ascontiguousarray(out.transpose(0, 2, 1)) + bias.data[:, None]

        def bw(g):
            g3 = g if batched else g[None]
            gw = gb = gx = None
            if weight.requires_grad:
                gw = np.tensordot(g3, cols, axes=([0, 2], [0, 2]))  # [Cout, Cin, K]
            if bias.requires_grad:
                gb = g3.sum(axis=(0, 2))
            if x.requires_grad:
                dcols = np.matmul(w2.T, g3).reshape(n, c_in, k, l_out)
                gx3 = np.ascontiguousarray(dcols.transpose(0, 1, 3, 2)).reshape(n, c_in, l_in)
                gx = gx3 if batched else gx3[0]
            return gx, gw, gb

    else:
        gather = (np.arange(l_out) * stride)[None, :] + (np.arange(k) * dilation)[:, None]
        cols = xd[:, :, gather].reshape(n, c_in * k, l_out)
        out = np.matmul(w2, cols) + bias.data[:, None]

        def bw(g):
            g3 = g if batched else g[None]
            gw = gb = gx = None
            if weight.requires_grad:
                gw = np.tensordot(g3, cols, axes=([0, 2], [0, 2])).reshape(c_out, c_in, k)
            if bias.requires_grad:
                gb = g3.sum(axis=(0, 2))
            if x.requires_grad:
                dcols = np.matmul(w2.T, g3).reshape(n, c_in, k, l_out)
                gx3 = np.zeros((n, c_in, l_in))
                for j in range(k):
                    off = j * dilation
                    gx3[:, :, off:off + stride * (l_out - 1) + 1:stride] += dcols[:, :, j, :]
                gx = gx3 if batched else gx3[0]
            return gx, gw, gb

    if not batched:
        out = out[0]
    return _record("conv1d", (x, weight, bias), out, bw)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean over all elements of the squared difference."""
    pred, target = _as_tensor(pred), _as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: shape mismatch {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    numel = diff.size

    def bw(g):
        scale = 2.0 * float(g) / numel
        gp = scale * diff if pred.requires_grad else None
        gt = -scale * diff if target.requires_grad else None
        return gp, gt

    return _record("mse", (pred, target), np.asarray(np.mean(diff * diff)), bw)
