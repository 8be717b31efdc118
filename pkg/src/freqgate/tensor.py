"""Dense tensor substrate with a reverse-mode tape.

Tensors wrap contiguous f32/f64 numpy arrays in batch x channel x height x
width layout (rank <= 4). Ops record onto the innermost active Tape; the
tape replays adjoints in reverse execution order, which is a valid reverse
topological order for define-by-run graphs. Every op validates that its
output is finite and raises NumericalError otherwise instead of letting
NaN/Inf propagate.
"""

from __future__ import annotations

import contextlib

import numpy as np

from . import kernels
from .errors import NumericalError, ShapeError

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_tape_stack: list["Tape"] = []
_scope_stack: list[str] = []


@contextlib.contextmanager
def scope(name):
    """Label ops run inside the block; the label shows up in error reports."""
    _scope_stack.append(name)
    try:
        yield
    finally:
        _scope_stack.pop()


def current_scope():
    return "/".join(_scope_stack) if _scope_stack else None


class Tensor:
    """Real-valued dense array, optionally tracked for gradients."""

    _max_rank = 4

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        if arr.ndim > self._max_rank:
            raise ShapeError(f"rank {arr.ndim} exceeds supported rank {self._max_rank}")
        # ascontiguousarray would promote rank-0 to rank-1; keep scalars 0-d
        if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def detach(self):
        return type(self)(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)


class Spectrum(Tensor):
    """Half-spectrum of a real 2D signal, stored as trailing (re, im) pairs.

    data has shape batch x channel x H x (W//2+1) x 2; source_width keeps the
    original spatial width so the inverse transform can reconstruct it.
    """

    _max_rank = 5

    def __init__(self, data, source_width, requires_grad=False, dtype=None):
        super().__init__(data, requires_grad=requires_grad, dtype=dtype)
        if self.data.ndim != 5 or self.data.shape[-1] != 2:
            raise ShapeError(
                f"spectrum must be rank-5 with trailing (re, im) axis, got {self.data.shape}"
            )
        expected = source_width // 2 + 1
        if self.data.shape[3] != expected:
            raise ShapeError(
                f"spectrum width {self.data.shape[3]} does not match "
                f"source_width {source_width} (expected {expected})"
            )
        self.source_width = int(source_width)

    @property
    def complex_view(self):
        return self.data[..., 0] + 1j * self.data[..., 1]


class Tape:
    """Records ops for one forward pass; backward() may run exactly once."""

    def __init__(self):
        self.entries = []
        self._consumed = False

    def __enter__(self):
        _tape_stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tape_stack.pop()
        return False

    def record(self, op, out, inputs, vjp):
        self.entries.append((op, out, inputs, vjp))

    def backward(self, root):
        if self._consumed:
            raise RuntimeError("tape already consumed; run a fresh forward pass")
        self._consumed = True
        if root.grad is None:
            root.grad = np.ones_like(root.data)
        for _, out, inputs, vjp in reversed(self.entries):
            g = out.grad
            if g is None:
                continue
            grads = vjp(g)
            for t, gi in zip(inputs, grads):
                if gi is None or not isinstance(t, Tensor) or not t.requires_grad:
                    continue
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
                t.grad += gi


def active_tape():
    return _tape_stack[-1] if _tape_stack else None


def _finite_or_raise(arr, op):
    if not np.all(np.isfinite(arr)):
        raise NumericalError("non-finite values in op output", op=op, scope=current_scope())


def record_op(op, out_data, inputs, vjp, out_cls=Tensor, **out_kwargs):
    """Wrap an op result, checking finiteness and recording the adjoint."""
    _finite_or_raise(out_data, op)
    tape = active_tape()
    needs_grad = tape is not None and any(
        isinstance(t, Tensor) and t.requires_grad for t in inputs
    )
    out = out_cls(out_data, requires_grad=needs_grad, **out_kwargs)
    if needs_grad:
        tape.record(op, out, tuple(inputs), vjp)
    return out


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x), dtype=dtype)


def _unbroadcast(g, shape):
    """Sum a gradient back down to `shape` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _binary(op, a, b, fwd, vjp_a, vjp_b):
    a = _as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, like=a)
    if a.dtype != b.dtype:
        raise ShapeError(f"dtype mismatch in {op}: {a.dtype} vs {b.dtype}")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = fwd(a.data, b.data)

    def vjp(g):
        ga = _unbroadcast(vjp_a(g, a.data, b.data, out), a.shape) if a.requires_grad else None
        gb = _unbroadcast(vjp_b(g, a.data, b.data, out), b.shape) if b.requires_grad else None
        return ga, gb

    return record_op(op, out, (a, b), vjp)


def add(a, b):
    return _binary("add", a, b, np.add, lambda g, *_: g, lambda g, *_: g)


def sub(a, b):
    return _binary("sub", a, b, np.subtract, lambda g, *_: g, lambda g, *_: -g)


def mul(a, b):
    return _binary(
        "mul",
        a,
        b,
        np.multiply,
        lambda g, ad, bd, _: g * bd,
        lambda g, ad, bd, _: g * ad,
    )


def div(a, b):
    return _binary(
        "div",
        a,
        b,
        np.divide,
        lambda g, ad, bd, _: g / bd,
        lambda g, ad, bd, out: -g * out / bd,
    )


def neg(a):
    a = _as_tensor(a)
    return record_op("neg", -a.data, (a,), lambda g: (-g,))


def power(a, exponent):
    """Elementwise a**p for a real scalar exponent (positive base expected)."""
    a = _as_tensor(a)
    p = float(exponent)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data**p

    def vjp(g):
        return (g * p * a.data ** (p - 1.0),)

    return record_op("power", out, (a,), vjp)


def exp(a):
    a = _as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return record_op("exp", out, (a,), lambda g: (g * out,))


def log(a):
    a = _as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return record_op("log", out, (a,), lambda g: (g / a.data,))


def sqrt(a):
    a = _as_tensor(a)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.data)

    def vjp(g):
        return (g / (2.0 * out),)

    return record_op("sqrt", out, (a,), vjp)


def clamp(a, lo, hi):
    """Clip values; gradient is passed through strictly inside (lo, hi) only."""
    a = _as_tensor(a)
    out = np.clip(a.data, lo, hi)
    inside = (a.data > lo) & (a.data < hi)

    def vjp(g):
        return (g * inside,)

    return record_op("clamp", out, (a,), vjp)


def relu(a):
    a = _as_tensor(a)
    mask = a.data > 0

    def vjp(g):
        return (g * mask,)

    return record_op("relu", a.data * mask, (a,), vjp)


def sigmoid(a):
    a = _as_tensor(a)
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-a.data))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return record_op("sigmoid", out, (a,), vjp)


def softmax(a, axis):
    a = _as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return record_op("softmax", out, (a,), vjp)


def tsum(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return record_op("sum", out, (a,), vjp)


def tmean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else np.prod(
        [a.shape[ax] for ax in np.atleast_1d(axis)]
    )

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape) / count,)

    return record_op("mean", out, (a,), vjp)


def concat(tensors, axis=1):
    tensors = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            np.take(g, range(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return record_op("concat", out, tensors, vjp)


def upsample2(x):
    """Nearest-neighbour x2 upsampling over the spatial axes."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"upsample2 expects rank-4 input, got rank {x.ndim}")
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def vjp(g):
        b, c, h2, w2 = g.shape
        return (g.reshape(b, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5)),)

    return record_op("upsample2", out, (x,), vjp)


def max_pool2(x):
    """2x2 max pooling, stride 2. Ties resolve to the first index row-major."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"max_pool2 expects rank-4 input, got rank {x.ndim}")
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"max_pool2 needs even spatial extents, got {h}x{w}")
    y, idx = kernels.maxpool2_forward(x.data)

    def vjp(g):
        return (kernels.maxpool2_backward(np.ascontiguousarray(g), idx, h, w),)

    return record_op("max_pool2", y, (x,), vjp)


def dropout(x, p, training, rng):
    """Inverted dropout; identity when not training or p == 0."""
    x = _as_tensor(x)
    if not (0.0 <= p < 1.0):
        raise ShapeError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)

    def vjp(g):
        return (g * mask,)

    return record_op("dropout", x.data * mask, (x,), vjp)


def conv2d(x, weight, bias=None, stride=1, padding="same"):
    """2D convolution (cross-correlation) over rank-4 input.

    padding is an int or "same"; "same" requires stride 1 and odd kernels.
    """
    x = _as_tensor(x)
    weight = _as_tensor(weight, like=x)
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError("conv2d expects rank-4 input and weight")
    cout, cin, kh, kw = weight.shape
    if cin != x.shape[1]:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape[1]}, weight {cin}")
    if padding == "same":
        if stride != 1:
            raise ShapeError("'same' padding requires stride 1")
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError("'same' padding requires odd kernel extents")
        ph, pw = kh // 2, kw // 2
    else:
        ph = pw = int(padding)
    h, w = x.shape[2], x.shape[3]
    if kh > h + 2 * ph or kw > w + 2 * pw:
        raise ShapeError(
            f"kernel {kh}x{kw} larger than padded input {h + 2 * ph}x{w + 2 * pw}"
        )
    if bias is not None:
        bias = _as_tensor(bias, like=x)
        bias_data = bias.data
    else:
        bias_data = np.zeros(cout, dtype=x.dtype)
    if x.dtype != weight.dtype:
        raise ShapeError(f"dtype mismatch in conv2d: {x.dtype} vs {weight.dtype}")

    y = kernels.conv2d_forward(x.data, weight.data, bias_data, stride, ph, pw)

    def vjp(g):
        g = np.ascontiguousarray(g)
        gx = (
            kernels.conv2d_grad_input(g, weight.data, stride, ph, pw, h, w)
            if x.requires_grad
            else None
        )
        gw = (
            kernels.conv2d_grad_weight(g, x.data, kh, kw, stride, ph, pw)
            if weight.requires_grad
            else None
        )
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    inputs = (x, weight, bias) if bias is not None else (x, weight, _as_tensor(bias_data))
    return record_op("conv2d", y, inputs, vjp)


def _moments_normalize(x, axes, eps):
    # large-but-finite f32 inputs can overflow inside var; the caller's
    # output check surfaces that as NumericalError
    with np.errstate(over="ignore", invalid="ignore"):
        mu = x.data.mean(axis=axes, keepdims=True)
        var = x.data.var(axis=axes, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu) * inv
    return xhat, inv


def _norm_affine(op, x, gain, bias, axes, eps):
    x = _as_tensor(x)
    gain = _as_tensor(gain, like=x)
    bias = _as_tensor(bias, like=x)
    if x.ndim != 4:
        raise ShapeError(f"{op} expects rank-4 input, got rank {x.ndim}")
    c = x.shape[1]
    if gain.data.size != c or bias.data.size != c:
        raise ShapeError(f"{op} gain/bias must match channel extent {c}")
    gshape = (1, c, 1, 1)
    xhat, inv = _moments_normalize(x, axes, eps)
    out = gain.data.reshape(gshape) * xhat + bias.data.reshape(gshape)

    def vjp(g):
        gxhat = g * gain.data.reshape(gshape)
        gx = None
        if x.requires_grad:
            m1 = gxhat.mean(axis=axes, keepdims=True)
            m2 = (gxhat * xhat).mean(axis=axes, keepdims=True)
            gx = inv * (gxhat - m1 - xhat * m2)
        ggain = (
            (g * xhat).sum(axis=tuple(i for i in range(4) if i != 1)).reshape(gain.shape)
            if gain.requires_grad
            else None
        )
        gbias = (
            g.sum(axis=tuple(i for i in range(4) if i != 1)).reshape(bias.shape)
            if bias.requires_grad
            else None
        )
        return gx, ggain, gbias

    return record_op(op, out, (x, gain, bias), vjp)


def layer_norm(x, gain, bias, eps=1e-5):
    """Per-sample normalization over channel+spatial axes, then channel affine."""
    return _norm_affine("layer_norm", x, gain, bias, (1, 2, 3), eps)


def instance_norm(x, gain, bias, eps=1e-5):
    """Per-sample, per-channel normalization over the spatial axes."""
    return _norm_affine("instance_norm", x, gain, bias, (2, 3), eps)
