"""Minimal reverse-mode autodiff kernel on float32 numpy arrays.

Every differentiable operation lives here, registered in DIFFERENTIABLE_OPS so
the gradient-check suite can enumerate them. Values are immutable after
construction by convention; only the training loop rebinds parameter data.
"""

from __future__ import annotations

import struct
from contextlib import contextmanager
from dataclasses import dataclass
from itertools import product

import numpy as np

_F32 = np.float32

DIFFERENTIABLE_OPS: dict[str, object] = {}


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


def _diffop(fn):
    DIFFERENTIABLE_OPS[fn.__name__] = fn
    return fn


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph construction (inference / finite-difference probes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """N-dimensional float32 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf"):
        arr = np.asarray(data, dtype=_F32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

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
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar output."""
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar output")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # small amount of operator sugar; everything routes through checked ops
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)


def constant(data) -> Tensor:
    return Tensor(data)


def _result(data, parents, op, backward) -> Tensor:
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs, op=op)
    if needs:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=_F32)
    else:
        t.grad += g


def _need_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


# ---------------------------------------------------------------------------
# elementwise family


@_diffop
def add(a: Tensor, b: Tensor) -> Tensor:
    _need_same_shape(a, b, "add")

    def backward(g):
        _accum(a, g)
        _accum(b, g)

    return _result(a.data + b.data, (a, b), "add", backward)


@_diffop
def sub(a: Tensor, b: Tensor) -> Tensor:
    _need_same_shape(a, b, "sub")

    def backward(g):
        _accum(a, g)
        _accum(b, -g)

    return _result(a.data - b.data, (a, b), "sub", backward)


@_diffop
def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product; identical shapes only (broadcasting stays loud)."""
    _need_same_shape(a, b, "mul")

    def backward(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _result(a.data * b.data, (a, b), "mul", backward)


@_diffop
def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def backward(g):
        _accum(a, g * _F32(s))

    return _result(a.data * _F32(s), (a,), "scale", backward)


@_diffop
def mul_scalar(a: Tensor, s: Tensor) -> Tensor:
    """Multiply by a one-element tensor (used by spectral normalization)."""
    if s.data.size != 1:
        raise ShapeError(f"mul_scalar: scalar operand has shape {s.shape}")
    sval = s.data.reshape(())

    def backward(g):
        _accum(a, g * sval)
        _accum(s, np.sum(g * a.data, dtype=np.float64).astype(_F32).reshape(s.data.shape))

    return _result(a.data * sval, (a, s), "mul_scalar", backward)


@_diffop
def reciprocal(a: Tensor) -> Tensor:
    out = 1.0 / a.data

    def backward(g):
        _accum(a, -g * out * out)

    return _result(out, (a,), "reciprocal", backward)


@_diffop
def sigmoid(a: Tensor) -> Tensor:
    # tanh form is overflow-free on both tails
    out = np.tanh(a.data * _F32(0.5))
    out += _F32(1.0)
    out *= _F32(0.5)

    def backward(g):
        d = out * (_F32(1.0) - out)
        d *= g
        _accum(a, d)

    return _result(out, (a,), "sigmoid", backward)


@_diffop
def elu(a: Tensor) -> Tensor:
    x = a.data
    out = np.expm1(np.minimum(x, _F32(0.0)))
    pos = x > 0
    np.copyto(out, x, where=pos)

    def backward(g):
        d = out + _F32(1.0)  # e^x on the negative side
        np.copyto(d, _F32(1.0), where=pos)
        d *= g
        _accum(a, d)

    return _result(out, (a,), "elu", backward)


@_diffop
def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    x = a.data
    pos = x > 0
    out = x * _F32(slope)
    np.copyto(out, x, where=pos)

    def backward(g):
        d = np.full_like(x, _F32(slope))
        np.copyto(d, _F32(1.0), where=pos)
        d *= g
        _accum(a, d)

    return _result(out, (a,), "leaky_relu", backward)


@_diffop
def log(a: Tensor) -> Tensor:
    out = np.log(a.data)

    def backward(g):
        _accum(a, g / a.data)

    return _result(out, (a,), "log", backward)


@_diffop
def absolute(a: Tensor) -> Tensor:
    def backward(g):
        _accum(a, g * np.sign(a.data))

    return _result(np.abs(a.data), (a,), "absolute", backward)


@_diffop
def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    x = a.data
    out = np.clip(x, lo, hi)
    mask = ((x >= lo) & (x <= hi)).astype(_F32)

    def backward(g):
        _accum(a, g * mask)

    return _result(out, (a,), "clamp", backward)


# ---------------------------------------------------------------------------
# reductions and structure


@_diffop
def sum_all(a: Tensor) -> Tensor:
    def backward(g):
        _accum(a, np.full_like(a.data, g.reshape(())))

    return _result(np.sum(a.data), (a,), "sum_all", backward)


@_diffop
def mean_all(a: Tensor) -> Tensor:
    inv = _F32(1.0 / a.data.size)

    def backward(g):
        _accum(a, np.full_like(a.data, g.reshape(()) * inv))

    return _result(np.mean(a.data, dtype=_F32), (a,), "mean_all", backward)


def _norm_axis(axis: int, ndim: int, op: str) -> int:
    if not -ndim <= axis < ndim:
        raise ShapeError(f"{op}: axis {axis} out of range for rank {ndim}")
    return axis % ndim


@_diffop
def sum_axis(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    axis = _norm_axis(axis, a.ndim, "sum_axis")

    def backward(g):
        ge = g if keepdims else np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(ge, a.data.shape).astype(_F32))

    return _result(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), "sum_axis", backward)


@_diffop
def max_axis(a: Tensor, axis: int) -> Tensor:
    """Max along an axis; gradient routes to the first maximal entry."""
    axis = _norm_axis(axis, a.ndim, "max_axis")
    idx = np.argmax(a.data, axis=axis)

    def backward(g):
        buf = np.zeros_like(a.data)
        np.put_along_axis(buf, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis)
        _accum(a, buf)

    return _result(np.max(a.data, axis=axis), (a,), "max_axis", backward)


@_diffop
def concat(tensors, axis: int) -> Tensor:
    ts = list(tensors)
    if not ts:
        raise ShapeError("concat: empty input list")
    axis = _norm_axis(axis, ts[0].ndim, "concat")
    base = list(ts[0].data.shape)
    for t in ts[1:]:
        other = list(t.data.shape)
        if len(other) != len(base) or any(
            o != b for i, (o, b) in enumerate(zip(other, base)) if i != axis
        ):
            raise ShapeError(f"concat: shape {t.data.shape} incompatible with {ts[0].data.shape} on axis {axis}")
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(t, g[tuple(sl)])

    return _result(np.concatenate([t.data for t in ts], axis=axis), ts, "concat", backward)


@_diffop
def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis."""
    axis = _norm_axis(axis, a.ndim, "narrow")
    if start < 0 or length < 1 or start + length > a.data.shape[axis]:
        raise ShapeError(f"narrow: [{start}:{start + length}) outside axis of size {a.data.shape[axis]}")
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def backward(g):
        buf = np.zeros_like(a.data)
        buf[sl] = g
        _accum(a, buf)

    return _result(a.data[sl].copy(), (a,), "narrow", backward)


@_diffop
def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def backward(g):
        _accum(a, np.ascontiguousarray(np.transpose(g, inv)))

    return _result(np.ascontiguousarray(np.transpose(a.data, axes)), (a,), "transpose", backward)


@_diffop
def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    orig = a.data.shape

    def backward(g):
        _accum(a, g.reshape(orig))

    return _result(np.ascontiguousarray(a.data.reshape(shape)), (a,), "reshape", backward)


@_diffop
def softmax_axis(a: Tensor, axis: int) -> Tensor:
    axis = _norm_axis(axis, a.ndim, "softmax_axis")
    x = a.data
    shifted = x - np.max(x, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    out = ex / np.sum(ex, axis=axis, keepdims=True)

    def backward(g):
        dot = np.sum(g * out, axis=axis, keepdims=True)
        _accum(a, out * (g - dot))

    return _result(out, (a,), "softmax_axis", backward)


@_diffop
def shift_horizontal(a: Tensor, offset: int, fill: float = 0.0, axis: int = -1) -> Tensor:
    """out[..., x] = in[..., x - offset] where in range, else fill.

    Gradient routes through in-range positions only; the fill is constant.
    """
    axis = _norm_axis(axis, a.ndim, "shift_horizontal")
    offset = int(offset)
    w = a.data.shape[axis]
    out = np.full_like(a.data, _F32(fill))

    def _sl(lo, hi):
        s = [slice(None)] * a.ndim
        s[axis] = slice(lo, hi)
        return tuple(s)

    if abs(offset) < w:
        if offset >= 0:
            dst, src = _sl(offset, w), _sl(0, w - offset)
        else:
            dst, src = _sl(0, w + offset), _sl(-offset, w)
        out[dst] = a.data[src]
    else:
        dst = src = None

    def backward(g):
        buf = np.zeros_like(a.data)
        if dst is not None:
            buf[src] = g[dst]
        _accum(a, buf)

    return _result(out, (a,), "shift_horizontal", backward)


@_diffop
def resample(a: Tensor, factor: str) -> Tensor:
    """down2 = 2x2 average pooling, up2 = nearest-neighbour duplication ([N,C,H,W])."""
    if a.ndim != 4:
        raise ShapeError(f"resample: expected rank-4 [N,C,H,W], got {a.shape}")
    n, c, h, w = a.data.shape
    if factor == "down2":
        if h % 2 or w % 2:
            raise ShapeError(f"resample down2: odd spatial dims ({h}, {w})")
        out = a.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5), dtype=_F32)

        def backward(g):
            _accum(a, np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * _F32(0.25))

    elif factor == "up2":
        out = np.repeat(np.repeat(a.data, 2, axis=2), 2, axis=3)

        def backward(g):
            _accum(a, g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)))

    else:
        raise ValueError(f"resample: unknown factor {factor!r}")
    return _result(out, (a,), "resample", backward)


# ---------------------------------------------------------------------------
# convolution


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a cross-correlation (no kernel flip)."""

    kernel_dims: tuple[int, ...]
    stride: int = 1
    padding: int = 0
    in_channels: int = 1
    out_channels: int = 1

    def __post_init__(self):
        for k in self.kernel_dims:
            if k < 1 or k % 2 == 0:
                raise ShapeError(f"ConvSpec: kernel size {k} must be odd and positive")
        if self.stride < 1:
            raise ShapeError(f"ConvSpec: stride {self.stride} must be positive")
        if self.padding < 0:
            raise ShapeError(f"ConvSpec: padding {self.padding} must be non-negative")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ShapeError("ConvSpec: channel counts must be positive")

    def out_size(self, in_size: int, axis: int) -> int:
        out = (in_size + 2 * self.padding - self.kernel_dims[axis]) // self.stride + 1
        if out < 1:
            raise ShapeError(
                f"ConvSpec: output size {out} < 1 for input {in_size}, "
                f"kernel {self.kernel_dims[axis]}, stride {self.stride}, padding {self.padding}"
            )
        return out


def _corr_nd(x: Tensor, w: Tensor, b: Tensor, spec: ConvSpec, nsp: int, op: str) -> Tensor:
    """Shared N-spatial-dim cross-correlation (shift-and-GEMM, channels-last core)."""
    if x.ndim != nsp + 2:
        raise ShapeError(f"{op}: input rank {x.ndim}, expected {nsp + 2}")
    if w.ndim != nsp + 2:
        raise ShapeError(f"{op}: weight rank {w.ndim}, expected {nsp + 2}")
    co, ci = w.data.shape[0], w.data.shape[1]
    kdims = w.data.shape[2:]
    if kdims != tuple(spec.kernel_dims):
        raise ShapeError(f"{op}: weight kernel {kdims} != spec kernel {tuple(spec.kernel_dims)}")
    if (ci, co) != (spec.in_channels, spec.out_channels):
        raise ShapeError(
            f"{op}: weight channels ({co},{ci}) != spec ({spec.out_channels},{spec.in_channels})"
        )
    if x.data.shape[1] != ci:
        raise ShapeError(f"{op}: input has {x.data.shape[1]} channels, weight expects {ci}")
    if b.data.shape != (co,):
        raise ShapeError(f"{op}: bias shape {b.data.shape}, expected ({co},)")
    n = x.data.shape[0]
    sin = x.data.shape[2:]
    sout = tuple(spec.out_size(sin[i], i) for i in range(nsp))
    stride, pad = spec.stride, spec.padding
    m = n * int(np.prod(sout))

    xcl = np.ascontiguousarray(np.moveaxis(x.data, 1, -1))
    pads = ((0, 0),) + ((pad, pad),) * nsp + ((0, 0),)
    xp = np.pad(xcl, pads) if pad else xcl

    # windows are kept for the weight gradient; trades memory for one gather
    cols_cache: list = []
    out_cl = _corr_core_cl(xp, w.data, stride, sout,
                           keep=cols_cache if (_grad_enabled and w.requires_grad) else None)
    out_cl += b.data
    out = np.ascontiguousarray(np.moveaxis(out_cl, -1, 1))

    def backward(g):
        gcl = np.ascontiguousarray(np.moveaxis(g, 1, -1))
        if w.requires_grad:
            _accum(w, _corr_core_dw(xp, gcl, w.data.shape, stride, cols_cache))
            cols_cache.clear()
        if b.requires_grad:
            _accum(b, gcl.reshape(m, co).sum(axis=0))
        if x.requires_grad:
            dxcl = _corr_core_dx(gcl, w.data, stride, pad, sin)
            _accum(x, np.ascontiguousarray(np.moveaxis(dxcl, -1, 1)))

    return _result(out, (x, w, b), op, backward)


def _row_windows(xp, kdims, stride, sout, lead):
    """Contiguous last-axis windows of a channels-last padded buffer.

    Returns the [rows, k_last*C] matrix of windows at the leading kernel
    offset `lead`; each window is one contiguous memory run, which keeps
    the materializing reshape cheap.
    """
    c = xp.shape[-1]
    n = xp.shape[0]
    k_last = kdims[-1]
    flat = xp.reshape(xp.shape[:-2] + (xp.shape[-2] * c,))
    sel = (slice(None),) + tuple(
        slice(o, o + stride * (sout[i] - 1) + 1, stride) for i, o in enumerate(lead)
    )
    rows = flat[sel]
    win = np.lib.stride_tricks.sliding_window_view(rows, k_last * c, axis=rows.ndim - 1)
    win = win[..., ::c * stride, :]
    return win.reshape(n * int(np.prod(sout)), k_last * c)


def _corr_core_cl(xp, w, stride, sout, keep=None):
    """Correlation on a channels-last padded buffer; returns [N, *sout, Co].

    Loops over the leading kernel offsets only; the innermost kernel axis is
    fused with the channel axis into a single GEMM per offset. With `keep`,
    the materialized window matrices are appended there for backward reuse.
    """
    co, ci = w.shape[:2]
    kdims = w.shape[2:]
    # [*K, Ci, Co] with the last kernel axis adjacent to channels
    wt = np.ascontiguousarray(w.transpose(tuple(range(2, w.ndim)) + (1, 0)))
    acc = None
    for lead in product(*map(range, kdims[:-1])):
        cols = _row_windows(xp, kdims, stride, sout, lead)
        if keep is not None:
            keep.append(cols)
        term = cols @ wt[lead].reshape(kdims[-1] * ci, co)
        if acc is None:
            acc = term
        else:
            acc += term
    return acc.reshape((xp.shape[0],) + tuple(sout) + (co,))


def _corr_core_dw(xp, gcl, wshape, stride, cols_cache=None):
    """Weight gradient via the same per-offset window decomposition."""
    co, ci = wshape[:2]
    kdims = wshape[2:]
    sout = gcl.shape[1:-1]
    g2 = gcl.reshape(-1, co)
    dwt = np.empty(tuple(kdims) + (ci, co), dtype=_F32)
    for flat, lead in enumerate(product(*map(range, kdims[:-1]))):
        if cols_cache:
            cols = cols_cache[flat]
        else:
            cols = _row_windows(xp, kdims, stride, sout, lead)
        dwt[lead] = (cols.T @ g2).reshape(kdims[-1], ci, co)
    return np.moveaxis(dwt, (-1, -2), (0, 1))


def _corr_core_dx(gcl, w, stride, pad, sin):
    """Input gradient: full correlation of the dilated output gradient with
    the spatially flipped, channel-swapped kernel."""
    co, ci = w.shape[:2]
    kdims = w.shape[2:]
    nsp = len(kdims)
    n = gcl.shape[0]
    sout = gcl.shape[1:-1]
    if stride > 1:
        dil_shape = tuple((sout[i] - 1) * stride + 1 for i in range(nsp))
        dil = np.zeros((n,) + dil_shape + (co,), dtype=_F32)
        dil[(slice(None),) + (slice(None, None, stride),) * nsp] = gcl
    else:
        dil = gcl
    extra = [kdims[i] - 1 - pad for i in range(nsp)]
    rem = [(sin[i] + 2 * pad - kdims[i]) % stride for i in range(nsp)]
    if min(extra) >= 0:
        gpads = ((0, 0),) + tuple((extra[i], extra[i] + rem[i]) for i in range(nsp)) + ((0, 0),)
        gp = np.pad(dil, gpads)
    else:  # 1x.. kernels with padding: crop instead of padding negatively
        sl = (slice(None),) + tuple(
            slice(-extra[i], dil.shape[1 + i] + extra[i] + rem[i]) for i in range(nsp)
        ) + (slice(None),)
        gp = np.ascontiguousarray(np.pad(dil, ((0, 0),) + tuple(
            (max(extra[i], 0), max(extra[i], 0) + rem[i]) for i in range(nsp)) + ((0, 0),))[sl])
    wflip = w[(slice(None), slice(None)) + (slice(None, None, -1),) * nsp]
    return _corr_core_cl(gp, np.ascontiguousarray(wflip.swapaxes(0, 1)), 1, sin)


@_diffop
def conv2d(x: Tensor, w: Tensor, b: Tensor, spec: ConvSpec) -> Tensor:
    """[N,Ci,H,W] x [Co,Ci,kh,kw] -> [N,Co,H',W'] cross-correlation with zero padding."""
    return _corr_nd(x, w, b, spec, 2, "conv2d")


@_diffop
def conv3d(x: Tensor, w: Tensor, b: Tensor, spec: ConvSpec) -> Tensor:
    """[N,Ci,D,H,W] x [Co,Ci,kd,kh,kw] -> [N,Co,D',H',W']."""
    return _corr_nd(x, w, b, spec, 3, "conv3d")


# ---------------------------------------------------------------------------
# verification oracle


def grad_check(f, x: Tensor, eps: float = 1e-2) -> float:
    """Compare the backward pass of scalar-valued f against central differences.

    Returns max over coordinates of |analytic - numeric| / max(1, |analytic|,
    |numeric|). f must be pure: it is re-evaluated with perturbed copies of x.
    """
    if not 1e-4 <= eps <= 1e-1:
        raise ValueError(f"grad_check: eps {eps} outside [1e-4, 1e-1]")
    if not x.requires_grad:
        raise ValueError("grad_check: x must require gradients")
    x.zero_grad()
    y = f(x)
    if y.data.size != 1:
        raise ShapeError(f"grad_check: f returned shape {y.shape}, expected scalar")
    y.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.astype(np.float64)
    flat_grad = analytic.reshape(-1)
    worst = 0.0
    with no_grad():
        for i in range(x.data.size):
            orig = x.data.flat[i]
            x.data.flat[i] = orig + _F32(eps)
            hi_x = float(x.data.flat[i])
            hi = float(f(x).data.reshape(()))
            x.data.flat[i] = orig - _F32(eps)
            lo_x = float(x.data.flat[i])
            lo = float(f(x).data.reshape(()))
            x.data.flat[i] = orig
            numeric = (hi - lo) / (hi_x - lo_x)
            a = float(flat_grad[i])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# TNSR binary format: magic "TNSR", u32le rank, u32le dims, f32le row-major


def write_tnsr(arr, fh) -> None:
    data = np.ascontiguousarray(np.asarray(arr, dtype=_F32))
    fh.write(b"TNSR")
    fh.write(struct.pack("<I", data.ndim))
    fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
    fh.write(data.astype("<f4").tobytes())


def read_tnsr(fh) -> np.ndarray:
    magic = fh.read(4)
    if magic != b"TNSR":
        raise ValueError(f"bad TNSR magic {magic!r} at offset 0")
    raw = fh.read(4)
    if len(raw) != 4:
        raise ValueError("truncated TNSR rank at offset 4")
    (rank,) = struct.unpack("<I", raw)
    raw = fh.read(4 * rank)
    if len(raw) != 4 * rank:
        raise ValueError(f"truncated TNSR dims at offset 8 (rank {rank})")
    dims = struct.unpack(f"<{rank}I", raw)
    count = int(np.prod(dims)) if rank else 1
    raw = fh.read(4 * count)
    if len(raw) != 4 * count:
        raise ValueError(f"truncated TNSR payload at offset {8 + 4 * rank}: "
                         f"expected {4 * count} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype="<f4").reshape(dims).astype(_F32)


def save_tensor(path, arr) -> None:
    with open(path, "wb") as fh:
        write_tnsr(arr, fh)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tnsr(fh)
