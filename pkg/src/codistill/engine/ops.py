"""Primitive differentiable operations over :class:`~codistill.engine.tensor.Tensor`.

Each op computes its forward value with numpy and registers a closure that
maps the output gradient to per-input gradients.  Broadcasting follows
numpy; gradients are summed back to the original operand shapes.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

from ..errors import ParameterError, ShapeError
from .tensor import Tensor, as_tensor, make_node


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_dtypes(a: Tensor, b: Tensor) -> None:
    if a.data.dtype != b.data.dtype:
        raise ShapeError(f"mixed dtypes {a.data.dtype} and {b.data.dtype}; cast explicitly")


# -- arithmetic -----------------------------------------------------------------


def add(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    _check_dtypes(a, b)
    data = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return make_node(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    _check_dtypes(a, b)
    data = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return make_node(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    _check_dtypes(a, b)
    data = a.data * b.data

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return make_node(data, (a, b), backward)


def div(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    _check_dtypes(a, b)
    data = a.data / b.data

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * data / b.data, b.data.shape),
        )

    return make_node(data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return make_node(-a.data, (a,), lambda g: (-g,))


def pow_scalar(a: Tensor, exponent: float) -> Tensor:
    p = float(exponent)
    data = a.data**p

    def backward(g):
        return (g * p * a.data ** (p - 1.0),)

    return make_node(data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)
    return make_node(data, (a,), lambda g: (g * data,))


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)
    return make_node(data, (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)

    def backward(g):
        return (g * (0.5 / data),)

    return make_node(data, (a,), backward)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU: x * Phi(x)."""
    phi = ndtr(a.data).astype(a.data.dtype, copy=False)
    data = a.data * phi

    def backward(g):
        scale = np.asarray(1.0 / np.sqrt(2.0 * np.pi), dtype=a.data.dtype)
        dens = np.exp(-0.5 * a.data * a.data) * scale
        return (g * (phi + a.data * dens),)

    return make_node(data, (a,), backward)


# -- structure ------------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)
    return make_node(data, (a,), lambda g: (g.reshape(a.data.shape),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_node(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def getitem(a: Tensor, key) -> Tensor:
    data = a.data[key]

    def backward(g):
        out = np.zeros_like(a.data)
        out[key] = g
        return (out,)

    return make_node(data, (a,), backward)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    split_at = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, split_at, axis=axis))

    return make_node(data, tuple(tensors), backward)


# -- reductions -------------------------------------------------------------------


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape),)

    return make_node(data, (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for ax in axes:
            count *= a.data.shape[ax]
    inv = np.asarray(1.0 / count, dtype=a.data.dtype)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g * inv, a.data.shape),)
        gk = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gk * inv, a.data.shape),)

    return make_node(data, (a,), backward)


# -- linear algebra ----------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_dtypes(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must have at least 2 dimensions")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dims disagree: {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def backward(g):
        da = _unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape)
        db = _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape)
        return da, db

    return make_node(data, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` fused into one tape node; leading dims of x are batch dims.

    ``w`` has shape (in_features, out_features).
    """
    _check_dtypes(x, w)
    if x.data.shape[-1] != w.data.shape[0]:
        raise ShapeError(f"linear: input width {x.data.shape[-1]} != weight rows {w.data.shape[0]}")
    lead = x.data.shape[:-1]
    xf = x.data.reshape(-1, x.data.shape[-1])
    yf = xf @ w.data
    if b is not None:
        yf = yf + b.data
    data = yf.reshape(*lead, w.data.shape[1])

    def backward(g):
        gf = g.reshape(-1, w.data.shape[1])
        dx = (gf @ w.data.T).reshape(x.data.shape)
        dw = xf.T @ gf
        if b is None:
            return dx, dw
        return dx, dw, gf.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return make_node(data, parents, backward)


def weight_norm_linear(x: Tensor, v: Tensor) -> Tensor:
    """Linear layer whose effective weight columns are unit-normalized.

    ``v`` has shape (in_features, out_features); each output unit's weight
    vector is v[:, k] / ||v[:, k]||, with the norm kept differentiable.
    """
    _check_dtypes(x, v)
    norms = np.sqrt((v.data * v.data).sum(axis=0, keepdims=True))
    w = v.data / norms
    lead = x.data.shape[:-1]
    xf = x.data.reshape(-1, x.data.shape[-1])
    data = (xf @ w).reshape(*lead, v.data.shape[1])

    def backward(g):
        gf = g.reshape(-1, v.data.shape[1])
        dx = (gf @ w.T).reshape(x.data.shape)
        dw = xf.T @ gf
        dv = (dw - w * (w * dw).sum(axis=0, keepdims=True)) / norms
        return dx, dv

    return make_node(data, (x, v), backward)


# -- convolution --------------------------------------------------------------------


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    b, c, _, _ = xp.shape
    s0, s1, s2, s3 = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(b, c, ho, wo, kh, kw),
        strides=(s0, s1, s2 * stride, s3 * stride, s2, s3),
        writeable=False,
    )
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * kh * kw)


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation of (B,C,H,W) input with an (F,C,kh,kw) kernel.

    The padded spatial extent must produce an integral output size.
    """
    _check_dtypes(x, w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError("conv2d expects (B,C,H,W) input and (F,C,kh,kw) kernel")
    b, c, h, wd = x.data.shape
    f, ck, kh, kw = w.data.shape
    if ck != c:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, kernel expects {ck}")
    if kh > h + 2 * padding or kw > wd + 2 * padding:
        raise ShapeError("conv2d kernel larger than padded input")
    if (h + 2 * padding - kh) % stride or (wd + 2 * padding - kw) % stride:
        raise ShapeError(
            f"conv2d output size is not integral for input {h}x{wd}, "
            f"kernel {kh}x{kw}, stride {stride}, padding {padding}"
        )
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    wmat = w.data.reshape(f, -1)
    out = cols @ wmat.T
    data = np.ascontiguousarray(out.reshape(b, ho, wo, f).transpose(0, 3, 1, 2))

    def backward(g):
        gf = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, f)
        dw = (gf.T @ cols).reshape(w.data.shape)
        dcols = gf @ wmat
        d6 = dcols.reshape(b, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
        hp, wp = h + 2 * padding, wd + 2 * padding
        dxp = np.zeros((b, c, hp, wp), dtype=x.data.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += d6[:, :, i, j]
        dx = dxp[:, :, padding : padding + h, padding : padding + wd] if padding else dxp
        return dx, dw

    return make_node(data, (x, w), backward)


# -- softmax family ------------------------------------------------------------------


def softmax_lastdim(x: Tensor, temperature: float = 1.0) -> Tensor:
    """Temperature softmax over the last dimension, stabilized by max-subtraction."""
    if temperature <= 0:
        raise ParameterError(f"softmax temperature must be positive, got {temperature}")
    inv_t = np.asarray(1.0 / temperature, dtype=x.data.dtype)
    z = (x.data - x.data.max(axis=-1, keepdims=True)) * inv_t
    e = np.exp(z)
    data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * data).sum(axis=-1, keepdims=True)
        return (data * (g - inner) * inv_t,)

    return make_node(data, (x,), backward)


def log_softmax_lastdim(x: Tensor, temperature: float = 1.0) -> Tensor:
    """log(softmax(x / temperature)), fused for numerical stability."""
    if temperature <= 0:
        raise ParameterError(f"softmax temperature must be positive, got {temperature}")
    inv_t = np.asarray(1.0 / temperature, dtype=x.data.dtype)
    z = (x.data - x.data.max(axis=-1, keepdims=True)) * inv_t
    data = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))

    def backward(g):
        probs = np.exp(data)
        return ((g - probs * g.sum(axis=-1, keepdims=True)) * inv_t,)

    return make_node(data, (x,), backward)


# -- normalization --------------------------------------------------------------------


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize the last dimension to zero mean / unit variance, then affine."""
    _check_dtypes(x, gamma)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.data.dtype))
    xhat = xc * inv_std
    data = xhat * gamma.data + beta.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=lead)
        dbeta = g.sum(axis=lead)
        gh = g * gamma.data
        m1 = gh.mean(axis=-1, keepdims=True)
        m2 = (gh * xhat).mean(axis=-1, keepdims=True)
        dx = (gh - m1 - xhat * m2) * inv_std
        return dx, dgamma, dbeta

    return make_node(data, (x, gamma, beta), backward)


def group_norm(x: Tensor, gamma: Tensor, beta: Tensor, groups: int, eps: float = 1e-5) -> Tensor:
    """Per-sample group normalization over (B,C,H,W) with per-channel affine."""
    _check_dtypes(x, gamma)
    b, c, h, w = x.data.shape
    if c % groups:
        raise ShapeError(f"group_norm: {groups} groups do not divide {c} channels")
    xg = x.data.reshape(b, groups, -1)
    mu = xg.mean(axis=-1, keepdims=True)
    xc = xg - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.data.dtype))
    xhat = (xc * inv_std).reshape(b, c, h, w)
    gam = gamma.data.reshape(1, c, 1, 1)
    data = xhat * gam + beta.data.reshape(1, c, 1, 1)

    def backward(g):
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dbeta = g.sum(axis=(0, 2, 3))
        gh = (g * gam).reshape(b, groups, -1)
        xh = xhat.reshape(b, groups, -1)
        m1 = gh.mean(axis=-1, keepdims=True)
        m2 = (gh * xh).mean(axis=-1, keepdims=True)
        dx = ((gh - m1 - xh * m2) * inv_std).reshape(b, c, h, w)
        return dx, dgamma, dbeta

    return make_node(data, (x, gamma, beta), backward)


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Scale slices along ``axis`` to unit Euclidean norm."""
    sq = (x.data * x.data).sum(axis=axis, keepdims=True)
    norm = np.sqrt(sq + np.asarray(eps, dtype=x.data.dtype))
    data = x.data / norm

    def backward(g):
        inner = (g * x.data).sum(axis=axis, keepdims=True)
        return (g / norm - x.data * (inner / (norm * norm * norm)),)

    return make_node(data, (x,), backward)
