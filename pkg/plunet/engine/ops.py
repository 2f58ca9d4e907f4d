"""
Differentiable primitives. Every op is a pure function of its input tensors (plus explicit running-stat state for
batch normalization); when a GradTape is active the op appends its backward closure to it.
"""

from __future__ import annotations

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Any

import numpy as np
import numpy.typing as npt
from numpy.lib.stride_tricks import as_strided

import plunet.errors as err
from plunet.engine.settings import SETTINGS
from plunet.engine.spec import ConvSpec
from plunet.engine.tape import record
from plunet.engine.tensor import Dims, Tensor
from plunet.names import Mode

type Array = npt.NDArray[Any]

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


# region helpers
def _same_dtype(op: str, *tensors: Tensor) -> None:
    if len({t.dtype for t in tensors}) > 1:
        raise err.dtype_mismatch(op, (t.dtype for t in tensors))


def _emit(op: str, inputs: Sequence[Tensor], data: Array, backward: Any) -> Tensor:
    if SETTINGS.debug and not np.isfinite(data).all() and all(np.isfinite(t.data).all() for t in inputs):
        raise err.non_finite(op)

    return record(op, inputs, Tensor(data), backward)


def _matmul(a: Array, b: Array) -> Array:
    """Batched (G, M, K) @ (G, K, P). Rows are split across worker threads outside the deterministic mode."""
    threads = SETTINGS.threads
    rows = a.shape[1]
    if SETTINGS.deterministic or rows < 2 * threads:
        return np.matmul(a, b)

    bounds = np.linspace(0, rows, threads + 1, dtype=int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda i: np.matmul(a[:, bounds[i] : bounds[i + 1]], b), range(threads)))

    return np.concatenate(parts, axis=1)


def _im2col(x: Array, spec: ConvSpec, out_dims: Dims) -> Array:
    """Gather every receptive window as a row: (G, N*Hout*Wout, Cg*kh*kw), columns ordered c, then u, then v."""
    n, c, _, _ = x.shape
    _, _, h_out, w_out = out_dims
    ph, pw = spec.padding
    kh, kw = spec.kernel

    padded = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else x
    sn, sc, sh, sw = padded.strides
    windows = as_strided(
        padded,
        shape=(n, c, h_out, w_out, kh, kw),
        strides=(
            sn,
            sc,
            sh * spec.stride[0],
            sw * spec.stride[1],
            sh * spec.dilation[0],
            sw * spec.dilation[1],
        ),
        writeable=False,
    )

    g = spec.groups
    cg = c // g
    return (
        windows.reshape(n, g, cg, h_out, w_out, kh, kw)
        .transpose(1, 0, 3, 4, 2, 5, 6)
        .reshape(g, n * h_out * w_out, cg * kh * kw)
    )


def _col2im(cols: Array, in_dims: Dims, spec: ConvSpec, out_dims: Dims) -> Array:
    """Adjoint of _im2col: scatter-add window rows back onto the (unpadded) input grid."""
    n, c, h, w = in_dims
    _, _, h_out, w_out = out_dims
    ph, pw = spec.padding
    kh, kw = spec.kernel
    sh, sw = spec.stride
    dh, dw = spec.dilation
    g = spec.groups
    cg = c // g

    taps = (
        cols.reshape(g, n, h_out, w_out, cg, kh, kw)
        .transpose(1, 0, 4, 5, 6, 2, 3)
        .reshape(n, c, kh, kw, h_out, w_out)
    )
    padded = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=cols.dtype)

    for u in range(kh):
        for v in range(kw):
            r0, c0 = u * dh, v * dw
            padded[:, :, r0 : r0 + sh * (h_out - 1) + 1 : sh, c0 : c0 + sw * (w_out - 1) + 1 : sw] += taps[:, :, u, v]

    return padded[:, :, ph : ph + h, pw : pw + w]


def _check_channels_param(op: str, param: Tensor | None, channels: int) -> None:
    if param is not None and param.dims != (1, channels, 1, 1):
        raise err.shape_mismatch(op, f"per-channel tensor {param.dims} vs {channels} channels")


# endregion


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, spec: ConvSpec) -> Tensor:
    """Grouped, strided, dilated, zero-padded 2D cross-correlation."""
    op = "conv2d"
    _same_dtype(op, x, w, *([b] if b is not None else []))
    out_dims = spec.output_dims(x.dims, op)

    if w.dims != spec.weight_dims:
        raise err.shape_mismatch(op, f"weight {w.dims} vs expected {spec.weight_dims}")

    _check_channels_param(op, b, spec.out_channels)

    n, _, h_out, w_out = out_dims
    g = spec.groups
    og = spec.out_channels // g

    cols = _im2col(x.data, spec, out_dims)
    weights = w.data.reshape(g, og, -1).transpose(0, 2, 1)
    out = (
        _matmul(cols, weights)
        .reshape(g, n, h_out, w_out, og)
        .transpose(1, 0, 4, 2, 3)
        .reshape(out_dims)
    )
    if b is not None:
        out = out + b.data

    def backward(grad: Array) -> tuple[Array, Array, Array | None]:
        grad_rows = grad.reshape(n, g, og, h_out, w_out).transpose(1, 0, 3, 4, 2).reshape(g, n * h_out * w_out, og)
        grad_w = np.matmul(cols.transpose(0, 2, 1), grad_rows).transpose(0, 2, 1).reshape(w.dims)
        grad_x = _col2im(np.matmul(grad_rows, weights.transpose(0, 2, 1)), x.dims, spec, out_dims)
        grad_b = grad.sum(axis=(0, 2, 3)).reshape(1, -1, 1, 1) if b is not None else None
        return grad_x, grad_w, grad_b

    inputs = (x, w, b) if b is not None else (x, w)
    return _emit(op, inputs, out, lambda grad: backward(grad)[: len(inputs)])


def conv2d_depthwise_separable(
    x: Tensor,
    w_depth: Tensor,
    w_point: Tensor,
    spec: ConvSpec,
    b_depth: Tensor | None = None,
    b_point: Tensor | None = None,
) -> Tensor:
    """
    Per-channel spatial convolution (groups = in_channels, spec's kernel/stride/padding/dilation) followed by a 1x1
    pointwise convolution in -> out.
    """
    depth_spec = ConvSpec(
        spec.in_channels, spec.in_channels, spec.kernel, spec.stride, spec.padding, spec.dilation, spec.in_channels
    )
    point_spec = ConvSpec.pointwise(spec.in_channels, spec.out_channels)
    return conv2d(conv2d(x, w_depth, b_depth, depth_spec), w_point, b_point, point_spec)


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor | None, spec: ConvSpec) -> Tensor:
    """2x2 stride-2 transposed convolution, weight dims (in, out, 2, 2); doubles the spatial extents."""
    op = "conv_transpose2d"
    if spec.kernel != (2, 2) or spec.stride != (2, 2) or spec.padding != (0, 0) or spec.dilation != (1, 1):
        raise err.unsupported_configuration(op, "only kernel 2x2, stride 2, no padding, no dilation is supported")

    if spec.groups != 1:
        raise err.unsupported_configuration(op, "groups must be 1")

    _same_dtype(op, x, w, *([b] if b is not None else []))
    n, c, h, wd = x.dims
    if c != spec.in_channels:
        raise err.shape_mismatch(op, f"input has {c} channels, spec expects {spec.in_channels}")

    c_out = spec.out_channels
    if w.dims != (c, c_out, 2, 2):
        raise err.shape_mismatch(op, f"weight {w.dims} vs expected {(c, c_out, 2, 2)}")

    _check_channels_param(op, b, c_out)

    rows = x.data.transpose(0, 2, 3, 1).reshape(n * h * wd, c)
    weights = w.data.reshape(c, c_out * 4)
    out = (rows @ weights).reshape(n, h, wd, c_out, 2, 2).transpose(0, 3, 1, 4, 2, 5).reshape(n, c_out, 2 * h, 2 * wd)
    if b is not None:
        out = out + b.data

    def backward(grad: Array) -> tuple[Array, Array, Array | None]:
        grad_rows = grad.reshape(n, c_out, h, 2, wd, 2).transpose(0, 2, 4, 1, 3, 5).reshape(n * h * wd, c_out * 4)
        grad_x = (grad_rows @ weights.T).reshape(n, h, wd, c).transpose(0, 3, 1, 2)
        grad_w = (rows.T @ grad_rows).reshape(w.dims)
        grad_b = grad.sum(axis=(0, 2, 3)).reshape(1, -1, 1, 1) if b is not None else None
        return grad_x, grad_w, grad_b

    inputs = (x, w, b) if b is not None else (x, w)
    return _emit(op, inputs, out, lambda grad: backward(grad)[: len(inputs)])


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
    mode: Mode,
    eps: float = BN_EPS,
    momentum: float = BN_MOMENTUM,
) -> Tensor:
    """
    Train mode normalizes with batch statistics over (N, H, W) and updates the running statistics in place;
    eval mode uses the running statistics and mutates nothing.
    """
    op = "batchnorm2d"
    _same_dtype(op, x, gamma, beta, running_mean, running_var)
    n, c, h, w = x.dims
    for param in (gamma, beta, running_mean, running_var):
        _check_channels_param(op, param, c)

    data = x.data
    count = n * h * w

    if mode is Mode.train:
        if count == 1:
            raise err.undefined_variance(op)

        mean = data.mean(axis=(0, 2, 3), keepdims=True)
        centered = data - mean
        var = (centered * centered).mean(axis=(0, 2, 3), keepdims=True)

        running_mean.data[...] = (1 - momentum) * running_mean.data + momentum * mean
        running_var.data[...] = (1 - momentum) * running_var.data + momentum * var * (count / (count - 1))

    else:
        centered = data - running_mean.data
        var = running_var.data

    inv_std = 1.0 / np.sqrt(var + eps)
    normalized = centered * inv_std
    out = gamma.data * normalized + beta.data

    def backward(grad: Array) -> tuple[Array, Array, Array]:
        grad_gamma = (grad * normalized).sum(axis=(0, 2, 3), keepdims=True)
        grad_beta = grad.sum(axis=(0, 2, 3), keepdims=True)
        grad_norm = grad * gamma.data

        if mode is Mode.train:
            grad_x = (inv_std / count) * (
                count * grad_norm
                - grad_norm.sum(axis=(0, 2, 3), keepdims=True)
                - normalized * (grad_norm * normalized).sum(axis=(0, 2, 3), keepdims=True)
            )
        else:
            grad_x = grad_norm * inv_std

        return grad_x, grad_gamma, grad_beta

    return _emit(op, (x, gamma, beta), out, backward)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)
    return _emit("relu", (x,), out, lambda grad: (grad * (x.data > 0),))


def sigmoid(x: Tensor) -> Tensor:
    decay = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1 / (1 + decay), decay / (1 + decay))
    return _emit("sigmoid", (x,), out, lambda grad: (grad * out * (1 - out),))


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 window, stride 2. Backward routes to the first maximum in row-major order."""
    op = "maxpool2d"
    n, c, h, w = x.dims
    if h % 2 or w % 2:
        raise err.shape_mismatch(op, f"spatial extents {(h, w)} must be even")

    windows = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    argmax = windows.argmax(axis=-1)[..., None]
    out = np.take_along_axis(windows, argmax, axis=-1)[..., 0]

    def backward(grad: Array) -> tuple[Array]:
        routed = np.zeros_like(windows)
        np.put_along_axis(routed, argmax, grad[..., None], axis=-1)
        return (routed.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w),)

    return _emit(op, (x,), out, backward)


def global_avg_pool(x: Tensor) -> Tensor:
    n, c, h, w = x.dims
    out = x.data.mean(axis=(2, 3), keepdims=True)

    def backward(grad: Array) -> tuple[Array]:
        return (np.broadcast_to(grad / (h * w), (n, c, h, w)).copy(),)

    return _emit("global_avg_pool", (x,), out, backward)


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    op = "concat_channels"
    if not xs:
        raise err.shape_mismatch(op, "nothing to concatenate")

    _same_dtype(op, *xs)
    n, _, h, w = xs[0].dims
    for t in xs[1:]:
        if (t.dims[0], t.dims[2], t.dims[3]) != (n, h, w):
            raise err.shape_mismatch(op, f"{t.dims} vs {xs[0].dims}")

    out = np.concatenate([t.data for t in xs], axis=1)
    bounds = np.cumsum([t.dims[1] for t in xs])[:-1]

    return _emit(op, tuple(xs), out, lambda grad: tuple(np.split(grad, bounds, axis=1)))


def linear(x: Tensor, w: Tensor, b: Tensor | None) -> Tensor:
    """Fully connected stage on (N, C, 1, 1) features; w has dims (out, in, 1, 1), b (1, out, 1, 1)."""
    op = "linear"
    _same_dtype(op, x, w, *([b] if b is not None else []))
    n, c, h, wd = x.dims
    out_features, in_features = w.dims[:2]
    if (h, wd) != (1, 1) or w.dims[2:] != (1, 1) or in_features != c:
        raise err.shape_mismatch(op, f"input {x.dims} vs weight {w.dims}")

    _check_channels_param(op, b, out_features)

    features = x.data.reshape(n, c)
    weights = w.data.reshape(out_features, in_features)
    out = features @ weights.T
    if b is not None:
        out = out + b.data.reshape(1, out_features)

    def backward(grad: Array) -> tuple[Array, Array, Array | None]:
        rows = grad.reshape(n, out_features)
        grad_x = (rows @ weights).reshape(x.dims)
        grad_w = (rows.T @ features).reshape(w.dims)
        grad_b = rows.sum(axis=0).reshape(1, -1, 1, 1) if b is not None else None
        return grad_x, grad_w, grad_b

    inputs = (x, w, b) if b is not None else (x, w)
    return _emit(op, inputs, out.reshape(n, out_features, 1, 1), lambda grad: backward(grad)[: len(inputs)])


def scale_channels(x: Tensor, s: Tensor) -> Tensor:
    """x scaled by a per-(n, c) factor s of dims (N, C, 1, 1)."""
    op = "scale_channels"
    _same_dtype(op, x, s)
    if s.dims != (x.dims[0], x.dims[1], 1, 1):
        raise err.shape_mismatch(op, f"scale {s.dims} vs input {x.dims}")

    out = x.data * s.data

    def backward(grad: Array) -> tuple[Array, Array]:
        return grad * s.data, (grad * x.data).sum(axis=(2, 3), keepdims=True)

    return _emit(op, (x, s), out, backward)
