"""Plain image-domain CNN layers used as ground truth for the graph pipeline.

Images are (C, H, W) float32 arrays. Convolutions are cross-correlations with
"same" padding of ``dilation * (k - 1) / 2`` pixels per side, evaluated at
every ``stride``-th position starting from 0. Reflect padding mirrors without
repeating the edge pixel.

Two independent convolution routes exist: :func:`conv2d_ref` pads with
``numpy.pad`` and accumulates one kernel tap at a time, :func:`conv2d_im2col`
gathers patches through explicit index arithmetic and does one product.
"""

from __future__ import annotations

import numpy as np

from .nets import (
    AffineNorm,
    AvgPool,
    Conv,
    Flatten,
    Kernel2D,
    Layer,
    Linear,
    MaxPool,
    PaddingMode,
    ReLU,
    Upsample,
)
from .numerics import DTYPE, as_tensor


def _check(image, kernel: Kernel2D) -> np.ndarray:
    img = as_tensor(image)
    if img.ndim != 3:
        raise ValueError(f"expected a (C, H, W) image, got shape {img.shape}")
    if img.shape[0] != kernel.in_channels:
        raise ValueError(f"kernel wants {kernel.in_channels} channels, image has {img.shape[0]}")
    return img


def _out_size(n: int, stride: int) -> int:
    return (n - 1) // stride + 1


def _pad(img: np.ndarray, ph: int, pw: int, padding: PaddingMode) -> np.ndarray:
    widths = ((0, 0), (ph, ph), (pw, pw))
    if padding.kind == "zero":
        return np.pad(img, widths)
    if padding.kind == "constant":
        c = padding.constant_for(img.shape[0])
        return np.stack([np.pad(ch, widths[1:], constant_values=v) for ch, v in zip(img, c)])
    if padding.kind == "replicate":
        return np.pad(img, widths, mode="edge")
    return np.pad(img, widths, mode="reflect")


def conv2d_ref(image, kernel: Kernel2D, stride: int = 1, dilation: int = 1,
               padding: PaddingMode | None = None) -> np.ndarray:
    padding = padding or PaddingMode()
    img = _check(image, kernel)
    _, h, w = img.shape
    kh, kw = kernel.size
    ph, pw = dilation * (kh // 2), dilation * (kw // 2)
    padded = _pad(img, ph, pw, padding)
    oh, ow = _out_size(h, stride), _out_size(w, stride)
    out = np.zeros((kernel.out_channels, oh, ow), dtype=DTYPE)
    for r in range(kh):
        for c in range(kw):
            y0, x0 = r * dilation, c * dilation
            patch = padded[:, y0: y0 + (oh - 1) * stride + 1: stride, x0: x0 + (ow - 1) * stride + 1: stride]
            out += np.tensordot(kernel.weights[:, :, r, c], patch, axes=(1, 0))
    if kernel.bias is not None:
        out += kernel.bias[:, None, None]
    return out


def _padded_index(i: np.ndarray, n: int, kind: str) -> np.ndarray:
    """Source index for padded coordinate ``i``; -1 means outside (zero/constant)."""
    if kind in ("zero", "constant"):
        return np.where((i >= 0) & (i < n), i, -1)
    if kind == "replicate":
        return np.clip(i, 0, n - 1)
    if n == 1:
        return np.zeros_like(i)
    period = 2 * (n - 1)
    j = np.mod(i, period)
    return np.where(j < n, j, period - j)


def conv2d_im2col(image, kernel: Kernel2D, stride: int = 1, dilation: int = 1,
                  padding: PaddingMode | None = None) -> np.ndarray:
    padding = padding or PaddingMode()
    img = _check(image, kernel)
    cin, h, w = img.shape
    kh, kw = kernel.size
    oh, ow = _out_size(h, stride), _out_size(w, stride)
    oy = np.arange(oh) * stride
    ox = np.arange(ow) * stride
    ry = (np.arange(kh) - kh // 2) * dilation
    rx = (np.arange(kw) - kw // 2) * dilation
    sy = _padded_index(oy[None, :] + ry[:, None], h, padding.kind)  # (kh, oh)
    sx = _padded_index(ox[None, :] + rx[:, None], w, padding.kind)  # (kw, ow)
    # cols[(ci, r, c), (y, x)]
    yy = sy[:, None, :, None]
    xx = sx[None, :, None, :]
    valid = (yy >= 0) & (xx >= 0)
    gathered = img[:, np.maximum(yy, 0), np.maximum(xx, 0)]  # (cin, kh, kw, oh, ow)
    if padding.kind == "constant":
        fill = padding.constant_for(cin)[:, None, None, None, None]
    else:
        fill = np.zeros((cin, 1, 1, 1, 1), dtype=DTYPE)
    gathered = np.where(valid[None], gathered, fill)
    cols = gathered.reshape(cin * kh * kw, oh * ow)
    out = kernel.weights.reshape(kernel.out_channels, -1) @ cols
    if kernel.bias is not None:
        out += kernel.bias[:, None]
    return out.reshape(kernel.out_channels, oh, ow).astype(DTYPE)


def maxpool2d(image, size: int = 2) -> np.ndarray:
    img = as_tensor(image)
    c, h, w = img.shape
    oh, ow = h // size, w // size
    return img[:, : oh * size, : ow * size].reshape(c, oh, size, ow, size).max(axis=(2, 4))


def avgpool2d(image, size: int = 2) -> np.ndarray:
    img = as_tensor(image)
    c, h, w = img.shape
    oh, ow = h // size, w // size
    blocks = img[:, : oh * size, : ow * size].reshape(c, oh, size, ow, size).astype(np.float64)
    return blocks.mean(axis=(2, 4)).astype(DTYPE)


def upsample_nearest(image, scale: int = 2) -> np.ndarray:
    return np.repeat(np.repeat(as_tensor(image), scale, axis=1), scale, axis=2)


def run_ref(net: list[Layer], image) -> np.ndarray:
    """Apply layers in order; ``Flatten`` switches to a 1-D vector (C, H, W order)."""
    x = as_tensor(image)
    for layer in net:
        if isinstance(layer, Conv):
            x = conv2d_ref(x, layer.kernel, layer.stride, layer.dilation, layer.padding)
        elif isinstance(layer, ReLU):
            x = np.maximum(x, DTYPE(0))
        elif isinstance(layer, AffineNorm):
            shape = (-1,) + (1,) * (x.ndim - 1)
            x = x * as_tensor(layer.scale).reshape(shape) + as_tensor(layer.shift).reshape(shape)
        elif isinstance(layer, MaxPool):
            x = maxpool2d(x, layer.size)
        elif isinstance(layer, AvgPool):
            x = avgpool2d(x, layer.size)
        elif isinstance(layer, Upsample):
            if layer.mode != "copy":
                raise ValueError("the reference network only has nearest upsampling")
            x = upsample_nearest(x, layer.scale)
        elif isinstance(layer, Flatten):
            x = x.reshape(-1)
        elif isinstance(layer, Linear):
            x = as_tensor(layer.weight) @ x.reshape(-1)
            if layer.bias is not None:
                x = x + as_tensor(layer.bias)
        else:
            raise TypeError(f"unsupported layer {type(layer).__name__}")
    return x
