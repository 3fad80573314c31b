"""Layer descriptions shared by the graph pipeline and the reference CNN."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .numerics import as_tensor

PADDING_KINDS = ("zero", "constant", "replicate", "reflect")


@dataclass(frozen=True, eq=False)
class Kernel2D:
    """Convolution weights of shape (out, in, kh, kw) with odd spatial sizes."""

    weights: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        w = as_tensor(self.weights)
        if w.ndim != 4:
            raise ValueError(f"kernel weights must be 4-D, got shape {w.shape}")
        if w.shape[2] % 2 == 0 or w.shape[3] % 2 == 0:
            raise ValueError(f"kernel spatial size must be odd, got {w.shape[2]}x{w.shape[3]}")
        object.__setattr__(self, "weights", w)
        if self.bias is not None:
            b = as_tensor(self.bias).ravel()
            if len(b) != w.shape[0]:
                raise ValueError("bias length differs from output channels")
            object.__setattr__(self, "bias", b)

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def size(self) -> tuple[int, int]:
        return self.weights.shape[2], self.weights.shape[3]


@dataclass(frozen=True, eq=False)
class PaddingMode:
    kind: str = "zero"
    value: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in PADDING_KINDS:
            raise ValueError(f"unknown padding mode {self.kind!r}")
        if self.kind == "constant":
            if self.value is None:
                raise ValueError("constant padding needs a value vector")
            object.__setattr__(self, "value", as_tensor(self.value).ravel())

    def constant_for(self, channels: int) -> np.ndarray:
        if len(self.value) != channels:
            raise ValueError(f"constant padding has {len(self.value)} values for {channels} channels")
        return self.value


@dataclass(eq=False)
class Conv:
    kernel: Kernel2D
    stride: int = 1
    dilation: int = 1
    padding: PaddingMode = field(default_factory=PaddingMode)


@dataclass(eq=False)
class ReLU:
    pass


@dataclass(eq=False)
class AffineNorm:
    scale: np.ndarray
    shift: np.ndarray


@dataclass(eq=False)
class MaxPool:
    size: int = 2


@dataclass(eq=False)
class AvgPool:
    size: int = 2


@dataclass(eq=False)
class Upsample:
    scale: int = 2
    mode: str = "copy"


@dataclass(eq=False)
class Flatten:
    pass


@dataclass(eq=False)
class Linear:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray | None = None


Layer = Union[Conv, ReLU, AffineNorm, MaxPool, AvgPool, Upsample, Flatten, Linear]


def random_kernel(rng: np.random.Generator, out_ch: int, in_ch: int, kh: int, kw: int | None = None,
                  bias=True) -> Kernel2D:
    kw = kh if kw is None else kw
    scale = np.sqrt(2.0 / (in_ch * kh * kw))
    w = rng.normal(0.0, scale, size=(out_ch, in_ch, kh, kw))
    b = rng.normal(0.0, 0.1, size=out_ch) if bias else None
    return Kernel2D(w, b)


def vgg11_layers(rng: np.random.Generator, in_ch=3, classes=10, widths=None) -> list[Layer]:
    """VGG-11 layout for 32 x 32 inputs: 8 convs, 5 max-pools, 3 linear layers."""
    widths = widths or (64, 128, 256, 256, 512, 512, 512, 512)
    pools_after = {0, 1, 3, 5, 7}
    layers: list[Layer] = []
    c = in_ch
    for i, w in enumerate(widths):
        layers += [Conv(random_kernel(rng, w, c, 3)), ReLU()]
        c = w
        if i in pools_after:
            layers.append(MaxPool(2))
    hidden = widths[-1]
    layers.append(Flatten())
    for out in (hidden, hidden, classes):
        fan_in = c
        layers.append(Linear(rng.normal(0, np.sqrt(2.0 / fan_in), (out, fan_in)), rng.normal(0, 0.1, out)))
        c = out
        if out != classes:
            layers.append(ReLU())
    return layers
