"""Grid-equivalence checks: graph pipeline on a pixel grid vs the image-domain oracle."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from .builders.grid import build_grid
from .graph import PositionalGraph, normalized_adjacency
from .layers import cluster_grid, forward_conv, transfer_conv
from .nets import Conv, Kernel2D, Layer, PaddingMode, random_kernel, vgg11_layers
from .oracle import conv2d_ref, run_ref
from .pipeline import CellGrid, GraphNetwork, image_to_nodes, nodes_to_image

KERNEL_SIZES = (3, 5, 7)
PADDINGS = ("zero", "constant", "replicate", "reflect")
DILATIONS = (1, 2)
STRIDES = (1, 2)
CONV_TOL = 1e-5
NET_TOL = 1e-4

# Largest displacement that can never change the selection of a unit grid
# edge: each endpoint may move the edge direction by at most asin(2r) and a
# selection sector is 22.5 degrees wide on either side.
SAFE_JITTER = float(np.sin(np.pi / 8) / 2)
FAULTS = ("mirror",)


@dataclass
class CheckResult:
    name: str
    deviation: float
    tolerance: float
    passed: bool
    detail: str = ""


def padding_for(kind: str, rng: np.random.Generator, channels: int) -> PaddingMode:
    if kind == "constant":
        return PaddingMode(kind, rng.normal(size=channels))
    return PaddingMode(kind)


def _faulty(kernel: Kernel2D) -> Kernel2D:
    # negative control: a left-right mirrored weight mapping
    return Kernel2D(kernel.weights[:, :, :, ::-1], kernel.bias)


def graph_conv_image(kernel: Kernel2D, image, stride=1, dilation=1, padding=None,
                     graph: PositionalGraph | None = None, fault: str | None = None) -> np.ndarray:
    """Run one transferred convolution on a pixel grid and return a (C, H', W') image."""
    _, h, w = image.shape
    g = graph if graph is not None else build_grid(h, w)
    if fault == "mirror":
        kernel = _faulty(kernel)
    layer = transfer_conv(kernel, dilation, stride, padding)
    clusters = None
    oh, ow = h, w
    if stride > 1:
        cells = CellGrid.for_image(h, w).coarsen(stride)
        clusters = cluster_grid(g, cells.rows, cells.cols, cells.bounds)
        oh, ow = cells.rows, cells.cols
        if h % stride or w % stride:
            raise ValueError("strided graph convolution needs sizes divisible by the stride")
    out = forward_conv(layer, normalized_adjacency(g), image_to_nodes(image), clusters)
    return nodes_to_image(out, oh, ow)


def conv_suite(rng: np.random.Generator, trials: int, size=16, channels=3, out_channels=4,
               fault: str | None = None) -> dict[tuple, float]:
    """Max-abs deviation per (kernel size, padding, dilation, stride) configuration."""
    g = build_grid(size, size)
    adj = normalized_adjacency(g)
    x_shape = (channels, size, size)
    worst = {}
    for k, pad, d, s in itertools.product(KERNEL_SIZES, PADDINGS, DILATIONS, STRIDES):
        clusters = None
        if s > 1:
            cells = CellGrid.for_image(size, size).coarsen(s)
            clusters = cluster_grid(g, cells.rows, cells.cols, cells.bounds)
        dev = 0.0
        for _ in range(trials):
            kernel = random_kernel(rng, out_channels, channels, k)
            padding = padding_for(pad, rng, channels)
            img = rng.normal(size=x_shape).astype(np.float32)
            ref = conv2d_ref(img, kernel, s, d, padding)
            layer = transfer_conv(_faulty(kernel) if fault == "mirror" else kernel, d, s, padding)
            out = forward_conv(layer, adj, image_to_nodes(img), clusters)
            got = nodes_to_image(out, ref.shape[1], ref.shape[2])
            dev = max(dev, float(np.abs(got - ref).max()))
        worst[(k, pad, d, s)] = dev
    return worst


def compare_network(layers: list[Layer], images, graph: PositionalGraph | None = None,
                    graph_layers: list[Layer] | None = None) -> tuple[float, int]:
    """Return (max-abs output deviation, number of inputs with equal argmax).

    ``graph_layers`` replaces the layers on the graph side only.
    """
    _, h, w = images[0].shape
    g = graph if graph is not None else build_grid(h, w)
    net = GraphNetwork(graph_layers or layers, g, CellGrid.for_image(h, w))
    worst, agree = 0.0, 0
    for img in images:
        ref = np.asarray(run_ref(layers, img)).ravel()
        got = np.asarray(net.run(image_to_nodes(img))).ravel()
        worst = max(worst, float(np.abs(ref - got).max()))
        agree += int(np.argmax(ref) == np.argmax(got))
    return worst, agree


def jitter_disc(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    """Uniform displacements inside a disc of ``radius``."""
    r = radius * np.sqrt(rng.random(n))
    t = rng.random(n) * 2 * np.pi
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)


def jitter_box(rng: np.random.Generator, n: int, amount: float) -> np.ndarray:
    """Independent uniform displacements in [-amount, amount] per coordinate."""
    return rng.uniform(-amount, amount, size=(n, 2))


def jittered_grid(g: PositionalGraph, offsets: np.ndarray) -> tuple[PositionalGraph, int]:
    """Re-derive selections from moved positions; also return the number of changed selections."""
    moved = g.with_positions(g.positions + offsets, reselect=True)
    return moved, int(np.count_nonzero(moved.sel != g.sel))


def small_cnn(rng: np.random.Generator, channels=3, classes=10) -> list[Layer]:
    widths = (8, 16, 16, 16, 16, 16, 16, 16)
    return vgg11_layers(rng, channels, classes, widths)


def run_suite(seed: int = 0, trials: int = 5, fault: str | None = None, log=print) -> list[CheckResult]:
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}")
    rng = np.random.default_rng(seed)
    results = []

    t0 = time.perf_counter()
    worst = conv_suite(rng, trials, fault=fault)
    for (k, pad, d, s), dev in worst.items():
        results.append(CheckResult(f"conv k={k} pad={pad} dilation={d} stride={s}", dev, CONV_TOL,
                                   dev <= CONV_TOL))
    log(f"conv configurations: {len(worst)} in {time.perf_counter() - t0:.2f}s")

    layers = small_cnn(rng)
    if fault == "mirror":
        bad = [Conv(_faulty(l.kernel), l.stride, l.dilation, l.padding) if isinstance(l, Conv) else l
               for l in layers]
    else:
        bad = layers
    images = [rng.normal(size=(3, 32, 32)).astype(np.float32) for _ in range(max(trials, 1))]
    g = build_grid(32, 32)
    dev, agree = compare_network(layers, images, g, bad)
    ok = dev <= NET_TOL and agree == len(images)
    results.append(CheckResult("end-to-end cnn", dev, NET_TOL, ok, f"argmax agree {agree}/{len(images)}"))

    moved, flips = jittered_grid(g, jitter_disc(rng, g.num_nodes, SAFE_JITTER * 0.99))
    dev_j, agree_j = compare_network(layers, images, moved, bad)
    ok = flips == 0 and dev_j <= NET_TOL and agree_j == len(images)
    results.append(CheckResult(f"jittered cnn (r<{SAFE_JITTER:.3f}px)", dev_j, NET_TOL, ok,
                               f"selection changes {flips}, argmax agree {agree_j}/{len(images)}"))
    return results
