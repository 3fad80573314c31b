"""Raster graphs: plain grids, horizontally wrapping panoramas and masked images."""

from __future__ import annotations

import numpy as np

from ..graph import STEPS, PositionalGraph


def _pixel_positions(height: int, width: int) -> np.ndarray:
    rows, cols = np.divmod(np.arange(height * width), width)
    return np.stack([cols, rows], axis=1).astype(np.float64)


def _raster_edges(height: int, width: int, wrap: bool):
    """Directed 8-neighbour edges as (src, dst, selection) arrays."""
    rows, cols = np.divmod(np.arange(height * width), width)
    src, dst, sel = [], [], []
    for m in range(1, 9):
        dx, dy = STEPS[m]
        r2 = rows + dy
        c2 = cols + dx
        ok = (r2 >= 0) & (r2 < height)
        if wrap:
            c2 = c2 % width
        else:
            ok &= (c2 >= 0) & (c2 < width)
        src.append(np.flatnonzero(ok))
        dst.append(r2[ok] * width + c2[ok])
        sel.append(np.full(int(ok.sum()), m))
    return np.concatenate(src), np.concatenate(dst), np.concatenate(sel)


def build_grid(height: int, width: int) -> PositionalGraph:
    """Pixel grid: node ``r * width + c`` sits at (c, r) with 8-neighbour edges."""
    if height < 1 or width < 1:
        raise ValueError(f"grid dimensions must be positive, got {height}x{width}")
    src, dst, sel = _raster_edges(height, width, wrap=False)
    return PositionalGraph.from_edges(
        _pixel_positions(height, width), src, dst, sel, epsilon=1e-6, add_self=True
    )


def build_panorama(height: int, width: int) -> PositionalGraph:
    """Grid whose first and last columns are horizontal neighbours.

    Wrap edges take the selection of the step that produced them, not the
    geometric direction between the stored positions.
    """
    if height < 1:
        raise ValueError("panorama height must be positive")
    if width < 3:
        raise ValueError("panorama width must be at least 3 to wrap without duplicate edges")
    src, dst, sel = _raster_edges(height, width, wrap=True)
    return PositionalGraph.from_edges(
        _pixel_positions(height, width), src, dst, sel, epsilon=1e-6, add_self=True
    )


def build_masked_graph(mask) -> PositionalGraph:
    """Grid restricted to the true pixels of ``mask``; ids follow row-major order."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("mask must be 2-D")
    if not mask.any():
        raise ValueError("mask selects no pixels")
    return masked_grid_parts(mask)[0]


def masked_grid_parts(mask: np.ndarray, labels: np.ndarray | None = None):
    """Masked grid graph plus the (H, W) pixel -> node map (-1 off the mask).

    With ``labels``, edges are also dropped between pixels of different labels.
    """
    h, w = mask.shape
    flat = mask.ravel()
    node_of = np.full(h * w, -1, dtype=np.int64)
    node_of[flat] = np.arange(int(flat.sum()))
    src, dst, sel = _raster_edges(h, w, wrap=False)
    keep = flat[src] & flat[dst]
    if labels is not None:
        lab = np.asarray(labels).ravel()
        keep &= lab[src] == lab[dst]
    g = PositionalGraph.from_edges(
        _pixel_positions(h, w)[flat],
        node_of[src[keep]],
        node_of[dst[keep]],
        sel[keep],
        epsilon=1e-6,
        add_self=True,
    )
    return g, node_of.reshape(h, w)
