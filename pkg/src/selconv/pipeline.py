"""Running a whole layer list on a positional graph.

Pooling, strides and flattening need a notion of image cells. The runner
tracks a square cell grid laid over the original image extent: it starts at
one pixel per cell and each pool or stride multiplies the cell size. Nodes in
trailing rows or columns that do not fill a whole cell are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .graph import PositionalGraph, SelectionAdjacency, normalized_adjacency
from .layers import (
    ClusterMap,
    affine_norm,
    cluster_grid,
    forward_conv,
    linear,
    pool_features,
    pool_graph,
    relu,
    transfer_conv,
    unpool,
)
from .nets import AffineNorm, AvgPool, Conv, Flatten, Layer, Linear, MaxPool, ReLU, Upsample
from .numerics import DTYPE, as_tensor


@dataclass(frozen=True)
class CellGrid:
    """``rows`` x ``cols`` cells of ``cell`` pixels, top-left corner at (x0, y0)."""

    rows: int
    cols: int
    cell: float = 1.0
    x0: float = -0.5
    y0: float = -0.5

    @classmethod
    def for_image(cls, height: int, width: int) -> "CellGrid":
        return cls(height, width)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x0 + self.cols * self.cell, self.y0 + self.rows * self.cell)

    def coarsen(self, factor: int) -> "CellGrid":
        return replace(self, rows=self.rows // factor, cols=self.cols // factor, cell=self.cell * factor)


@dataclass
class _Stage:
    graph: PositionalGraph
    grid: CellGrid
    adjacency: SelectionAdjacency | None = None

    def adj(self) -> SelectionAdjacency:
        if self.adjacency is None:
            self.adjacency = normalized_adjacency(self.graph)
        return self.adjacency


class GraphNetwork:
    """Transferred network bound to one input graph.

    The graph structure after each pooling step is derived once and reused
    for every call to :meth:`run`.
    """

    def __init__(self, layers: list[Layer], graph: PositionalGraph, grid: CellGrid):
        self.layers = list(layers)
        self.graph = graph
        self.grid = grid
        self._convs = {
            id(layer): transfer_conv(layer.kernel, layer.dilation, layer.stride, layer.padding)
            for layer in self.layers
            if isinstance(layer, Conv)
        }
        self._plan = None

    def _build_plan(self):
        plan = []
        stage = _Stage(self.graph, self.grid)
        saved: list[tuple[_Stage, ClusterMap]] = []
        flat = False
        for layer in self.layers:
            step: dict = {"layer": layer, "stage": stage}
            if flat:
                if not isinstance(layer, (ReLU, Linear, AffineNorm)):
                    raise ValueError(f"{type(layer).__name__} cannot follow Flatten")
            elif isinstance(layer, (MaxPool, AvgPool)) or (isinstance(layer, Conv) and layer.stride > 1):
                factor = layer.size if not isinstance(layer, Conv) else layer.stride
                grid = stage.grid.coarsen(factor)
                if grid.rows < 1 or grid.cols < 1:
                    raise ValueError("pooling past a single cell")
                clusters = cluster_grid(stage.graph, grid.rows, grid.cols, grid.bounds)
                step["clusters"] = clusters
                saved.append((stage, clusters))
                stage = _Stage(pool_graph(clusters), grid)
            elif isinstance(layer, Upsample):
                if not saved:
                    raise ValueError("upsampling without a previous pooling step")
                fine, clusters = saved.pop()
                step["clusters"] = clusters
                stage = fine
            elif isinstance(layer, Flatten):
                step["cells"] = cluster_grid(stage.graph, stage.grid.rows, stage.grid.cols, stage.grid.bounds)
                flat = True
            step["out_stage"] = stage
            plan.append(step)
        self._plan = plan
        return plan

    @property
    def output_graph(self) -> PositionalGraph:
        plan = self._plan or self._build_plan()
        return plan[-1]["out_stage"].graph if plan else self.graph

    @property
    def output_grid(self) -> CellGrid:
        plan = self._plan or self._build_plan()
        return plan[-1]["out_stage"].grid if plan else self.grid

    @property
    def flattens(self) -> bool:
        return any(isinstance(layer, Flatten) for layer in self.layers)

    def run(self, x) -> np.ndarray:
        plan = self._plan or self._build_plan()
        x = as_tensor(x)
        if x.shape[0] != self.graph.num_nodes:
            raise ValueError(f"{x.shape[0]} feature rows for {self.graph.num_nodes} nodes")
        for step in plan:
            layer = step["layer"]
            stage = step["stage"]
            if isinstance(layer, Conv):
                x = forward_conv(self._convs[id(layer)], stage.adj(), x, step.get("clusters"))
            elif isinstance(layer, ReLU):
                x = relu(x)
            elif isinstance(layer, AffineNorm):
                x = affine_norm(x, layer.scale, layer.shift)
            elif isinstance(layer, MaxPool):
                x = pool_features(x, step["clusters"], "max")
            elif isinstance(layer, AvgPool):
                x = pool_features(x, step["clusters"], "mean")
            elif isinstance(layer, Upsample):
                x = unpool(step["clusters"], x, layer.mode)
            elif isinstance(layer, Flatten):
                x = flatten_cells(x, step["cells"])
            elif isinstance(layer, Linear):
                x = linear(layer.weight, layer.bias, x)
            else:
                raise TypeError(f"unsupported layer {type(layer).__name__}")
        return x


def flatten_cells(x: np.ndarray, cells: ClusterMap) -> np.ndarray:
    """Channel-major flatten over the cell grid; empty cells contribute zeros."""
    rows, cols = cells.grid_shape
    per_cell = pool_features(x, cells, "mean")
    grid = np.zeros((rows * cols, x.shape[1]), dtype=DTYPE)
    grid[cells.cells[:, 0] * cols + cells.cells[:, 1]] = per_cell
    return np.ascontiguousarray(grid.T.reshape(-1))


def image_to_nodes(image) -> np.ndarray:
    """(C, H, W) -> (H * W, C) in row-major node order."""
    img = as_tensor(image)
    return np.ascontiguousarray(img.reshape(img.shape[0], -1).T)


def nodes_to_image(x, height: int, width: int) -> np.ndarray:
    return np.ascontiguousarray(as_tensor(x).T.reshape(-1, height, width))


def paint_cells(x, graph: PositionalGraph, grid: CellGrid) -> np.ndarray:
    """Scatter per-node values into a (rows, cols, C) image by node position.

    Cells without a node stay zero.
    """
    x = as_tensor(x)
    col = np.floor((graph.positions[:, 0] - grid.x0) / grid.cell).astype(np.int64)
    row = np.floor((graph.positions[:, 1] - grid.y0) / grid.cell).astype(np.int64)
    ok = (row >= 0) & (row < grid.rows) & (col >= 0) & (col < grid.cols)
    out = np.zeros((grid.rows, grid.cols, x.shape[1]), dtype=DTYPE)
    out[row[ok], col[ok]] = x[ok]
    return out
