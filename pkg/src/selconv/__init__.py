"""Selection-based graph convolution: run ordinary 2D CNN weights on positional graphs."""

from .graph import PositionalGraph, SelectionAdjacency, build_adjacency, normalized_adjacency, select
from .layers import forward_conv, pool, reconstruct_kernel, transfer_conv, unpool
from .nets import Kernel2D, PaddingMode
from .pipeline import CellGrid, GraphNetwork

__all__ = [
    "CellGrid",
    "GraphNetwork",
    "Kernel2D",
    "PaddingMode",
    "PositionalGraph",
    "SelectionAdjacency",
    "build_adjacency",
    "forward_conv",
    "normalized_adjacency",
    "pool",
    "reconstruct_kernel",
    "select",
    "transfer_conv",
    "unpool",
]
