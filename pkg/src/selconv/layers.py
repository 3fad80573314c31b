"""Network layers that run on selection graphs.

A transferred convolution keeps one (in x out) weight matrix per kernel tap.
The tap at offset (dx, dy), scaled by the dilation, is reached by walking the
king-move hop path of that offset through the per-selection adjacency.

Missing selections are handled by the padding mode while walking:

* zero: the walk dies and contributes nothing.
* constant: the walk dies and contributes the constant vector.
* replicate: the blocked axes of the step are dropped; if nothing remains the
  walk stays put.
* reflect: the blocked axes are mirrored and stay mirrored for the rest of the
  path; if the mirrored step is missing too, the replicate rule applies.

An axis of a diagonal step is blocked when the node lacks the straight step
along that axis; if both straight steps exist but the diagonal does not, both
axes count as blocked. On a pixel grid this reproduces zero, constant, edge
and mirror padding exactly, for any kernel size and dilation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graph import (
    STEPS,
    PositionalGraph,
    SelectionAdjacency,
    offset_to_path,
    path_offset,
    select,
    step_selection,
)
from .nets import Kernel2D, PaddingMode
from .numerics import DTYPE, SparseMatrix, as_tensor

CENTER: tuple[int, ...] = ()


@dataclass(eq=False)
class SelectionConvLayer:
    """Per-tap weight table produced by :func:`transfer_conv`.

    ``weights`` maps a hop path (``()`` for the centre tap) to an (in, out)
    matrix. ``offsets`` records the kernel (row, col) of each path.
    """

    weights: dict[tuple[int, ...], np.ndarray]
    offsets: dict[tuple[int, ...], tuple[int, int]]
    kernel_size: tuple[int, int]
    bias: np.ndarray | None = None
    dilation: int = 1
    stride: int = 1
    padding: PaddingMode = field(default_factory=PaddingMode)

    @property
    def keys(self) -> tuple[tuple[int, ...], ...]:
        return tuple(self.weights)

    @property
    def in_channels(self) -> int:
        return next(iter(self.weights.values())).shape[0]

    @property
    def out_channels(self) -> int:
        return next(iter(self.weights.values())).shape[1]

    def stacked_weights(self) -> np.ndarray:
        """(K * in, out) matrix in key order."""
        return np.concatenate([self.weights[k] for k in self.keys], axis=0)


def transfer_conv(kernel: Kernel2D, dilation: int = 1, stride: int = 1,
                  padding: PaddingMode | None = None) -> SelectionConvLayer:
    if dilation < 1 or stride < 1:
        raise ValueError("dilation and stride must be at least 1")
    kh, kw = kernel.size
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("only odd kernel sizes can be transferred")
    weights, offsets = {}, {}
    for r in range(kh):
        for c in range(kw):
            dx, dy = (c - kw // 2) * dilation, (r - kh // 2) * dilation
            key = CENTER if dx == 0 and dy == 0 else offset_to_path((dx, dy))
            weights[key] = np.ascontiguousarray(kernel.weights[:, :, r, c].T)
            offsets[key] = (r, c)
    bias = None if kernel.bias is None else kernel.bias.copy()
    return SelectionConvLayer(weights, offsets, (kh, kw), bias, dilation, stride, padding or PaddingMode())


def reconstruct_kernel(layer: SelectionConvLayer) -> Kernel2D:
    kh, kw = layer.kernel_size
    w = np.zeros((layer.out_channels, layer.in_channels, kh, kw), dtype=DTYPE)
    for key, mat in layer.weights.items():
        if key == CENTER:
            r, c = kh // 2, kw // 2
        else:
            dx, dy = path_offset(key)
            r, c = dy // layer.dilation + kh // 2, dx // layer.dilation + kw // 2
        w[:, :, r, c] = mat.T
    return Kernel2D(w, layer.bias)


# -- padded hop walks ----------------------------------------------------------


# selection of the king move (dx, dy), indexed [dx + 1, dy + 1]
_SEL_OF = np.zeros((3, 3), dtype=np.int64)
for _m, (_dx, _dy) in enumerate(STEPS):
    _SEL_OF[_dx + 1, _dy + 1] = _m


def _axis_parts(m: int):
    dx, dy = (int(v) for v in STEPS[m])
    return dx, dy


def _fallback_tables(present: np.ndarray, m: int):
    """For nodes lacking selection ``m``: replicate target and reflect target.

    Returns (rep_sel, ref_sel, ref_flip) arrays over nodes; selection 0 means
    "stay", -1 means "not applicable". ``ref_flip`` holds (flip_x, flip_y).
    """
    n = len(present)
    dx, dy = _axis_parts(m)
    has_x = present[:, step_selection(dx, 0)] if dx else np.zeros(n, bool)
    has_y = present[:, step_selection(0, dy)] if dy else np.zeros(n, bool)
    block_x = np.zeros(n, bool) if not dx else ~has_x
    block_y = np.zeros(n, bool) if not dy else ~has_y
    if dx and dy:
        neither = ~block_x & ~block_y
        block_x = block_x | neither
        block_y = block_y | neither

    rows = np.arange(n)
    rep = _SEL_OF[np.where(block_x, 0, dx) + 1, np.where(block_y, 0, dy) + 1]
    rep = np.where(present[rows, rep] & (rep > 0), rep, 0)
    ref = _SEL_OF[np.where(block_x, -dx, dx) + 1, np.where(block_y, -dy, dy) + 1]
    ref = np.where(present[rows, ref], ref, -1)
    return rep, ref, np.stack([block_x, block_y], axis=1)


def _row_select(mask: np.ndarray) -> sp.csr_matrix:
    return sp.diags(mask.astype(DTYPE), format="csr")


def _step_transitions(adj: SelectionAdjacency, kind: str, m: int):
    """Split one hop of selection ``m`` into (flip_x, flip_y, matrix) parts.

    The matrix rows are current nodes and columns are next nodes.
    """
    key = ("step", kind, m)
    if key in adj.cache:
        return adj.cache[key]
    present = adj.present()
    mat = adj.mats[m].csr
    parts = [(False, False, mat)]
    if kind in ("replicate", "reflect"):
        missing = ~present[:, m]
        if np.any(missing):
            rep, ref, flips = _fallback_tables(present, m)
            if kind == "reflect":
                use_ref = missing & (ref > 0)
                for fx in (False, True):
                    for fy in (False, True):
                        for s in range(1, 9):
                            rows = use_ref & (ref == s) & (flips[:, 0] == fx) & (flips[:, 1] == fy)
                            if rows.any():
                                parts.append((fx, fy, _row_select(rows) @ adj.mats[s].csr))
                missing = missing & ~use_ref
            stay = missing & (rep == 0)
            if stay.any():
                parts.append((False, False, _row_select(stay)))
            for s in range(1, 9):
                rows = missing & (rep == s)
                if rows.any():
                    parts.append((False, False, _row_select(rows) @ adj.mats[s].csr))
    adj.cache[key] = parts
    return parts


def _flip_step(m: int, fx: bool, fy: bool) -> int:
    dx, dy = _axis_parts(m)
    return step_selection(-dx if fx else dx, -dy if fy else dy)


def _walk(adj: SelectionAdjacency, kind: str, path: tuple[int, ...]):
    """Distribution over (mirror state, node) after walking ``path`` from every node."""
    key = ("walk", kind, path)
    if key in adj.cache:
        return adj.cache[key]
    if not path:
        n = adj.num_nodes
        states = {(False, False): sp.identity(n, dtype=DTYPE, format="csr")}
    else:
        prev = _walk(adj, kind, path[:-1])
        acc: dict[tuple[bool, bool], sp.csr_matrix] = {}
        for (fx, fy), mat in prev.items():
            m = _flip_step(path[-1], fx, fy)
            for tx, ty, trans in _step_transitions(adj, kind, m):
                state = (fx ^ tx, fy ^ ty)
                term = mat @ trans
                acc[state] = term if state not in acc else acc[state] + term
        states = {s: sp.csr_matrix(v) for s, v in acc.items()}
    adj.cache[key] = states
    return states


def tap_operator(adj: SelectionAdjacency, path: tuple[int, ...], padding_kind: str = "zero") -> SparseMatrix:
    """Sparse (N, N) operator gathering the features one kernel tap sees."""
    if path == CENTER:
        return adj.mats[0]
    walk_kind = "zero" if padding_kind == "constant" else padding_kind
    total = None
    for mat in _walk(adj, walk_kind, tuple(path)).values():
        total = mat if total is None else total + mat
    return SparseMatrix(total)


def _stacked_operator(adj: SelectionAdjacency, keys, padding_kind: str):
    cache_key = ("stack", padding_kind, keys)
    if cache_key not in adj.cache:
        ops = [tap_operator(adj, k, padding_kind).csr for k in keys]
        stacked = sp.vstack(ops, format="csr").astype(DTYPE)
        stacked.sort_indices()
        lost = None
        if padding_kind == "constant":
            lost = np.stack([1.0 - np.asarray(op.sum(axis=1)).ravel() for op in ops], axis=1).astype(DTYPE)
            lost[np.abs(lost) < 1e-6] = 0.0
        adj.cache[cache_key] = (stacked, lost)
    return adj.cache[cache_key]


def forward_conv(layer: SelectionConvLayer, adj: SelectionAdjacency, x, clusters=None) -> np.ndarray:
    """Selection convolution: sum over taps of (tap operator @ x) @ W_tap, plus bias."""
    if not adj.normalized:
        raise ValueError("forward_conv needs a normalized adjacency")
    x = as_tensor(x)
    n = adj.num_nodes
    if x.ndim != 2 or x.shape[0] != n:
        raise ValueError(f"features of shape {x.shape} do not match {n} nodes")
    if x.shape[1] != layer.in_channels:
        raise ValueError(f"layer expects {layer.in_channels} channels, got {x.shape[1]}")
    keys = layer.keys
    stacked, lost = _stacked_operator(adj, keys, layer.padding.kind)
    gathered = np.asarray(stacked @ x, dtype=DTYPE).reshape(len(keys), n, x.shape[1])
    cols = gathered.transpose(1, 0, 2).reshape(n, -1)
    out = cols @ layer.stacked_weights()
    if lost is not None:
        c = layer.padding.constant_for(layer.in_channels)
        per_tap = np.stack([c @ layer.weights[k] for k in keys], axis=0)
        out += lost @ per_tap
    if layer.bias is not None:
        out += layer.bias
    if layer.stride > 1:
        if clusters is None:
            raise ValueError("strided convolution needs a cluster map")
        out = out[clusters.central]
    return np.ascontiguousarray(out, dtype=DTYPE)


# -- pooling -------------------------------------------------------------------


@dataclass(eq=False)
class ClusterMap:
    """Node-to-cluster assignment; -1 marks nodes dropped by floor semantics."""

    assignment: np.ndarray
    positions: np.ndarray
    central: np.ndarray
    saved_graph: PositionalGraph
    cells: np.ndarray | None = None  # (K, 2) grid (row, col) per cluster
    grid_shape: tuple[int, int] | None = None

    @property
    def num_clusters(self) -> int:
        return len(self.positions)


def cluster_from_assignment(g: PositionalGraph, assignment, cells=None, grid_shape=None) -> ClusterMap:
    a = np.asarray(assignment, dtype=np.int64).ravel()
    if len(a) != g.num_nodes:
        raise ValueError("assignment length differs from node count")
    valid = a >= 0
    k = int(a.max()) + 1 if valid.any() else 0
    counts = np.bincount(a[valid], minlength=k)
    if np.any(counts == 0):
        raise ValueError("empty cluster in assignment")
    pos = np.stack(
        [np.bincount(a[valid], weights=g.positions[valid, i], minlength=k) / counts for i in range(2)], axis=1
    )
    ids = np.flatnonzero(valid)
    rounded = np.round(g.positions[ids])
    order = np.lexsort((ids, rounded[:, 0], rounded[:, 1], a[ids]))
    first = np.ones(len(order), bool)
    first[1:] = a[ids][order][1:] != a[ids][order][:-1]
    central = ids[order][first]
    return ClusterMap(a, pos, central, g, cells, grid_shape)


def cluster_grid(g: PositionalGraph, out_rows: int, out_cols: int, bounds) -> ClusterMap:
    """Assign nodes to cells of an ``out_rows`` x ``out_cols`` grid over ``bounds``.

    ``bounds`` is (x0, y0, x1, y1). Nodes outside are dropped. Empty cells make
    no cluster; clusters are numbered in row-major cell order.
    """
    x0, y0, x1, y1 = (float(b) for b in bounds)
    cw = (x1 - x0) / out_cols
    ch = (y1 - y0) / out_rows
    col = np.floor((g.positions[:, 0] - x0) / cw).astype(np.int64)
    row = np.floor((g.positions[:, 1] - y0) / ch).astype(np.int64)
    inside = (col >= 0) & (col < out_cols) & (row >= 0) & (row < out_rows)
    cell = np.where(inside, row * out_cols + col, -1)
    used = np.unique(cell[inside])
    lookup = np.full(out_rows * out_cols, -1, dtype=np.int64)
    lookup[used] = np.arange(len(used))
    assignment = np.where(inside, lookup[np.where(inside, cell, 0)], -1)
    cells = np.stack(np.divmod(used, out_cols), axis=1)
    return cluster_from_assignment(g, assignment, cells, (out_rows, out_cols))


def circular_mean_selection(selections, fallback_delta=None, epsilon=1e-6) -> int:
    """Average compass selections on the circle; exact half-way cases take the lower index."""
    s = np.asarray(selections, dtype=np.int64)
    ang = (s - 1) * (np.pi / 4)
    vx, vy = float(np.cos(ang).sum()), float(np.sin(ang).sum())
    return _angle_to_selection(vx, vy, fallback_delta, epsilon)


def _angle_to_selection(vx: float, vy: float, fallback_delta, epsilon) -> int:
    if np.hypot(vx, vy) < 1e-9:
        if fallback_delta is None:
            raise ValueError("selections cancel out and no fallback direction was given")
        m = select(fallback_delta, epsilon)
        return m if m else 1
    a = (np.arctan2(vy, vx) / (np.pi / 4)) % 8.0
    lo = int(np.floor(a))
    frac = a - lo
    s_lo, s_hi = lo % 8 + 1, (lo + 1) % 8 + 1
    if abs(frac - 0.5) < 1e-9:
        return min(s_lo, s_hi)
    return s_lo if frac < 0.5 else s_hi


def pool_graph(clusters: ClusterMap) -> PositionalGraph:
    g = clusters.saved_graph
    a = clusters.assignment
    ca, cb = a[g.src], a[g.dst]
    keep = (ca >= 0) & (cb >= 0) & (ca != cb)
    ca, cb, sel = ca[keep], cb[keep], g.sel[keep]
    k = clusters.num_clusters
    pos = clusters.positions
    src, dst, new_sel = [], [], []
    if len(ca):
        pair = ca * k + cb
        uniq, inv = np.unique(pair, return_inverse=True)
        ang = (sel - 1) * (np.pi / 4)
        # selection 0 edges between clusters carry no direction
        w = (sel > 0).astype(np.float64)
        vx = np.bincount(inv, weights=np.cos(ang) * w, minlength=len(uniq))
        vy = np.bincount(inv, weights=np.sin(ang) * w, minlength=len(uniq))
        for u, x, y in zip(uniq, vx, vy):
            i, j = divmod(int(u), k)
            src.append(i)
            dst.append(j)
            new_sel.append(_angle_to_selection(x, y, pos[j] - pos[i], g.epsilon))
    return PositionalGraph.from_edges(pos, src, dst, new_sel, epsilon=g.epsilon, add_self=True)


def pool(g: PositionalGraph, x, clusters: ClusterMap, mode: str = "max"):
    """Merge each cluster into one node; returns (pooled graph, pooled features)."""
    if clusters.saved_graph.num_nodes != g.num_nodes:
        raise ValueError("cluster map was built for a different graph")
    return pool_graph(clusters), pool_features(as_tensor(x), clusters, mode)


def pool_features(x: np.ndarray, clusters: ClusterMap, mode: str = "max") -> np.ndarray:
    a = clusters.assignment
    valid = np.flatnonzero(a >= 0)
    order = valid[np.argsort(a[valid], kind="stable")]
    starts = np.flatnonzero(np.r_[True, np.diff(a[order]) != 0])
    xs = x[order]
    if mode == "max":
        out = np.maximum.reduceat(xs, starts, axis=0)
    elif mode == "mean":
        sums = np.add.reduceat(xs.astype(np.float64), starts, axis=0)
        counts = np.diff(np.r_[starts, len(order)])
        out = sums / counts[:, None]
    else:
        raise ValueError(f"unknown pooling mode {mode!r}")
    return np.ascontiguousarray(out, dtype=DTYPE)


def unpool(clusters: ClusterMap, x_coarse, mode: str = "copy") -> np.ndarray:
    """Copy each cluster's value back to its members on the saved graph."""
    x = as_tensor(x_coarse)
    if x.shape[0] != clusters.num_clusters:
        raise ValueError(f"{x.shape[0]} coarse rows for {clusters.num_clusters} clusters")
    a = clusters.assignment
    fine = np.zeros((len(a), x.shape[1]), dtype=DTYPE)
    fine[a >= 0] = x[a[a >= 0]]
    if mode == "copy":
        return fine
    if mode != "average":
        raise ValueError(f"unknown unpooling mode {mode!r}")
    g = clusters.saved_graph
    ring = sp.csr_matrix(
        (np.ones(g.num_edges, dtype=np.float64), (g.src, g.dst)), shape=(g.num_nodes, g.num_nodes)
    )
    deg = np.asarray(ring.sum(axis=1)).ravel()
    return np.asarray((ring @ fine.astype(np.float64)) / deg[:, None], dtype=DTYPE)


# -- elementwise and dense layers ---------------------------------------------


def relu(x) -> np.ndarray:
    return np.maximum(as_tensor(x), DTYPE(0))


def affine_norm(x, scale, shift) -> np.ndarray:
    x = as_tensor(x)
    scale = as_tensor(scale).ravel()
    shift = as_tensor(shift).ravel()
    if x.shape[-1] != len(scale) or len(scale) != len(shift):
        raise ValueError("affine normalisation needs one scale and shift per channel")
    return x * scale + shift


def linear(weights, bias, x_flat) -> np.ndarray:
    w = as_tensor(weights)
    x = as_tensor(x_flat).ravel()
    if w.ndim != 2 or w.shape[1] != len(x):
        raise ValueError(f"linear weights {w.shape} do not match input of length {len(x)}")
    out = w @ x
    if bias is not None:
        b = as_tensor(bias).ravel()
        if len(b) != w.shape[0]:
            raise ValueError("linear bias length differs from output size")
        out = out + b
    return out

