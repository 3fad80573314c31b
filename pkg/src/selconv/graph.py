"""Positional graphs and direction-partitioned adjacency.

Coordinates follow image convention: x grows to the right, y grows downward.
Selections label directed edges: 0 is the self edge, 1..8 are the compass
directions starting at "right" and turning counter-clockwise as displayed::

    4 3 2
    5 0 1
    6 7 8
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .numerics import SparseMatrix, sparse_compose

NUM_SELECTIONS = 9

RIGHT, UP_RIGHT, UP, UP_LEFT, LEFT, DOWN_LEFT, DOWN, DOWN_RIGHT = range(1, 9)

# unit grid step of each selection, (dx, dy)
STEPS = np.array(
    [(0, 0), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)],
    dtype=np.int64,
)

_H = math.sqrt(2.0) / 2.0
DIRECTIONS = np.array(
    [(0, 0), (1, 0), (_H, -_H), (0, -1), (-_H, -_H), (-1, 0), (-_H, _H), (0, 1), (_H, _H)],
    dtype=np.float64,
)

_STEP_TO_SELECTION = {(int(dx), int(dy)): m for m, (dx, dy) in enumerate(STEPS)}


class GraphError(ValueError):
    """Raised when a graph violates its structural invariants."""


def opposite(m: int) -> int:
    if m == 0:
        return 0
    return ((m + 3) % 8) + 1


def step_selection(dx: int, dy: int) -> int:
    """Selection of a unit king move; each component must be -1, 0 or 1."""
    return _STEP_TO_SELECTION[(int(dx), int(dy))]


def select(delta, epsilon: float = 1e-6) -> int:
    """Classify a displacement into one of the nine selections.

    Returns 0 when the displacement is shorter than ``epsilon``. Otherwise the
    direction with the largest dot product wins, ties going to the smaller index.
    """
    d = np.asarray(delta, dtype=np.float64)
    if d.shape != (2,) or not np.all(np.isfinite(d)):
        raise ValueError(f"select needs a finite 2-vector, got {delta!r}")
    if math.hypot(d[0], d[1]) < epsilon:
        return 0
    dots = DIRECTIONS[1:] @ d
    return int(np.argmax(dots)) + 1


def select_many(deltas, epsilon: float = 1e-6) -> np.ndarray:
    d = np.asarray(deltas, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(d)):
        raise ValueError("select_many needs finite displacements")
    out = np.argmax(d @ DIRECTIONS[1:].T, axis=1) + 1
    out[np.hypot(d[:, 0], d[:, 1]) < epsilon] = 0
    return out.astype(np.int64)


def offset_to_path(offset) -> tuple[int, ...]:
    """Decompose an integer offset into king moves, diagonal steps first."""
    dx, dy = (int(v) for v in offset)
    if dx == 0 and dy == 0:
        raise ValueError("zero offset has no hop path")
    path = []
    while dx or dy:
        sx, sy = int(np.sign(dx)), int(np.sign(dy))
        path.append(step_selection(sx, sy))
        dx -= sx
        dy -= sy
    return tuple(path)


def path_offset(path: Sequence[int]) -> tuple[int, int]:
    total = STEPS[list(path)].sum(axis=0) if len(path) else np.zeros(2, dtype=np.int64)
    return int(total[0]), int(total[1])


def default_epsilon(positions: np.ndarray, src: np.ndarray, dst: np.ndarray) -> float:
    nonself = src != dst
    if not np.any(nonself):
        return 1e-6
    lengths = np.linalg.norm(positions[dst[nonself]] - positions[src[nonself]], axis=1)
    med = float(np.median(lengths))
    return 1e-6 * med if med > 0 else 1e-6


@dataclass(frozen=True, eq=False)
class PositionalGraph:
    """Nodes with 2-D positions and directed, selection-labelled edges.

    Edges are kept sorted by (src, dst). Every node carries exactly one self
    edge with selection 0, and no (src, dst) pair appears twice.
    """

    positions: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    sel: np.ndarray
    epsilon: float = 1e-6

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64).reshape(-1, 2)
        src = np.asarray(self.src, dtype=np.int64).ravel()
        dst = np.asarray(self.dst, dtype=np.int64).ravel()
        sel = np.asarray(self.sel, dtype=np.int64).ravel()
        n = len(pos)
        if not (len(src) == len(dst) == len(sel)):
            raise GraphError("edge arrays have different lengths")
        if len(src) and (src.min() < 0 or dst.min() < 0 or src.max() >= n or dst.max() >= n):
            raise GraphError("edge endpoint out of range")
        if len(sel) and (sel.min() < 0 or sel.max() > 8):
            raise GraphError("selection outside 0..8")
        order = np.lexsort((dst, src))
        src, dst, sel = src[order], dst[order], sel[order]
        if len(src) > 1:
            dup = (src[1:] == src[:-1]) & (dst[1:] == dst[:-1])
            if np.any(dup):
                i = int(np.flatnonzero(dup)[0])
                raise GraphError(f"duplicate edge ({src[i]}, {dst[i]})")
        loops = src == dst
        if np.any(sel[loops] != 0):
            raise GraphError("self edge with nonzero selection")
        if not np.array_equal(np.sort(src[loops]), np.arange(n)):
            raise GraphError("every node needs exactly one self edge")
        for name, arr in (("positions", pos), ("src", src), ("dst", dst), ("sel", sel)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_edges(cls, positions, src, dst, sel, epsilon: float | None = None, add_self=False):
        pos = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        sel = np.asarray(sel, dtype=np.int64)
        if add_self:
            ids = np.arange(len(pos))
            src = np.concatenate([ids, src])
            dst = np.concatenate([ids, dst])
            sel = np.concatenate([np.zeros(len(pos), dtype=np.int64), sel])
        if epsilon is None:
            epsilon = default_epsilon(pos, src, dst)
        return cls(pos, src, dst, sel, float(epsilon))

    @classmethod
    def from_neighbors(cls, positions, src, dst, epsilon: float | None = None):
        """Build a graph whose non-self edges get selections from node positions."""
        pos = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if epsilon is None:
            epsilon = default_epsilon(pos, src, dst)
        sel = select_many(pos[dst] - pos[src], epsilon)
        return cls.from_edges(pos, src, dst, sel, epsilon, add_self=True)

    @property
    def num_nodes(self) -> int:
        return len(self.positions)

    @property
    def num_edges(self) -> int:
        return len(self.src)

    def edges(self) -> list[tuple[int, int, int]]:
        return list(zip(self.src.tolist(), self.dst.tolist(), self.sel.tolist()))

    def edge_dict(self) -> dict[tuple[int, int], int]:
        return {(s, d): m for s, d, m in self.edges()}

    def neighbor_counts(self) -> np.ndarray:
        """Number of non-self edges leaving each node."""
        nonself = self.src != self.dst
        return np.bincount(self.src[nonself], minlength=self.num_nodes)

    def selection_table(self) -> np.ndarray:
        """(N, 9) counts of outgoing edges per selection."""
        table = np.zeros((self.num_nodes, NUM_SELECTIONS), dtype=np.int64)
        np.add.at(table, (self.src, self.sel), 1)
        return table

    def with_positions(self, positions, reselect=False) -> "PositionalGraph":
        """Same edges at new positions, optionally re-deriving selections."""
        pos = np.asarray(positions, dtype=np.float64).reshape(self.positions.shape)
        sel = self.sel
        if reselect:
            sel = select_many(pos[self.dst] - pos[self.src], self.epsilon)
            sel[self.src == self.dst] = 0
        return PositionalGraph(pos, self.src, self.dst, sel, self.epsilon)

    def same_structure(self, other: "PositionalGraph") -> bool:
        return (
            self.num_nodes == other.num_nodes
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and np.array_equal(self.sel, other.sel)
        )


@dataclass(eq=False)
class SelectionAdjacency:
    """Nine sparse matrices, one per selection; ``mats[m][i, j]`` is set for edge (i, j, m)."""

    mats: tuple[SparseMatrix, ...]
    normalized: bool = False
    # per-instance memo for composed hop operators; never part of equality
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if len(self.mats) != NUM_SELECTIONS:
            raise ValueError("adjacency needs exactly nine matrices")

    @property
    def num_nodes(self) -> int:
        return self.mats[0].shape[0]

    def present(self) -> np.ndarray:
        """(N, 9) boolean table: node has at least one edge of that selection."""
        return np.stack([m.row_counts() > 0 for m in self.mats], axis=1)


def build_adjacency(g: PositionalGraph) -> SelectionAdjacency:
    n = g.num_nodes
    mats = []
    for m in range(NUM_SELECTIONS):
        mask = g.sel == m
        mats.append(SparseMatrix.from_coo(n, n, g.src[mask], g.dst[mask]))
    return SelectionAdjacency(tuple(mats), normalized=False)


def normalize(adj: SelectionAdjacency) -> SelectionAdjacency:
    """Scale each row of every selection matrix by 1 / (its entry count)."""
    if adj.normalized:
        raise ValueError("adjacency is already normalized")
    out = []
    for mat in adj.mats:
        csr = mat.csr.copy()
        counts = np.diff(csr.indptr)
        scale = np.repeat(1.0 / np.maximum(counts, 1), counts).astype(np.float32)
        csr.data = (np.ones_like(csr.data) * scale).astype(np.float32)
        out.append(SparseMatrix(csr))
    return SelectionAdjacency(tuple(out), normalized=True)


def normalized_adjacency(g: PositionalGraph) -> SelectionAdjacency:
    return normalize(build_adjacency(g))


def compose_hops(adj: SelectionAdjacency, path: Sequence[int]) -> SparseMatrix:
    if len(path) == 0:
        raise ValueError("hop path must be nonempty")
    if any(m < 1 or m > 8 for m in path):
        raise ValueError(f"hop steps must be selections 1..8, got {tuple(path)}")
    out = adj.mats[path[0]]
    for m in path[1:]:
        out = sparse_compose(out, adj.mats[m])
    return out


def permutation_matrix(perm: np.ndarray) -> SparseMatrix:
    """P with P[perm[i], i] = 1, so that (P A P^T)[perm[i], perm[j]] = A[i, j]."""
    n = len(perm)
    return SparseMatrix.from_coo(n, n, perm, np.arange(n))


def check_permutation(perm, n: int) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64).ravel()
    if len(perm) != n or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValueError("node permutation is not a bijection")
    return perm


def permute_nodes(g: PositionalGraph, perm) -> PositionalGraph:
    """Relabel node ``i`` as ``perm[i]``."""
    perm = check_permutation(perm, g.num_nodes)
    pos = np.empty_like(g.positions)
    pos[perm] = g.positions
    return PositionalGraph(pos, perm[g.src], perm[g.dst], g.sel, g.epsilon)


# -- text dump -----------------------------------------------------------------


def dump_graph(g: PositionalGraph) -> str:
    lines = [f"n {g.num_nodes}"]
    for i, (x, y) in enumerate(g.positions):
        lines.append(f"v {i} {float(x)!r} {float(y)!r}")
    for s, d, m in g.edges():
        lines.append(f"e {s} {d} {m}")
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> PositionalGraph:
    n = None
    pos: dict[int, tuple[float, float]] = {}
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts:
            continue
        try:
            if parts[0] == "n":
                n = int(parts[1])
            elif parts[0] == "v":
                pos[int(parts[1])] = (float(parts[2]), float(parts[3]))
            elif parts[0] == "e":
                edges.append((int(parts[1]), int(parts[2]), int(parts[3])))
            else:
                raise GraphError(f"line {lineno}: unknown record {parts[0]!r}")
        except (IndexError, ValueError) as exc:
            raise GraphError(f"line {lineno}: malformed record {raw!r}") from exc
    if n is None or sorted(pos) != list(range(n)):
        raise GraphError("graph dump has missing or inconsistent node records")
    positions = np.array([pos[i] for i in range(n)], dtype=np.float64).reshape(-1, 2)
    e = np.array(edges, dtype=np.int64).reshape(-1, 3)
    return PositionalGraph.from_edges(positions, e[:, 0], e[:, 1], e[:, 2])


def write_graph(g: PositionalGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_graph(g))


def read_graph(path) -> PositionalGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_graph(fh.read())


def check_graph(g: PositionalGraph) -> list[str]:
    """Re-verify invariants on an existing graph, returning problem descriptions."""
    problems = []
    loops = g.src == g.dst
    if np.bincount(g.src[loops], minlength=g.num_nodes).max(initial=1) != 1 or loops.sum() != g.num_nodes:
        problems.append("self edge count per node is not exactly one")
    pairs = set(zip(g.src.tolist(), g.dst.tolist()))
    if len(pairs) != g.num_edges:
        problems.append("duplicate edges")
    if np.any(g.sel[loops] != 0):
        problems.append("self edge with nonzero selection")
    return problems


def iter_edges_of(g: PositionalGraph, node: int) -> Iterable[tuple[int, int]]:
    lo, hi = np.searchsorted(g.src, [node, node + 1])
    return zip(g.dst[lo:hi].tolist(), g.sel[lo:hi].tolist())
