"""Texture-atlas graphs from UV-mapped meshes.

Charts of the atlas are bounded by UV edges that only one face references.
Those edges are chained into closed loops, rasterised into a pixel mask, and
each seam edge is paired with its twin on another chart (same 3D edge,
different UV indices) so pixels on both sides of a seam become neighbours.

Pixel (row, col) of a ``tex`` x ``tex`` texture has its centre at
``u = (col + 0.5) / tex``, ``v = 1 - (row + 0.5) / tex``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ..graph import PositionalGraph, select
from .grid import masked_grid_parts


class ObjParseError(ValueError):
    pass


class BoundaryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class UvMesh:
    vertices3d: np.ndarray  # (V, 3)
    uvs: np.ndarray  # (T, 2)
    faces: np.ndarray  # (F, 3, 2): (vertex index, uv index) per corner

    def __post_init__(self):
        v = np.asarray(self.vertices3d, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.uvs, dtype=np.float64).reshape(-1, 2)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3, 2)
        if len(f) and (
            f[..., 0].min() < 0 or f[..., 0].max() >= len(v) or f[..., 1].min() < 0 or f[..., 1].max() >= len(t)
        ):
            raise ObjParseError("face index out of range")
        for tri in f:
            a, b, c = t[tri[:, 1]]
            if abs(_cross(b - a, c - a)) < 1e-15:
                raise ObjParseError(f"triangle {tri.tolist()} is degenerate in UV space")
        object.__setattr__(self, "vertices3d", v)
        object.__setattr__(self, "uvs", t)
        object.__setattr__(self, "faces", f)


def _cross(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _resolve(idx: str, count: int, lineno: int) -> int:
    i = int(idx)
    if i > 0:
        return i - 1
    if i < 0:
        return count + i
    raise ObjParseError(f"line {lineno}: OBJ indices are 1-based, got 0")


def parse_obj(text: str) -> UvMesh:
    """Read ``v``, ``vt`` and ``f`` records; polygons are fan-triangulated."""
    verts, uvs, faces = [], [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        tag = parts[0]
        try:
            if tag == "v":
                verts.append([float(p) for p in parts[1:4]])
            elif tag == "vt":
                uvs.append([float(p) for p in parts[1:3]])
            elif tag == "f":
                corners = []
                for tok in parts[1:]:
                    fields = tok.split("/")
                    if len(fields) < 2 or not fields[1]:
                        raise ObjParseError(f"line {lineno}: face corner {tok!r} has no texture index")
                    corners.append(
                        (_resolve(fields[0], len(verts), lineno), _resolve(fields[1], len(uvs), lineno))
                    )
                if len(corners) < 3:
                    raise ObjParseError(f"line {lineno}: face needs at least 3 corners")
                for i in range(1, len(corners) - 1):
                    faces.append([corners[0], corners[i], corners[i + 1]])
        except (ValueError, IndexError) as exc:
            if isinstance(exc, ObjParseError):
                raise
            raise ObjParseError(f"line {lineno}: malformed record {raw.strip()!r}") from exc
    if any(len(v) != 3 for v in verts) or any(len(t) != 2 for t in uvs):
        raise ObjParseError("vertex or texture record with missing coordinates")
    return UvMesh(np.array(verts).reshape(-1, 3), np.array(uvs).reshape(-1, 2), np.array(faces).reshape(-1, 3, 2))


def read_obj(path) -> UvMesh:
    with open(path, encoding="utf-8") as fh:
        return parse_obj(fh.read())


@dataclass(eq=False)
class BoundaryLoop:
    """Closed UV polygon; edge ``i`` runs from point ``i`` to point ``i + 1`` (cyclic).

    ``twins[i]`` is ``(loop index, edge index)`` of the matching seam edge or
    None on an open surface boundary. ``inward[i]`` is the UV-space unit
    normal of edge ``i`` pointing into its chart.
    """

    points: np.ndarray
    uv_indices: list[int]
    vertex_indices: list[int]
    inward: np.ndarray
    twins: list = field(default_factory=list)

    def __len__(self):
        return len(self.uv_indices)

    def edge_uv(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.points[i], self.points[(i + 1) % len(self)]

    def edge_vertices(self, i: int) -> tuple[int, int]:
        return self.vertex_indices[i], self.vertex_indices[(i + 1) % len(self)]


def uv_boundary_loops(mesh: UvMesh) -> list[BoundaryLoop]:
    uv_count: dict[tuple[int, int], int] = defaultdict(int)
    half = []  # (t_a, t_b, v_a, v_b, face)
    for fi, tri in enumerate(mesh.faces):
        for k in range(3):
            (va, ta), (vb, tb) = tri[k], tri[(k + 1) % 3]
            half.append((int(ta), int(tb), int(va), int(vb), fi))
            uv_count[(min(ta, tb), max(ta, tb))] += 1
    bad = [e for e, c in uv_count.items() if c > 2]
    if bad:
        raise BoundaryError(f"UV edge {bad[0]} is referenced by more than two faces")
    boundary = [h for h in half if uv_count[(min(h[0], h[1]), max(h[0], h[1]))] == 1]

    outgoing: dict[int, list[int]] = defaultdict(list)
    for idx, h in enumerate(boundary):
        outgoing[h[0]].append(idx)
    used = [False] * len(boundary)
    loops: list[BoundaryLoop] = []
    edge_home: dict[int, tuple[int, int]] = {}
    for start in range(len(boundary)):
        if used[start]:
            continue
        chain = [start]
        used[start] = True
        while True:
            tail = boundary[chain[-1]][1]
            if tail == boundary[start][0]:
                break
            nxt = [i for i in outgoing[tail] if not used[i]]
            if not nxt:
                ta, tb = boundary[chain[-1]][:2]
                raise BoundaryError(f"boundary chain does not close at UV edge ({ta}, {tb})")
            chain.append(nxt[0])
            used[nxt[0]] = True
        pts, uvi, vxi, inward = [], [], [], []
        for j, idx in enumerate(chain):
            ta, tb, va, vb, fi = boundary[idx]
            uvi.append(ta)
            vxi.append(va)
            pts.append(mesh.uvs[ta])
            a, b = mesh.uvs[ta], mesh.uvs[tb]
            centroid = mesh.uvs[mesh.faces[fi][:, 1]].mean(axis=0)
            d = b - a
            nrm = np.array([-d[1], d[0]]) / np.hypot(*d)
            if np.dot(centroid - a, nrm) < 0:
                nrm = -nrm
            inward.append(nrm)
            edge_home[idx] = (len(loops), j)
        loops.append(BoundaryLoop(np.array(pts), uvi, vxi, np.array(inward), [None] * len(chain)))

    by_3d: dict[tuple[int, int], list[int]] = defaultdict(list)
    for idx, (ta, tb, va, vb, _) in enumerate(boundary):
        by_3d[(min(va, vb), max(va, vb))].append(idx)
    for key, members in by_3d.items():
        if len(members) > 2:
            raise BoundaryError(f"mesh edge {key} has more than two seam sides")
        if len(members) == 2:
            a, b = members
            la, ea = edge_home[a]
            lb, eb = edge_home[b]
            loops[la].twins[ea] = (lb, eb)
            loops[lb].twins[eb] = (la, ea)
    return loops


def pixel_centers_uv(tex_size: int) -> np.ndarray:
    """(tex, tex, 2) UV coordinates of every pixel centre."""
    rows, cols = np.mgrid[0:tex_size, 0:tex_size]
    return np.stack([(cols + 0.5) / tex_size, 1.0 - (rows + 0.5) / tex_size], axis=-1)


def points_in_polygon(points: np.ndarray, polygon: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Even-odd containment; points on an edge count as inside."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    poly = np.asarray(polygon, dtype=np.float64).reshape(-1, 2)
    if len(poly) < 3:
        raise BoundaryError("a loop needs at least three points")
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    on_edge = np.zeros(len(pts), dtype=bool)
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        d = b - a
        rel_x, rel_y = x - a[0], y - a[1]
        cross = d[0] * rel_y - d[1] * rel_x
        dot = rel_x * d[0] + rel_y * d[1]
        seg2 = d[0] ** 2 + d[1] ** 2
        on_edge |= (np.abs(cross) <= tol * max(np.sqrt(seg2), 1.0)) & (dot >= -tol) & (dot <= seg2 + tol)
        crosses = (a[1] > y) != (b[1] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_int = a[0] + (y - a[1]) * d[0] / d[1]
        inside ^= crosses & (x < x_int)
    return inside | on_edge


def chart_labels(loops: list[BoundaryLoop], tex_size: int) -> np.ndarray:
    """(tex, tex) index of the first loop containing each pixel centre, -1 if none."""
    centers = pixel_centers_uv(tex_size).reshape(-1, 2)
    labels = np.full(len(centers), -1, dtype=np.int64)
    for li, loop in enumerate(loops):
        hit = points_in_polygon(centers, loop.points) & (labels < 0)
        labels[hit] = li
    return labels.reshape(tex_size, tex_size)


def rasterize_mask(loops: list[BoundaryLoop], tex_size: int) -> np.ndarray:
    if tex_size < 1:
        raise ValueError("texture size must be positive")
    for loop in loops:
        if len(loop) < 3:
            raise BoundaryError("a loop needs at least three points")
    return chart_labels(loops, tex_size) >= 0


def _to_pixel(uv, tex_size: int) -> np.ndarray:
    uv = np.asarray(uv, dtype=np.float64)
    return np.stack([uv[..., 0] * tex_size - 0.5, (1.0 - uv[..., 1]) * tex_size - 0.5], axis=-1)


def _edge_pixels(loop: BoundaryLoop, i: int, tex_size: int, positions, border, labels_of_nodes, chart):
    """Border pixels of one chart lying within a pixel of boundary edge ``i``.

    Returns node ids and their arc-length parameter along the edge.
    """
    a, b = (_to_pixel(p, tex_size) for p in loop.edge_uv(i))
    d = b - a
    length = float(np.hypot(*d))
    rel = positions - a
    t = rel @ d / length
    perp = np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0]) / length
    ok = border & (labels_of_nodes == chart) & (perp < 1.0) & (t >= -0.5) & (t <= length + 0.5)
    nodes = np.flatnonzero(ok)
    return nodes, t[nodes], a, b


def _seam_map(a, b, inward_e, ta, tb, inward_t):
    """Similarity carrying twin segment (ta -> tb) onto (a -> b), twin chart outside."""
    za, zb, zta, ztb = (complex(*p) for p in (a, b, ta, tb))
    scale = (zb - za) / (ztb - zta)
    n_t = complex(*inward_t) * scale / abs(scale)
    flip = (n_t.real * inward_e[0] + n_t.imag * inward_e[1]) > 0

    def apply(p):
        z = p[:, 0] + 1j * p[:, 1]
        rel = (z - zta) / (ztb - zta)
        if flip:
            rel = np.conj(rel)
        out = za + rel * (zb - za)
        return np.stack([out.real, out.imag], axis=1)

    return apply


def _pixel_normal(inward_uv) -> np.ndarray:
    return np.array([inward_uv[0], -inward_uv[1]])


def build_texture_graph(mesh: UvMesh, tex_size: int) -> PositionalGraph:
    loops = uv_boundary_loops(mesh)
    for loop in loops:
        if len(loop) < 3:
            raise BoundaryError("a loop needs at least three points")
    labels = chart_labels(loops, tex_size)
    mask = labels >= 0
    if not mask.any():
        raise ValueError("texture mask is empty")
    g, node_of = masked_grid_parts(mask, labels)
    pos = g.positions
    node_labels = labels.ravel()[mask.ravel()]
    present = g.selection_table() > 0
    border = ~present[:, 1:].all(axis=1)

    candidates: dict[tuple[int, int], tuple[float, float, int]] = {}
    for li, loop in enumerate(loops):
        for ei, twin in enumerate(loop.twins):
            if twin is None:
                continue
            lj, ej = twin
            tloop = loops[lj]
            p_nodes, p_t, a, b = _edge_pixels(loop, ei, tex_size, pos, border, node_labels, li)
            q_nodes, _, ta, tb = _edge_pixels(tloop, ej, tex_size, pos, border, node_labels, lj)
            if len(p_nodes) == 0 or len(q_nodes) == 0:
                raise BoundaryError(
                    f"seam edge {ei} of loop {li} has no pixels to match with its twin"
                )
            va, _ = loop.edge_vertices(ei)
            ua, ub = tloop.edge_vertices(ej)
            if ua != va:
                ta, tb = tb, ta
            seam = _seam_map(a, b, _pixel_normal(loop.inward[ei]), ta, tb, _pixel_normal(tloop.inward[ej]))
            q_virtual = seam(pos[q_nodes])
            d_edge = (b - a) / np.hypot(*(b - a))
            q_t = (q_virtual - a) @ d_edge
            for p, tp in zip(p_nodes, p_t):
                offsets = q_virtual - pos[p]
                cheb = np.abs(offsets).max(axis=1)
                nearest = int(np.lexsort((q_t, np.abs(q_t - tp)))[0])
                pick = set(np.flatnonzero(cheb < 1.5).tolist()) | {nearest}
                for k in pick:
                    off = offsets[k]
                    m = select(off, g.epsilon)
                    if m == 0 or present[p, m]:
                        continue
                    rank = (float(np.hypot(*off)), float(q_t[k]), int(q_nodes[k]))
                    key = (int(p), m)
                    if key not in candidates or rank < candidates[key]:
                        candidates[key] = rank

    extra_src, extra_dst, extra_sel = [], [], []
    seen = set()
    for (p, m), (_, _, q) in sorted(candidates.items()):
        if (p, q) in seen:
            continue
        seen.add((p, q))
        extra_src.append(p)
        extra_dst.append(q)
        extra_sel.append(m)
    return PositionalGraph.from_edges(
        pos,
        np.concatenate([g.src, np.asarray(extra_src, dtype=np.int64)]),
        np.concatenate([g.dst, np.asarray(extra_dst, dtype=np.int64)]),
        np.concatenate([g.sel, np.asarray(extra_sel, dtype=np.int64)]),
        epsilon=g.epsilon,
    )


def texture_node_map(mesh: UvMesh, tex_size: int) -> np.ndarray:
    """(tex, tex) pixel -> node id for :func:`build_texture_graph`, -1 off the mask."""
    labels = chart_labels(uv_boundary_loops(mesh), tex_size)
    mask = labels >= 0
    node_of = np.full(mask.size, -1, dtype=np.int64)
    node_of[mask.ravel()] = np.arange(int(mask.sum()))
    return node_of.reshape(mask.shape)
