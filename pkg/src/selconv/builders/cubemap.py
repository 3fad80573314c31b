"""Cube-map graphs for spherical images.

Faces are stored left to right in a horizontal strip in the order
+x, -x, +y (top), -y (bottom), +z, -z, each ``face_size`` pixels square.
World +y is the top pole. Each face has a right/down frame; side faces look
down -y so their upward selection points at the pole. The top face's up
points to -z and the bottom face's up points to +z.

Edges crossing a cube edge are found by folding the off-face step onto the
neighbouring face. Their selection is the step taken in the source face's
frame.
"""

from __future__ import annotations

import numpy as np

from ..graph import STEPS, PositionalGraph

FACE_NAMES = ("+x", "-x", "+y", "-y", "+z", "-z")

# (normal, right, down) per face
FACE_FRAMES = np.array(
    [
        [(1, 0, 0), (0, 0, -1), (0, -1, 0)],
        [(-1, 0, 0), (0, 0, 1), (0, -1, 0)],
        [(0, 1, 0), (1, 0, 0), (0, 0, 1)],
        [(0, -1, 0), (1, 0, 0), (0, 0, -1)],
        [(0, 0, 1), (1, 0, 0), (0, -1, 0)],
        [(0, 0, -1), (-1, 0, 0), (0, -1, 0)],
    ],
    dtype=np.float64,
)

SIDE_FACES = (0, 1, 4, 5)


def node_id(face_size: int, face: int, row: int, col: int) -> int:
    return (face * face_size + row) * face_size + col


def node_face_rc(face_size: int, node):
    face, rest = np.divmod(np.asarray(node), face_size * face_size)
    row, col = np.divmod(rest, face_size)
    return face, row, col


def atlas_positions(face_size: int) -> np.ndarray:
    """Node positions in strip-atlas pixel coordinates, (x, y)."""
    f, r, c = node_face_rc(face_size, np.arange(6 * face_size * face_size))
    return np.stack([f * face_size + c, r], axis=1).astype(np.float64)


def face_coords(face_size: int, row, col):
    """Pixel centre in face coordinates, both in (-1, 1)."""
    u = (2.0 * (np.asarray(col) + 0.5)) / face_size - 1.0
    v = (2.0 * (np.asarray(row) + 0.5)) / face_size - 1.0
    return u, v


def pixel_centers_3d(face_size: int) -> np.ndarray:
    f, r, c = node_face_rc(face_size, np.arange(6 * face_size * face_size))
    u, v = face_coords(face_size, r, c)
    n, rt, dn = FACE_FRAMES[f, 0], FACE_FRAMES[f, 1], FACE_FRAMES[f, 2]
    return n + u[:, None] * rt + v[:, None] * dn


def locate(face_size: int, points: np.ndarray) -> np.ndarray:
    """Node containing each point on the cube surface (max-norm 1)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    normals = FACE_FRAMES[:, 0]
    face = np.argmax(points @ normals.T, axis=1)
    u = np.einsum("ij,ij->i", points, FACE_FRAMES[face, 1])
    v = np.einsum("ij,ij->i", points, FACE_FRAMES[face, 2])
    col = np.clip(np.floor((u + 1.0) * face_size / 2.0), 0, face_size - 1).astype(np.int64)
    row = np.clip(np.floor((v + 1.0) * face_size / 2.0), 0, face_size - 1).astype(np.int64)
    return (face * face_size + row) * face_size + col


def _fold(face: int, u: float, v: float):
    """Carry an off-face point (exactly one coordinate beyond 1) onto the next face."""
    n, rt, dn = FACE_FRAMES[face]
    if abs(u) > 1.0:
        axis, over, along = np.sign(u) * rt, abs(u) - 1.0, v * dn
    else:
        axis, over, along = np.sign(v) * dn, abs(v) - 1.0, u * rt
    return (1.0 - over) * n + axis + along


def build_cubemap(face_size: int) -> PositionalGraph:
    if face_size < 2:
        raise ValueError("cube-map faces need at least 2 pixels per edge")
    F = face_size
    n_nodes = 6 * F * F
    src, dst, sel = [], [], []
    step = 2.0 / F
    for node in range(n_nodes):
        face, row, col = (int(t) for t in node_face_rc(F, node))
        u, v = face_coords(F, row, col)
        for m in range(1, 9):
            dx, dy = (int(t) for t in STEPS[m])
            u2, v2 = u + dx * step, v + dy * step
            out_u, out_v = abs(u2) > 1.0, abs(v2) > 1.0
            if out_u and out_v:
                continue  # across a cube corner
            if not (out_u or out_v):
                other = node_id(F, face, row + dy, col + dx)
            else:
                other = int(locate(F, _fold(face, u2, v2))[0])
            src.append(node)
            dst.append(other)
            sel.append(m)
    return PositionalGraph.from_edges(
        atlas_positions(F), src, dst, sel, epsilon=1e-6, add_self=True
    )


def yaw_matrix(quarter_turns: int = 1) -> np.ndarray:
    """Rotation about the pole axis by ``quarter_turns`` * 90 degrees."""
    a = np.pi / 2 * quarter_turns
    c, s = np.round(np.cos(a)), np.round(np.sin(a))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_permutation(face_size: int, rotation: np.ndarray) -> np.ndarray:
    """``perm[i]`` is the node that pixel ``i`` lands on after rotating the sphere."""
    pts = pixel_centers_3d(face_size) @ np.asarray(rotation).T
    perm = locate(face_size, pts)
    if len(np.unique(perm)) != len(perm):
        raise ValueError("rotation does not map cube pixels onto cube pixels")
    return perm


def strip_to_nodes(image: np.ndarray, face_size: int) -> np.ndarray:
    """(F, 6F, C) strip image -> (6F^2, C) node features."""
    img = np.asarray(image)
    F = face_size
    if img.shape[0] != F or img.shape[1] != 6 * F:
        raise ValueError(f"cube strip must be {F}x{6 * F}, got {img.shape[:2]}")
    faces = img.reshape(F, 6, F, -1).transpose(1, 0, 2, 3)
    return faces.reshape(6 * F * F, -1)


def nodes_to_strip(x: np.ndarray, face_size: int) -> np.ndarray:
    F = face_size
    x = np.asarray(x).reshape(6, F, F, -1)
    return x.transpose(1, 0, 2, 3).reshape(F, 6 * F, -1)
