"""Hand-built OBJ fixtures."""

import numpy as np

from selconv.builders.cubemap import FACE_FRAMES


def _fmt(verts, uvs, faces):
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in verts]
    lines += [f"vt {u:.9g} {v:.9g}" for u, v in uvs]
    for face in faces:
        lines.append("f " + " ".join(f"{vi + 1}/{ti + 1}" for vi, ti in face))
    return "\n".join(lines) + "\n"


def _uv(x, y, tex):
    """Pixel-corner coordinates (x right, y down) to UV."""
    return (x / tex, 1.0 - y / tex)


def unit_square_obj():
    verts = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)]
    uvs = [(0, 0), (1, 0), (1, 1), (0, 1)]
    return _fmt(verts, uvs, [[(0, 0), (1, 1), (2, 2), (3, 3)]])


def two_quads_obj(tex=16, size=6, rotate_second=False):
    """Two quads sharing the 3D edge v1-v2, laid out as separate UV charts.

    Chart A sits at pixel block (1, 1); chart B sits at (9, 1), shifted only,
    unless ``rotate_second`` turns it a quarter so the shared edge is its top.
    """
    verts = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (2, 0, 0), (2, 1, 0)]
    x0, y0 = 1, 1
    # chart A: v0 bottom-left, v1 bottom-right, v2 top-right, v3 top-left
    a = [(x0, y0 + size), (x0 + size, y0 + size), (x0 + size, y0), (x0, y0)]
    bx, by = 9, 1
    if not rotate_second:
        # chart B: v1 bottom-left, v4 bottom-right, v5 top-right, v2 top-left
        b = [(bx, by + size), (bx + size, by + size), (bx + size, by), (bx, by)]
    else:
        # shared edge v2-v1 runs along B's top, left to right
        b = [(bx + size, by), (bx + size, by + size), (bx, by + size), (bx, by)]
    uvs = [_uv(x, y, tex) for x, y in a + b]
    faces = [
        [(0, 0), (1, 1), (2, 2), (3, 3)],
        [(1, 4), (4, 5), (5, 6), (2, 7)],
    ]
    return _fmt(verts, uvs, faces)


CUBE_BLOCKS = ((0, 0), (2, 0), (4, 0), (0, 2), (2, 2), (4, 2))


def cube_obj(face_size, blocks=CUBE_BLOCKS, tex=None):
    """Unit cube with one UV chart per face, oriented like the cube-map frames.

    Face ``f`` occupies the ``face_size`` pixel block at ``blocks[f]``.
    """
    F = face_size
    if tex is None:
        tex = F * (max(max(b) for b in blocks) + 1)
    corners = {}
    verts = []
    uvs = []
    faces = []
    for f, (bx, by) in enumerate(blocks):
        n, rt, dn = FACE_FRAMES[f]
        quad = []
        for a, b in ((-1, 1), (1, 1), (1, -1), (-1, -1)):
            p = tuple(np.round(n + a * rt + b * dn).astype(int))
            if p not in corners:
                corners[p] = len(verts)
                verts.append(p)
            px = bx * F + (a + 1) / 2 * F
            py = by * F + (b + 1) / 2 * F
            uvs.append(_uv(px, py, tex))
            quad.append((corners[p], len(uvs) - 1))
        faces.append(quad)
    return _fmt(verts, uvs, faces), tex


def tube_obj(height, width, segments=4):
    """Open cylinder unwrapped into one chart covering the whole texture.

    The chart's left and right edges are the same 3D seam; top and bottom are
    open boundaries. Texture is ``width`` x ``width``; the chart spans the
    full width and ``height`` rows.
    """
    tex = width
    verts, uvs, faces = [], [], []
    ang = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    for z in (0, 1):
        for t in ang:
            verts.append((np.cos(t), np.sin(t), z))
    for k in range(segments + 1):
        for z, py in ((0, height), (1, 0)):
            uvs.append(_uv(k * width / segments, py, tex))
    for k in range(segments):
        k2 = (k + 1) % segments
        b0, b1, t1, t0 = k, k2, segments + k2, segments + k
        faces.append([(b0, 2 * k), (b1, 2 * (k + 1)), (t1, 2 * (k + 1) + 1), (t0, 2 * k + 1)])
    return _fmt(verts, uvs, faces), tex
