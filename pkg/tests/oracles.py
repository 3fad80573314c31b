"""Independent reference implementations shared by the unit and acceptance tests."""

import itertools
from collections import Counter
from fractions import Fraction

import numpy as np

from selconv.builders.superpixel import SuperpixelSet


def king_edges(h, w, wrap=False):
    """Brute-force 8-neighbourhood on an h x w board, optionally wrapping columns."""
    out = {}
    for r, c in itertools.product(range(h), range(w)):
        out[(r * w + c, r * w + c)] = 0
        for dr, dc in itertools.product((-1, 0, 1), repeat=2):
            if not (dr or dc):
                continue
            r2, c2 = r + dr, c + dc
            if wrap:
                c2 %= w
            if 0 <= r2 < h and 0 <= c2 < w:
                sel = {(1, 0): 1, (1, -1): 2, (0, -1): 3, (-1, -1): 4, (-1, 0): 5, (-1, 1): 6, (0, 1): 7,
                       (1, 1): 8}[(dc, dr)]
                out[(r * w + c, r2 * w + c2)] = sel
    return out


def cube_corner_oracle(F):
    """Pixels of the cube surface as sets of integer corner points; adjacency = shared corner.

    Faces are enumerated independently of the library's frames: for each axis
    and sign, the two remaining axes span an F x F pixel lattice.
    """
    pixels = []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        for sign in (-1, 1):
            for i, j in itertools.product(range(F), repeat=2):
                corners = set()
                for di, dj in itertools.product((0, 1), repeat=2):
                    p = [0, 0, 0]
                    p[axis] = sign * F
                    p[others[0]] = 2 * (i + di) - F
                    p[others[1]] = 2 * (j + dj) - F
                    corners.add(tuple(p))
                center = np.zeros(3)
                center[axis] = sign
                center[others[0]] = (2 * i + 1 - F) / F
                center[others[1]] = (2 * j + 1 - F) / F
                pixels.append((center, corners))
    return pixels


def ray_cast(px, py, poly):
    """Textbook crossing-number test in exact rational arithmetic; boundary counts as inside."""
    px, py = Fraction(px), Fraction(py)
    pts = [(Fraction(x), Fraction(y)) for x, y in poly]
    inside = False
    for (ax, ay), (bx, by) in zip(pts, pts[1:] + pts[:1]):
        cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        if cross == 0 and min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by):
            return True
        if (ay > py) != (by > py):
            xi = ax + (py - ay) * (bx - ax) / (by - ay)
            if px < xi:
                inside = not inside
    return inside


def oracle_mask(loops, tex):
    mask = np.zeros((tex, tex), bool)
    for r in range(tex):
        for c in range(tex):
            u = Fraction(2 * c + 1, 2 * tex)
            v = 1 - Fraction(2 * r + 1, 2 * tex)
            mask[r, c] = any(ray_cast(u, v, [tuple(map(float, p)) for p in loop.points]) for loop in loops)
    return mask


def boundary_tally(mesh):
    """Reference count of UV edges: boundary edges are the ones used by exactly one triangle."""
    count = Counter()
    for tri in mesh.faces:
        for k in range(3):
            a, b = int(tri[k][1]), int(tri[(k + 1) % 3][1])
            count[frozenset((a, b))] += 1
    return [e for e, n in count.items() if n == 1]


def lattice_set(n=4, cell=4):
    labels = np.add.outer(np.arange(n * cell) // cell * n, np.arange(n * cell) // cell)
    return SuperpixelSet.from_labels(labels, np.zeros(labels.shape + (1,)))


def unit_average(selections):
    """Direction of the summed unit vectors, snapped to 45-degree sectors by hand."""
    ang = np.radians([(s - 1) * 45 for s in selections])
    a = np.degrees(np.arctan2(np.sin(ang).sum(), np.cos(ang).sum())) % 360
    k = a / 45
    lo = int(np.floor(k))
    if abs(k - lo - 0.5) < 1e-9:
        return min(lo % 8 + 1, (lo + 1) % 8 + 1)
    return int(np.round(k)) % 8 + 1


def quad_surface_adjacency(obj_text, tex):
    """Exhaustive surface adjacency for an OBJ made of UV-rectangle quads.

    Every pixel whose centre lies in a face's UV rectangle is lifted to 3D
    through that face's affine UV-to-space map. Two pixels touch when they
    share a lifted corner. Returns ({(row, col): face}, set of touching
    ordered pixel pairs).
    """
    verts, uvs, faces = [], [], []
    for line in obj_text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append(np.array(parts[1:4], float))
        elif parts[0] == "vt":
            uvs.append(np.array(parts[1:3], float))
        elif parts[0] == "f":
            faces.append([tuple(int(i) - 1 for i in p.split("/")[:2]) for p in parts[1:]])
    owner, corners = {}, {}
    for f, face in enumerate(faces):
        (v0, t0), (v1, t1), _, (v3, t3) = face
        # pixel coordinates: x right, y down
        pix = [np.array([u * tex, (1 - v) * tex]) for u, v in (uvs[t0], uvs[t1], uvs[t3])]
        basis = np.column_stack([pix[1] - pix[0], pix[2] - pix[0]])
        lo = np.min([np.array([uvs[t][0], 1 - uvs[t][1]]) * tex for _, t in face], axis=0)
        hi = np.max([np.array([uvs[t][0], 1 - uvs[t][1]]) * tex for _, t in face], axis=0)

        def lift(x, y):
            s, t = np.linalg.solve(basis, np.array([x, y]) - pix[0])
            p = verts[v0] + s * (verts[v1] - verts[v0]) + t * (verts[v3] - verts[v0])
            return tuple(np.round(p * 4 * tex).astype(int))

        for r in range(tex):
            for c in range(tex):
                if lo[0] < c + 0.5 < hi[0] and lo[1] < r + 0.5 < hi[1]:
                    owner[(r, c)] = f
                    corners[(r, c)] = {lift(c + dx, r + dy) for dx in (0, 1) for dy in (0, 1)}
    by_corner = {}
    for px, cs in corners.items():
        for k in cs:
            by_corner.setdefault(k, set()).add(px)
    touching = {(a, b) for group in by_corner.values() for a in group for b in group if a != b}
    return owner, touching
