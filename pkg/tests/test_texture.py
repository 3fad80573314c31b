from collections import Counter

import numpy as np
import pytest
from meshes import CUBE_BLOCKS, cube_obj, tube_obj, two_quads_obj, unit_square_obj
from oracles import boundary_tally, oracle_mask, ray_cast

from selconv.builders.cubemap import build_cubemap, node_id
from selconv.builders.grid import build_masked_graph, build_panorama
from selconv.builders.texture import (
    BoundaryError,
    ObjParseError,
    build_texture_graph,
    parse_obj,
    points_in_polygon,
    rasterize_mask,
    texture_node_map,
    uv_boundary_loops,
)
from selconv.graph import check_graph, opposite


def test_parse_obj_basics():
    mesh = parse_obj(unit_square_obj())
    assert mesh.faces.shape == (2, 3, 2)
    with pytest.raises(ObjParseError):
        parse_obj("v 0 0 0\nvt 0 0\nf 1/1 2/1 3/1\n")
    with pytest.raises(ObjParseError):
        parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")


def test_unit_square_loop():
    loops = uv_boundary_loops(parse_obj(unit_square_obj()))
    assert len(loops) == 1 and len(loops[0]) == 4
    assert loops[0].twins == [None] * 4
    assert rasterize_mask(loops, 4).all()


def test_single_chart_equals_masked_grid():
    mesh = parse_obj(unit_square_obj())
    g = build_texture_graph(mesh, 5)
    assert g.same_structure(build_masked_graph(np.ones((5, 5), bool)))


def test_triangle_half_plane():
    mesh = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf 1/1 2/2 3/3\n")
    tex = 8
    mask = rasterize_mask(uv_boundary_loops(mesh), tex)
    rows, cols = np.mgrid[0:tex, 0:tex]
    u, v = (cols + 0.5) / tex, 1 - (rows + 0.5) / tex
    assert np.array_equal(mask, u + v <= 1 + 1e-12)


def test_disjoint_loops_union():
    text, _ = cube_obj(2)
    loops = uv_boundary_loops(parse_obj(text))
    tex = 10
    union = np.zeros((tex, tex), bool)
    for loop in loops:
        union |= rasterize_mask([loop], tex)
    assert np.array_equal(rasterize_mask(loops, tex), union)


def test_points_in_polygon_vs_ray_cast_random_star():
    rng = np.random.default_rng(0)
    ang = np.sort(rng.random(9)) * 2 * np.pi
    rad = rng.uniform(0.3, 1.0, 9)
    poly = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
    pts = rng.uniform(-1, 1, (400, 2))
    got = points_in_polygon(pts, poly)
    expect = [ray_cast(x, y, [tuple(p) for p in poly]) for x, y in pts]
    assert got.tolist() == expect


def test_cube_loops_and_twins():
    text, tex = cube_obj(3)
    mesh = parse_obj(text)
    loops = uv_boundary_loops(mesh)
    assert len(loops) == 6
    assert sum(len(lp) for lp in loops) == len(boundary_tally(mesh)) == 24
    for li, loop in enumerate(loops):
        for ei, twin in enumerate(loop.twins):
            assert twin is not None
            lj, ej = twin
            assert loops[lj].twins[ej] == (li, ei)
            assert set(loop.edge_vertices(ei)) == set(loops[lj].edge_vertices(ej))
    assert np.array_equal(rasterize_mask(loops, tex), oracle_mask(loops, tex))


def test_tube_loop_tally():
    text, _ = tube_obj(5, 8, segments=4)
    mesh = parse_obj(text)
    loops = uv_boundary_loops(mesh)
    assert len(loops) == 1
    assert len(loops[0]) == len(boundary_tally(mesh)) == 2 * 4 + 2
    assert sum(t is not None for t in loops[0].twins) == 2


def test_two_quads_cross_seam_edges():
    size = 6
    text = two_quads_obj(tex=16, size=size)
    mesh = parse_obj(text)
    loops = uv_boundary_loops(mesh)
    tex = 16
    assert np.array_equal(rasterize_mask(loops, tex), oracle_mask(loops, tex))
    g = build_texture_graph(mesh, tex)
    node_of = texture_node_map(mesh, tex)
    # chart A occupies columns 1..6, chart B columns 9..14, rows 1..6
    a_right = {r: node_of[r, 6] for r in range(1, 1 + size)}
    b_left = {r: node_of[r, 9] for r in range(1, 1 + size)}
    expect = {}
    for r in range(1, 1 + size):
        for dr in (-1, 0, 1):
            if r + dr in b_left:
                m = {-1: 2, 0: 1, 1: 8}[dr]
                expect[(a_right[r], b_left[r + dr])] = m
                expect[(b_left[r + dr], a_right[r])] = opposite(m)
    edges = g.edge_dict()
    cols = np.array([divmod(int(np.argmax(node_of.ravel() == n)), tex)[1] for n in range(g.num_nodes)])
    seam = {k: v for k, v in edges.items() if (cols[k[0]] <= 6) != (cols[k[1]] <= 6)}
    assert seam == expect
    assert len(seam) == 2 * (3 * size - 2)
    # exactly one straight neighbour across the seam for every pixel on the shared edge
    for r in range(1, 1 + size):
        straight = [k for k, v in seam.items() if k[0] == a_right[r] and v == 1]
        assert len(straight) == 1
    assert check_graph(g) == []


def test_two_quads_rotated_chart_uses_local_frames():
    mesh = parse_obj(two_quads_obj(tex=16, size=6, rotate_second=True))
    g = build_texture_graph(mesh, 16)
    edges = g.edge_dict()
    node_of = texture_node_map(mesh, 16)
    chart_a = set(node_of[:, :8][node_of[:, :8] >= 0].tolist())
    seam = {k: v for k, v in edges.items() if (k[0] in chart_a) != (k[1] in chart_a)}
    assert len(seam) == 2 * (3 * 6 - 2)
    # the shared edge is A's right side but B's top side, so B looks up into A
    for (s, d), m in seam.items():
        assert m in ((8, 1, 2) if s in chart_a else (2, 3, 4))
        assert (d, s) in edges
    out_a = Counter(s for (s, d), m in seam.items() if m == 1)
    out_b = Counter(s for (s, d), m in seam.items() if m == 3)
    assert len(out_a) == len(out_b) == 6
    assert set(out_a.values()) == set(out_b.values()) == {1}
    assert g.selection_table()[:, 1:].max() == 1


@pytest.mark.parametrize("F", [2, 3, 4])
def test_cube_unwrap_matches_cubemap(F):
    text, tex = cube_obj(F)
    mesh = parse_obj(text)
    g = build_texture_graph(mesh, tex)
    node_of = texture_node_map(mesh, tex)
    to_cube = np.empty(g.num_nodes, int)
    for f, (bx, by) in enumerate(CUBE_BLOCKS):
        for r in range(F):
            for c in range(F):
                to_cube[node_of[by * F + r, bx * F + c]] = node_id(F, f, r, c)
    mapped = {(int(to_cube[s]), int(to_cube[d])): m for (s, d), m in g.edge_dict().items()}
    assert mapped == build_cubemap(F).edge_dict()


def test_tube_matches_panorama():
    text, tex = tube_obj(5, 8)
    mesh = parse_obj(text)
    g = build_texture_graph(mesh, tex)
    node_of = texture_node_map(mesh, tex)
    assert node_of[:5].min() >= 0 and (node_of[5:] < 0).all()
    assert g.same_structure(build_panorama(5, 8))


def test_nonmanifold_uv_edge_is_rejected():
    text = (
        "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 -1 0\nv 1 1 1\n"
        "vt 0 0\nvt 1 0\nvt 0 1\nvt 0 -1\nvt 1 1\n"
        "f 1/1 2/2 3/3\nf 2/2 1/1 4/4\nf 1/1 2/2 5/5\n"
    )
    with pytest.raises(BoundaryError):
        uv_boundary_loops(parse_obj(text))
