import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selconv.builders.grid import build_grid
from selconv.graph import (
    GraphError,
    PositionalGraph,
    build_adjacency,
    check_graph,
    compose_hops,
    dump_graph,
    normalized_adjacency,
    offset_to_path,
    opposite,
    parse_graph,
    path_offset,
    permutation_matrix,
    permute_nodes,
    select,
)
from selconv.numerics import sparse_compose


def brute_select(dx, dy):
    """Direction k points at angle (k - 1) * 45 degrees, counter-clockwise on screen (y down)."""
    best, arg = -math.inf, None
    for k in range(1, 9):
        a = math.radians((k - 1) * 45)
        dot = dx * math.cos(a) - dy * math.sin(a)
        if dot > best + 1e-12:
            best, arg = dot, k
    return arg


def test_select_named_directions():
    assert select((1, 0)) == 1
    assert select((0, 0)) == 0
    assert select((-3, 0)) == 5
    assert select((0, -1)) == 3
    assert select((0, 1)) == 7


def test_select_brute_force_case():
    assert select((0.6, -0.9)) == brute_select(0.6, -0.9)


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_select_matches_brute_force(dx, dy):
    if math.hypot(dx, dy) < 1e-3:
        return
    if abs(math.degrees(math.atan2(-dy, dx)) % 45 - 22.5) < 1e-6:
        return  # sector boundary
    assert select((dx, dy)) == brute_select(dx, dy)


def test_select_boundary_picks_a_neighbouring_sector():
    a = math.radians(22.5)
    assert select((math.cos(a), -math.sin(a))) in (1, 2)


def test_opposite_is_antipodal():
    for m in range(1, 9):
        assert opposite(opposite(m)) == m
        assert abs(((m - 1) * 45 - (opposite(m) - 1) * 45) % 360) == 180


def test_offset_paths():
    assert offset_to_path((0, 2)) == (7, 7)
    assert offset_to_path((1, 0)) == (1,)
    assert offset_to_path((2, 1)) == (8, 1)
    with pytest.raises(ValueError):
        offset_to_path((0, 0))


@settings(max_examples=100, deadline=None)
@given(st.integers(-8, 8), st.integers(-8, 8))
def test_path_sums_to_offset(dx, dy):
    if dx == 0 and dy == 0:
        return
    path = offset_to_path((dx, dy))
    assert path_offset(path) == (dx, dy)
    assert len(path) == max(abs(dx), abs(dy))


def test_single_node_adjacency():
    g = PositionalGraph.from_edges([[0, 0]], [], [], [], add_self=True)
    adj = build_adjacency(g)
    assert adj.mats[0].entries() == [(0, 0, 1.0)]
    assert all(m.nnz == 0 for m in adj.mats[1:])


def test_pair_adjacency():
    g = PositionalGraph.from_neighbors([[0, 0], [1, 0]], [0, 1], [1, 0])
    adj = build_adjacency(g)
    assert adj.mats[1].entries() == [(0, 1, 1.0)]
    assert adj.mats[5].entries() == [(1, 0, 1.0)]


def test_grid_partition_sizes():
    adj = build_adjacency(build_grid(3, 3))
    sizes = [m.nnz for m in adj.mats]
    # brute-force count of 8-neighbours per direction on a 3x3 board
    expect = [9]
    for k in range(1, 9):
        n = 0
        for r in range(3):
            for c in range(3):
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        if (dr or dc) and 0 <= r + dr < 3 and 0 <= c + dc < 3 and brute_select(dc, dr) == k:
                            n += 1
        expect.append(n)
    assert sizes == expect
    assert sum(sizes) == 49


def test_grid_normalization_is_identity():
    g = build_grid(4, 5)
    a, b = build_adjacency(g), normalized_adjacency(g)
    for x, y in zip(a.mats, b.mats):
        assert x == y


def test_two_edges_same_selection_get_half():
    pos = [[0, 0], [-0.1, -1], [0.1, -1]]
    g = PositionalGraph.from_neighbors(pos, [0, 0], [1, 2])
    adj = normalized_adjacency(g)
    assert adj.mats[3].entries() == [(0, 1, 0.5), (0, 2, 0.5)]


def test_random_multigraph_rows_sum_to_one():
    rng = np.random.default_rng(5)
    pos = rng.random((40, 2)) * 10
    pairs = {(int(a), int(b)) for a, b in rng.integers(0, 40, (300, 2)) if a != b}
    src, dst = zip(*sorted(pairs))
    adj = normalized_adjacency(PositionalGraph.from_neighbors(pos, src, dst))
    for m in adj.mats:
        sums = m.row_sums()
        nz = m.row_counts() > 0
        assert np.all(np.abs(sums[nz] - 1) <= 1e-6)


def test_hop_composition():
    h, w = 5, 6
    g = build_grid(h, w)
    adj = build_adjacency(g)
    assert compose_hops(adj, [7]) == adj.mats[7]
    two = compose_hops(adj, [7, 7])
    assert {(i, j) for i, j, _ in two.entries()} == {
        (r * w + c, (r + 2) * w + c) for r in range(h - 2) for c in range(w)
    }
    # explicit two-step walk: first down-right, then down
    walk = set()
    for r in range(h):
        for c in range(w):
            r1, c1 = r + 1, c + 1
            if r1 < h and c1 < w and r1 + 1 < h:
                walk.add((r * w + c, (r1 + 1) * w + c1))
    assert {(i, j) for i, j, _ in compose_hops(adj, [8, 7]).entries()} == walk


def test_permutation_identity_and_swap():
    g = build_grid(2, 3)
    assert permute_nodes(g, np.arange(6)).same_structure(g)
    perm = np.array([1, 0, 2, 3, 4, 5])
    p = permute_nodes(g, perm)
    assert p.num_edges == g.num_edges
    assert set(p.edges()) == {(perm[s], perm[d], m) for s, d, m in g.edges()}


def test_permutation_conjugates_adjacency():
    rng = np.random.default_rng(2)
    g = build_grid(4, 5)
    perm = rng.permutation(g.num_nodes)
    P = permutation_matrix(perm)
    a, b = build_adjacency(g), build_adjacency(permute_nodes(g, perm))
    pt = type(P)(P.csr.T.tocsr())
    for m in range(9):
        assert sparse_compose(sparse_compose(P, a.mats[m]), pt) == b.mats[m]


def test_permutation_must_be_bijection():
    with pytest.raises(ValueError):
        permute_nodes(build_grid(2, 2), [0, 0, 1, 2])


def test_graph_invariants_enforced():
    with pytest.raises(GraphError):
        PositionalGraph([[0, 0], [1, 0]], [0, 1, 0, 0], [0, 1, 1, 1], [0, 0, 1, 1])
    with pytest.raises(GraphError):
        PositionalGraph([[0, 0]], [], [], [])
    with pytest.raises(GraphError):
        PositionalGraph([[0, 0], [1, 0]], [0, 1, 0], [0, 1, 1], [0, 0, 9])


def test_dump_round_trip_and_order():
    g = build_grid(3, 3)
    text = dump_graph(g)
    lines = text.splitlines()
    assert lines[0] == "n 9"
    assert sum(ln.startswith("e ") for ln in lines) == 49
    edges = [tuple(map(int, ln.split()[1:3])) for ln in lines if ln.startswith("e ")]
    assert edges == sorted(edges)
    back = parse_graph(text)
    assert back.same_structure(g)
    assert np.array_equal(back.positions, g.positions)
    assert check_graph(back) == []


def test_parse_rejects_garbage():
    with pytest.raises(GraphError):
        parse_graph("n 1\nv 0 0 0\nq 1\n")
    with pytest.raises(GraphError):
        parse_graph("n 2\nv 0 0 0\n")
