import csv
import io
import json
import random

import pytest

from horolab.errors import EmptyOverlapError, ParameterError, ResourceLimitError, UnknownVertexError
from horolab.horoproduct import (
    build_dl_window,
    build_product,
    components,
    connected_component,
    degree,
    random_split_instance,
    union_product_check,
)
from horolab.leveled_tree import BitSource, LeveledTree, TreeParams, sample_window_tree


def brute_product(left: LeveledTree, right: LeveledTree):
    """All admissible pairs and all pairs of pairs adjacent in both factors."""
    lv = {v: left.level_of(v) for v in left}
    rv = {v: right.level_of(v) for v in right}
    verts = [(a, b) for a in lv for b in rv if lv[a] == -rv[b]]

    def adjacent(tree, x, y):
        return tree.parent(x) == y or tree.parent(y) == x

    edges = set()
    for i, (a, b) in enumerate(verts):
        for c, d in verts[i + 1:]:
            if adjacent(left, a, c) and adjacent(right, b, d):
                edges.add(frozenset([(a, b), (c, d)]))
    return set(verts), edges


def product_edges(g):
    key = lambda i: (g.vertices[i].left, g.vertices[i].right)  # noqa: E731
    return {frozenset([key(a), key(b)]) for a, b in g.edges()}


def test_single_vertex_product():
    t = sample_window_tree(TreeParams(2, 3, 0.5), 0, 0, BitSource(0))
    s = sample_window_tree(TreeParams(1, 2, 0.5), 0, 0, BitSource(0))
    g = build_product(s, t)
    assert len(g) == 1 and g.edge_count == 0
    assert connected_component(g, g.root) == {0}


def test_empty_overlap():
    left = sample_window_tree(TreeParams(1, 2, 0.5), 5, 1, BitSource(0))
    right = sample_window_tree(TreeParams(1, 2, 0.5), 0, 1, BitSource(0))
    with pytest.raises(EmptyOverlapError):
        build_product(left, right)


@pytest.mark.parametrize("h", [0, 1, 3, 6])
def test_line_product_is_path(h):
    g = build_dl_window(1, 1, h)
    assert len(g) == 2 * h + 1
    assert g.edge_count == 2 * h
    assert all(degree(g, v) <= 2 for v in range(len(g)))
    assert len(components(g)) == 1


@pytest.mark.parametrize("al, ar, h", [(1, 2, 2), (2, 2, 2), (3, 3, 2), (2, 3, 1), (3, 1, 2)])
def test_window_vertex_count(al, ar, h):
    g = build_dl_window(al, ar, h)
    assert len(g) == sum(al ** (h - l) * ar ** (h + l) for l in range(-h, h + 1))


def test_ternary_window_h2():
    g = build_dl_window(3, 3, 2)
    assert len(g) == 405
    # every vertex below the top has one left parent times three right children
    assert g.edge_count == 4 * 81 * 3
    assert len(components(g)) == 1
    assert all(g.is_remanent(a, b) for a, b in g.edges())


@pytest.mark.parametrize("al, ar", [(3, 3), (1, 2), (2, 3), (1, 1)])
def test_deterministic_degrees(al, ar):
    h = 2
    g = build_dl_window(al, ar, h)
    for v in range(len(g)):
        lvl = g.level(v)
        if -h < lvl < h:
            assert degree(g, v) == al + ar
        else:
            assert degree(g, v) < al + ar


@pytest.mark.parametrize("a0, a", [(2, 3), (1, 3), (2, 4)])
def test_all_percolative_closed_degree(a0, a):
    h = 2
    params = TreeParams(a0, a, 0.0)
    left = sample_window_tree(params, -h, 2 * h, BitSource(1, 0))
    right = sample_window_tree(params, -h, 2 * h, BitSource(1, 1))
    g = build_product(left, right)
    interior = [v for v in range(len(g)) if -h < g.level(v) < h]
    assert interior and all(degree(g, v) == 2 * a0 for v in interior)


def test_removing_percolative_edges_from_full_trees():
    h = 2
    params = TreeParams(2, 3, 1.0)
    left = sample_window_tree(params, -h, 2 * h, BitSource(0, 0))
    right = sample_window_tree(params, -h, 2 * h, BitSource(0, 1))
    reduced = build_product(left, right).without_percolative()
    for v in range(len(reduced)):
        hv = reduced.vertices[v]
        unmarked = all(k <= 2 for k in hv.left) and all(k <= 2 for k in hv.right)
        if -h < hv.level < h and unmarked:
            assert degree(reduced, v) == 4


@pytest.mark.parametrize("seed", range(15))
def test_matches_brute_force_oracle(seed):
    rng = random.Random(seed)
    lp = TreeParams(rng.randint(0, 2), 3, rng.random())
    rp = TreeParams(rng.randint(1, 2), 3, rng.random())
    h = rng.randint(0, 2)
    left = sample_window_tree(lp, -h, 2 * h, BitSource(seed, 0))
    right = sample_window_tree(rp, -h, 2 * h, BitSource(seed, 1))
    g = build_product(left, right)
    verts, edges = brute_product(left, right)
    assert {(v.left, v.right) for v in g.vertices} == verts
    assert product_edges(g) == edges


@pytest.mark.parametrize("seed", range(10))
def test_structural_invariants(seed):
    p = TreeParams(1, 3, 0.6)
    left = sample_window_tree(p, -2, 4, BitSource(seed, 0))
    right = sample_window_tree(p, -2, 4, BitSource(seed, 1))
    g = build_product(left, right)
    for v in range(len(g)):
        hv = g.vertices[v]
        assert right.level_of(hv.right) == hv.level == -left.level_of(hv.left)
        nbrs = g.neighbors(v)
        assert v not in nbrs
        assert len(set(nbrs)) == len(nbrs)
        assert degree(g, v) <= p.alpha_max * 2
        for w in nbrs:
            assert abs(g.level(w) - hv.level) == 1


def test_even_cycles_and_same_level_paths():
    g = build_dl_window(2, 2, 2)
    # a BFS two-colouring by level parity must be proper
    for a, b in g.edges():
        assert (g.level(a) - g.level(b)) % 2 == 1


def test_path_projection_to_factors():
    p = TreeParams(1, 3, 0.7)
    left = sample_window_tree(p, -2, 4, BitSource(5, 0))
    right = sample_window_tree(p, -2, 4, BitSource(5, 1))
    g = build_product(left, right)
    rng = random.Random(0)

    def adjacent(tree, x, y):
        return tree.parent(x) == y or tree.parent(y) == x

    for _ in range(300):
        v = rng.randrange(len(g))
        path = [v]
        for _ in range(6):
            nbrs = g.neighbors(path[-1])
            if not nbrs:
                break
            path.append(rng.choice(nbrs))
        for a, b in zip(path, path[1:]):
            va, vb = g.vertices[a], g.vertices[b]
            assert adjacent(left, va.left, vb.left)
            assert adjacent(right, va.right, vb.right)


@pytest.mark.parametrize("seed", range(8))
def test_edge_kind(seed):
    lp, rp = TreeParams(1, 3, 0.5), TreeParams(2, 3, 0.5)
    left = sample_window_tree(lp, -2, 4, BitSource(seed, 0))
    right = sample_window_tree(rp, -2, 4, BitSource(seed, 1))
    g = build_product(left, right)
    for a, b in g.edges():
        lo, hi = sorted((a, b), key=g.level)
        left_child = g.vertices[lo].left
        right_child = g.vertices[hi].right
        expected = left_child[-1] <= lp.alpha_min and right_child[-1] <= rp.alpha_min
        assert g.is_remanent(a, b) == expected


def test_unknown_vertex():
    g = build_dl_window(1, 2, 1)
    with pytest.raises(UnknownVertexError):
        degree(g, len(g))
    with pytest.raises(UnknownVertexError):
        connected_component(g, ((9,), ()))


def test_vertex_cap():
    with pytest.raises(ResourceLimitError):
        build_dl_window(3, 3, 4, cap=1000)
    with pytest.raises(ParameterError):
        build_dl_window(0, 2, 1)


def test_connected_component_excludes_other_part():
    left = sample_window_tree(TreeParams(1, 1, 1.0), -2, 2, BitSource(0))
    right = sample_window_tree(TreeParams(2, 2, 1.0), 0, 2, BitSource(0))
    forest = LeveledTree.disjoint_union(right.subtree((1,)), right.subtree((2,)))
    g = build_product(left, forest)
    comp = connected_component(g, 0)
    assert all(g.vertices[i].right[0] == g.vertices[0].right[0] for i in comp)
    assert len(components(g)) == 2


def test_union_two_single_vertices():
    left = sample_window_tree(TreeParams(1, 1, 1.0), -2, 2, BitSource(0))
    right = sample_window_tree(TreeParams(2, 2, 1.0), 0, 1, BitSource(0))
    a = LeveledTree(right.params, 0, [(1,)])
    b = LeveledTree(right.params, 0, [(2,)])
    report = union_product_check(left, a, b)
    assert report.components_disjoint == 2 and report.ok
    assert report.components_bridged is None


def test_union_with_bridge():
    left = sample_window_tree(TreeParams(1, 2, 1.0), -2, 2, BitSource(0))
    right = sample_window_tree(TreeParams(2, 2, 1.0), 0, 2, BitSource(0))
    report = union_product_check(left, right.without((2,)), right.subtree((2,)), ((), (2,)))
    assert (report.components_part1, report.components_part2) == (1, 1)
    assert report.components_disjoint == 2
    assert report.components_bridged == 1
    assert report.ok and report.to_dict()["ok"]


def test_union_three_parts_by_repetition():
    left = sample_window_tree(TreeParams(1, 1, 1.0), -2, 2, BitSource(0))
    right = sample_window_tree(TreeParams(2, 2, 1.0), 0, 2, BitSource(0))
    top = right.without((1,)).without((2,))
    one, two = right.subtree((1,)), right.subtree((2,))
    three = LeveledTree.disjoint_union(LeveledTree.disjoint_union(top, one), two)
    assert len(components(build_product(left, three))) == 3
    first = union_product_check(left, top, one, ((), (1,)))
    assert first.components_disjoint == 2 and first.components_bridged == 1
    joined = LeveledTree.disjoint_union(top, one, ((), (1,)))
    second = union_product_check(left, joined, two, ((), (2,)))
    assert second.components_disjoint == 2 and second.components_bridged == 1


def test_union_rejects_overlap():
    left = sample_window_tree(TreeParams(1, 1, 1.0), -1, 1, BitSource(0))
    right = sample_window_tree(TreeParams(2, 2, 1.0), 0, 1, BitSource(0))
    with pytest.raises(ParameterError):
        union_product_check(left, right, right.subtree((1,)))


def test_random_union_instances():
    rng = random.Random(3)
    for i in range(20):
        report = union_product_check(*random_split_instance(rng, 3, i))
        assert report.components_disjoint == 2
        assert report.components_bridged == 1


def test_csv_export():
    p = TreeParams(1, 2, 0.5)
    left = sample_window_tree(p, -1, 2, BitSource(2, 0))
    right = sample_window_tree(p, -1, 2, BitSource(2, 1))
    g = build_product(left, right)
    rows = list(csv.reader(io.StringIO(g.to_csv())))
    assert rows[0] == ["level", "left_path", "right_path", "neighbor_left_path", "neighbor_right_path", "edge_kind"]
    assert len(rows) - 1 == g.edge_count
    assert {r[5] for r in rows[1:]} <= {"remanent", "percolative"}
    again = build_product(sample_window_tree(p, -1, 2, BitSource(2, 0)), sample_window_tree(p, -1, 2, BitSource(2, 1)))
    assert again.to_csv() == g.to_csv()


def test_json_export():
    g = build_dl_window(1, 2, 1)
    data = json.loads(g.to_json())
    assert len(data["vertices"]) == len(g)
    assert len(data["edges"]) == g.edge_count
    assert data["adjacency"] == [list(a) for a in g.adjacency]
    assert data["vertices"][g.root]["level"] == 0
