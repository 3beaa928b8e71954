import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from horoprod_lab import trees
from horoprod_lab.errors import (
    HorizonExceeded,
    MalformedEncoding,
    ParseError,
    UnknownVertex,
)
from horoprod_lab.trees import (
    PointedTree,
    RootedTree,
    build_tree,
    canonical_code,
    deserialize,
    serialize,
)

from conftest import full_binary


# -- encoding strategies ------------------------------------------------


@st.composite
def offspring_encodings(draw, max_children=3, max_depth=4):
    """Random valid preorder encodings with their depth limit."""

    def subtree(depth):
        if depth == max_depth:
            return [0]
        k = draw(st.integers(0, max_children))
        enc = [k]
        for _ in range(k):
            enc.extend(subtree(depth + 1))
        return enc

    return subtree(0), max_depth


# -- construction -------------------------------------------------------


def test_two_truncated_children():
    t = build_tree([2, 0, 0], depth_limit=1)
    assert t.n_vertices == 3
    assert list(t.truncated) == [False, True, True]


def test_full_binary_counts():
    t = full_binary(3)
    assert t.n_vertices == 15
    assert t.sphere(3).size == 8


def test_path_encoding():
    n = 5
    t = build_tree([1] * n + [0], depth_limit=n)
    assert t.n_vertices == n + 1


def test_malformed_encoding_rejected():
    with pytest.raises(MalformedEncoding):
        build_tree([2, 0], depth_limit=2)  # underrun
    with pytest.raises(MalformedEncoding):
        build_tree([1, 0, 0], depth_limit=2)  # overrun


# -- metric -------------------------------------------------------------


def test_distance_examples():
    t = full_binary(3)
    a = t.resolve((1, 1))
    b = t.resolve((2, 1))
    assert t.distance(a, b) == 4  # through the root
    assert t.distance(a, t.resolve((1,))) == 1
    assert t.distance(a, a) == 0


def test_distance_unknown_vertex():
    t = full_binary(2)
    with pytest.raises(UnknownVertex):
        t.resolve((3,))


@given(offspring_encodings())
@settings(max_examples=60, deadline=None)
def test_distance_matches_bfs_oracle(enc_limit):
    enc, limit = enc_limit
    t = build_tree(enc, depth_limit=limit)
    # oracle: BFS over the undirected parent/child adjacency
    adj = [[] for _ in range(t.n_vertices)]
    for v in range(1, t.n_vertices):
        p = int(t.parent[v])
        adj[p].append(v)
        adj[v].append(p)
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = int(rng.integers(t.n_vertices))
        dist = {x: 0}
        frontier = [x]
        while frontier:
            nxt = []
            for v in frontier:
                for u in adj[v]:
                    if u not in dist:
                        dist[u] = dist[v] + 1
                        nxt.append(u)
            frontier = nxt
        y = int(rng.integers(t.n_vertices))
        assert t.distance(x, y) == dist[y]


def test_sphere_horizon_errors():
    t = full_binary(3)
    with pytest.raises(HorizonExceeded):
        t.sphere(4)
    with pytest.raises(HorizonExceeded):
        t.sphere(-1)


# -- Busemann levels and horospheres ------------------------------------


def spine_pointed(depth):
    return PointedTree(full_binary(depth), (1,) * depth)


def test_busemann_examples():
    pt = spine_pointed(3)
    t = pt.tree
    root = 0
    assert pt.busemann(root, t.resolve((1, 1, 1))) == -3
    assert pt.busemann(root, t.resolve((1, 2))) == 0
    assert pt.busemann(root, t.resolve((2,))) == 1


def test_spine_levels():
    pt = spine_pointed(4)
    for k, v in enumerate(pt.spine_vertices):
        assert pt.level[v] == -k


@given(offspring_encodings(max_children=2, max_depth=4), st.integers(0, 10))
@settings(max_examples=50, deadline=None)
def test_busemann_cocycle_additivity(enc_limit, seed):
    enc, limit = enc_limit
    t = build_tree(enc, depth_limit=limit)
    spine = []
    v = 0
    while True:
        cs = t.children(v)
        if cs.size == 0:
            break
        spine.append(1)
        v = int(cs[0])
    pt = PointedTree(t, tuple(spine))
    rng = np.random.default_rng(seed)
    for _ in range(10):
        x, y, z = (int(rng.integers(t.n_vertices)) for _ in range(3))
        assert pt.busemann(x, y) + pt.busemann(y, z) == pt.busemann(x, z)
        assert pt.busemann(x, y) == -pt.busemann(y, x)


def test_horosphere_partition():
    pt = spine_pointed(4)
    t = pt.tree
    seen = np.zeros(t.n_vertices, dtype=int)
    for k in range(-4, 5):
        seen[pt.horosphere(k)] += 1
    assert np.all(seen == 1)


def test_horosphere_example():
    # full binary, leftmost spine: H_0 holds the root and one vertex per
    # even depth that branched off at half that depth
    pt = spine_pointed(4)
    t = pt.tree
    h0 = sorted(t.address_of(v) for v in pt.horosphere(0))
    assert () in h0
    assert (1, 2) in h0
    assert all(pt.level[pt.tree.resolve(a)] == 0 for a in h0)


# -- shadows ------------------------------------------------------------


def test_shadow_sphere_counts():
    t = full_binary(4)
    y = t.resolve((1,))
    assert t.shadow_sphere_count(y, 4) == 8
    assert t.shadow_sphere_count(t.resolve((1, 1)), 4) == 4
    assert t.shadow_sphere_count(y, 1) == 1


def test_shadow_counts_sum_to_sphere():
    t = full_binary(4)
    total = sum(
        t.shadow_sphere_count(int(c), 4) for c in t.children(0)
    )
    assert total == t.sphere(4).size


# -- canonical codes ----------------------------------------------------


def test_star_codes_equal():
    a = build_tree([3, 0, 0, 0], depth_limit=2)
    b = build_tree([3, 0, 0, 0], depth_limit=2)
    assert canonical_code(a, 0, 1) == canonical_code(b, 0, 1)


def test_path_reroot_symmetry():
    t = build_tree([1, 1, 1, 0], depth_limit=6)
    assert canonical_code(t, 0, 3) == canonical_code(t, 3, 3)


def test_code_invariant_under_child_order():
    a = build_tree([2, 1, 0, 0], depth_limit=2)
    b = build_tree([2, 0, 1, 0], depth_limit=2)
    assert canonical_code(a, 0, 2) == canonical_code(b, 0, 2)
    assert canonical_code(a, 0, 2) != canonical_code(
        build_tree([2, 1, 0, 1, 0], depth_limit=2), 0, 2
    )


def test_code_requires_full_ball():
    t = full_binary(2)
    with pytest.raises(HorizonExceeded):
        canonical_code(t, 0, 3)


def all_rooted_trees(n_max):
    """All rooted trees with at most n_max vertices, as encodings."""

    def gen(n):
        # trees with exactly n vertices: root + composition into subtrees
        if n == 1:
            yield [0]
            return
        for k in range(1, n):
            for parts in compositions(n - 1, k):
                for subs in itertools.product(
                    *(list(gen(p)) for p in parts)
                ):
                    enc = [k]
                    for s in subs:
                        enc.extend(s)
                    yield enc

    def compositions(total, k):
        if k == 1:
            yield (total,)
            return
        for first in range(1, total - k + 2):
            for rest in compositions(total - first, k - 1):
                yield (first, *rest)

    for n in range(1, n_max + 1):
        yield from gen(n)


def brute_force_isomorphic(t1, t2):
    """Rooted isomorphism by recursive multiset matching of subtrees,
    independent of the canonical-code implementation."""
    if t1.n_vertices != t2.n_vertices:
        return False

    def match(a_children, b_children, ta, tb):
        if len(a_children) != len(b_children):
            return False
        if not a_children:
            return True
        for perm in itertools.permutations(b_children):
            if all(
                match(
                    list(ta.children(x)), list(tb.children(y)), ta, tb
                )
                for x, y in zip(a_children, perm)
            ):
                return True
        return False

    return match(list(t1.children(0)), list(t2.children(0)), t1, t2)


def test_codes_match_brute_force_up_to_6():
    encs = list(all_rooted_trees(6))
    built = [build_tree(e, depth_limit=8) for e in encs]
    codes = [canonical_code(t, 0, 8) for t in built]
    for i in range(len(built)):
        for j in range(i + 1, len(built)):
            assert (codes[i] == codes[j]) == brute_force_isomorphic(
                built[i], built[j]
            )


# -- serialization ------------------------------------------------------


@given(offspring_encodings())
@settings(max_examples=40, deadline=None)
def test_serialize_round_trip(enc_limit):
    enc, limit = enc_limit
    t = build_tree(enc, depth_limit=limit)
    assert deserialize(serialize(t)) == t


def test_pointed_round_trip():
    pt = spine_pointed(3)
    back = deserialize(serialize(pt))
    assert back.tree == pt.tree
    assert back.spine == pt.spine


def test_parse_error_has_position():
    with pytest.raises(ParseError) as ei:
        deserialize("{not json")
    assert ei.value.position is not None


def test_address_index_bijection():
    t = full_binary(3)
    for v in range(t.n_vertices):
        assert t.resolve(t.address_of(v)) == v
