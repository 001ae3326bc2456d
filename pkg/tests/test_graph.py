import itertools
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cutset_sampling.generators import GenSpec, gen_grid, gen_multipartite
from cutset_sampling.graph import (
    UndirectedGraph,
    adjusted_induced_width,
    build_join_tree,
    check_join_tree,
    find_loop_cutset,
    find_w_cutset,
    induced_width,
    is_loop_cutset,
    is_singly_connected,
    make_cutset,
    min_fill_ordering,
    moralize,
    nested_w_cutsets,
)

from helpers import A, B, C, D, E, F, G, collider, diamond, seven_node, random_evidence, random_network, random_polytree


def exact_treewidth(g: UndirectedGraph) -> int:
    """Subset dynamic programme over elimination prefixes (small graphs only)."""
    nodes = sorted(g.nodes)
    idx = {v: k for k, v in enumerate(nodes)}
    n = len(nodes)
    adj = [0] * n
    for v in nodes:
        for u in g.adj[v]:
            adj[idx[v]] |= 1 << idx[u]

    def q_size(s: int, v: int) -> int:
        # vertices outside s+v reachable from v through s
        seen, stack, out = 1 << v, [v], 0
        while stack:
            x = stack.pop()
            nb = adj[x] & ~seen
            while nb:
                b = nb & -nb
                nb ^= b
                seen |= b
                y = b.bit_length() - 1
                if s >> y & 1:
                    stack.append(y)
                else:
                    out += 1
        return out

    @lru_cache(maxsize=None)
    def tw(s: int) -> int:
        if s == 0:
            return -1
        best = n
        for v in range(n):
            if s >> v & 1:
                rest = s & ~(1 << v)
                best = min(best, max(tw(rest), q_size(rest, v)))
        return best

    return max(tw((1 << n) - 1), 0)


def explicit_induced_width(g: UndirectedGraph, order) -> int:
    """Materialise the induced graph, then read off earlier-neighbour counts."""
    pos = {v: k for k, v in enumerate(order)}
    edges = {frozenset(e) for e in g.edges()}
    for v in reversed(order):
        earlier = [u for u in g.nodes if frozenset((u, v)) in edges and pos[u] < pos[v]]
        for a, b in itertools.combinations(earlier, 2):
            edges.add(frozenset((a, b)))
    return max((sum(1 for u in g.nodes if frozenset((u, v)) in edges and pos[u] < pos[v])
                for v in g.nodes), default=0)


def random_graph(seed: int, n: int, p: float) -> UndirectedGraph:
    rng = np.random.default_rng(seed)
    edges = [(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < p]
    return UndirectedGraph.from_edges(range(n), edges)


def grid_graph(r: int, c: int) -> UndirectedGraph:
    edges = []
    for i in range(r):
        for j in range(c):
            if i + 1 < r:
                edges.append((i * c + j, (i + 1) * c + j))
            if j + 1 < c:
                edges.append((i * c + j, i * c + j + 1))
    return UndirectedGraph.from_edges(range(r * c), edges)


class TestMoralize:
    def test_chain(self):
        from helpers import BIN, binary_rows
        from cutset_sampling.model import make_network
        net = make_network(list("ABC"), [BIN] * 3, [[], [0], [1]],
                           [binary_rows([0.5]), binary_rows([0.2, 0.7]), binary_rows([0.1, 0.6])])
        assert moralize(net).edges() == {(0, 1), (1, 2)}

    def test_collider_marries_parents(self):
        assert moralize(collider()).edges() == {(0, 2), (1, 2), (0, 1)}

    @pytest.mark.parametrize("seed", range(5))
    def test_families_are_cliques(self, seed):
        net = random_network(seed, 12)
        g = moralize(net)
        for fam in net.families:
            for a, b in itertools.combinations(fam, 2):
                assert b in g.adj[a]


class TestWidth:
    def test_tree(self):
        g = UndirectedGraph.from_edges(range(6), [(0, 1), (0, 2), (2, 3), (2, 4), (4, 5)])
        assert min_fill_ordering(g).width == 1

    @pytest.mark.parametrize("k", [2, 3, 5, 7])
    def test_complete_graph(self, k):
        g = UndirectedGraph.from_edges(range(k), itertools.combinations(range(k), 2))
        assert min_fill_ordering(g).width == k - 1
        assert induced_width(g, list(range(k))) == k - 1

    def test_grid_4x4(self):
        w = min_fill_ordering(grid_graph(4, 4)).width
        assert 4 <= w <= 4

    def test_path_order(self):
        g = UndirectedGraph.from_edges(range(5), [(k, k + 1) for k in range(4)])
        assert induced_width(g, list(range(5))) == 1

    @pytest.mark.parametrize("seed", range(12))
    def test_min_fill_not_below_treewidth(self, seed):
        g = random_graph(seed, 9, 0.35)
        order = min_fill_ordering(g)
        assert order.width >= exact_treewidth(g)
        assert induced_width(g, order.order) == order.width

    @pytest.mark.parametrize("seed", range(12))
    def test_induced_width_matches_explicit(self, seed):
        g = random_graph(100 + seed, 10, 0.3)
        order = list(np.random.default_rng(seed).permutation(10))
        assert induced_width(g, order) == explicit_induced_width(g, order)

    def test_adjusted_width(self):
        g = grid_graph(3, 3)
        assert adjusted_induced_width(g, g.nodes) == 0
        assert adjusted_induced_width(g, ()) == min_fill_ordering(g).width

    def test_bad_order_rejected(self):
        with pytest.raises(ValueError):
            induced_width(grid_graph(2, 2), [0, 1, 2])


class TestJoinTree:
    def test_conditioned_seven_node_tree(self):
        net = seven_node()
        jt = build_join_tree(net, {B, D, E}, designated={B, D})
        names = {tuple(sorted("ABCDEFG"[v] for v in c)) for c in jt.clusters}
        assert names == {("A", "C"), ("C", "F"), ("F", "G")}
        assert jt.width == 1
        assert len(jt.edges) == 2
        check_join_tree(net, jt)

    @pytest.mark.parametrize("seed", range(8))
    def test_polytree_clusters_are_families(self, seed):
        net, _ = random_polytree(seed, 10)
        jt = build_join_tree(net)
        fams = {tuple(sorted(f)) for f in net.families}
        for c in jt.clusters:
            assert c in fams or any(set(c) <= set(f) for f in fams)
        assert jt.width == max(len(f) for f in net.families) - 1

    @pytest.mark.parametrize("seed", range(10))
    def test_running_intersection_random(self, seed):
        net = random_network(seed, 15)
        rng = np.random.default_rng(seed)
        cond = set(int(v) for v in rng.choice(15, size=int(rng.integers(0, 6)), replace=False))
        check_join_tree(net, build_join_tree(net, cond))


class TestLoopCutset:
    @pytest.mark.parametrize("seed", range(6))
    def test_polytree_empty(self, seed):
        net, _ = random_polytree(seed, 12)
        assert find_loop_cutset(net, {}).members == ()

    def test_diamond_single_minimal(self):
        net = diamond()
        c = find_loop_cutset(net, {})
        assert len(c) == 1
        assert is_singly_connected(net, c.members)
        assert not is_singly_connected(net, ())
        assert is_singly_connected(net, {A})

    def test_seven_node_admits_a_d(self):
        net = seven_node()
        assert is_loop_cutset(net, {E: 1}, {A, D})
        assert not is_loop_cutset(net, {E: 1}, {A})

    def test_seven_node_greedy_valid(self):
        net = seven_node()
        c = find_loop_cutset(net, {E: 1})
        assert is_loop_cutset(net, {E: 1}, c.members)

    @pytest.mark.parametrize("seed", range(20))
    def test_random_outputs_valid(self, seed):
        net = random_network(seed, 14)
        c = find_loop_cutset(net, {})
        assert is_singly_connected(net, c.members)
        e = random_evidence(net, seed, 3)
        ce = find_loop_cutset(net, e)
        assert is_loop_cutset(net, e, ce.members)
        assert not set(ce.members) & set(e)

    def test_grid_nonempty(self):
        net = gen_grid(GenSpec("grid", rows=3, cols=4))
        assert len(find_loop_cutset(net, {})) > 0


class TestWCutset:
    def test_large_w_empty(self):
        net = random_network(2, 12)
        w = min_fill_ordering(moralize(net)).width
        assert find_w_cutset(net, {}, w).members == ()
        assert find_w_cutset(net, {}, w + 3).members == ()

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("w", [1, 2, 3])
    def test_width_recheck(self, seed, w):
        net = random_network(seed, 16, max_parents=4)
        e = random_evidence(net, seed, 2)
        c = find_w_cutset(net, e, w)
        g = moralize(net).without(set(c.members) | set(e))
        assert induced_width(g, c.ordering.order) <= w
        assert c.certified_width <= w

    def test_nested_strict_on_twenty_nodes(self):
        net = gen_multipartite(GenSpec("multipartite", seed=4, n_root=5, n_total=20))
        cs = nested_w_cutsets(net, {}, [1, 2, 3, 4])
        for w in (1, 2, 3):
            assert set(cs[w + 1].members) <= set(cs[w].members)
        assert set(cs[3].members) < set(cs[2].members)

    def test_seven_node_b_d_is_one_cutset(self):
        net = seven_node()
        c = make_cutset(net, {E: 1}, {B, D})
        assert c.certified_width <= 1

    def test_invalid_w(self):
        with pytest.raises(ValueError):
            find_w_cutset(diamond(), {}, 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 4))
def test_nested_chain_property(seed, w_max):
    net = random_network(seed, 14, max_parents=3)
    cs = nested_w_cutsets(net, {}, range(1, w_max + 1))
    for w in range(1, w_max):
        assert set(cs[w + 1].members) <= set(cs[w].members)
    for w, c in cs.items():
        assert c.certified_width <= w
