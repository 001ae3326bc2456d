"""Structural algorithms: moral graphs, elimination orderings, widths, join
trees, loop-cutsets and w-cutsets.

All tie-breaking is by smallest variable index so every result is
reproducible for a fixed input.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Optional, Sequence

from .model import Evidence, Network


@dataclass(frozen=True)
class UndirectedGraph:
    nodes: FrozenSet[int]
    adj: Dict[int, FrozenSet[int]]

    @classmethod
    def from_edges(cls, nodes: Iterable[int], edges: Iterable[tuple]) -> "UndirectedGraph":
        nodes = frozenset(nodes)
        adj = {v: set() for v in nodes}
        for a, b in edges:
            if a == b:
                raise ValueError(f"self-loop on {a}")
            adj[a].add(b)
            adj[b].add(a)
        return cls(nodes, {v: frozenset(s) for v, s in adj.items()})

    @property
    def n(self) -> int:
        return len(self.nodes)

    def edges(self) -> set:
        return {(a, b) for a in self.adj for b in self.adj[a] if a < b}

    def neighbors(self, v: int) -> FrozenSet[int]:
        return self.adj[v]

    def without(self, removed: Iterable[int]) -> "UndirectedGraph":
        removed = frozenset(removed)
        keep = self.nodes - removed
        return UndirectedGraph(keep, {v: self.adj[v] - removed for v in keep})


@dataclass(frozen=True)
class Ordering:
    """A node ordering in the ordered-graph sense: the last node is processed
    (eliminated) first.  ``width`` is the induced width along it."""

    order: tuple
    width: int

    @property
    def elimination(self) -> tuple:
        return tuple(reversed(self.order))


def moralize(net: Network) -> UndirectedGraph:
    edges = set()
    for fam in net.families:
        for a in range(len(fam)):
            for b in range(a + 1, len(fam)):
                x, y = fam[a], fam[b]
                edges.add((min(x, y), max(x, y)))
    return UndirectedGraph.from_edges(range(net.n), edges)


def _fill_count(adj: Dict[int, set], v: int) -> int:
    nb = sorted(adj[v])
    missing = 0
    for k, a in enumerate(nb):
        na = adj[a]
        for b in nb[k + 1:]:
            if b not in na:
                missing += 1
    return missing


def _eliminate_min_fill(g: UndirectedGraph):
    """Greedy min-fill elimination; yields (node, neighbours at elimination)."""
    adj = {v: set(g.adj[v]) for v in g.nodes}
    fill = {v: _fill_count(adj, v) for v in adj}
    heap = [(f, v) for v, f in fill.items()]
    heapq.heapify(heap)
    out = []
    while heap:
        f, v = heapq.heappop(heap)
        if v not in adj or fill[v] != f:
            continue
        nb = adj.pop(v)
        del fill[v]
        out.append((v, frozenset(nb)))
        affected = set(nb)
        for a in nb:
            adj[a].discard(v)
        nbl = sorted(nb)
        for k, a in enumerate(nbl):
            for b in nbl[k + 1:]:
                if b not in adj[a]:
                    adj[a].add(b)
                    adj[b].add(a)
                    affected.update(adj[a] & adj[b])
        for u in affected:
            nf = _fill_count(adj, u)
            if nf != fill[u]:
                fill[u] = nf
                heapq.heappush(heap, (nf, u))
    return out


def min_fill_ordering(g: UndirectedGraph) -> Ordering:
    """Min-fill heuristic ordering, ties broken by smallest node index."""
    steps = _eliminate_min_fill(g)
    width = max((len(nb) for _, nb in steps), default=0)
    return Ordering(tuple(v for v, _ in reversed(steps)), width)


def induced_width(g: UndirectedGraph, order: Sequence[int]) -> int:
    """Induced width of ``g`` along ``order`` (processed last to first)."""
    if sorted(order) != sorted(g.nodes):
        raise ValueError("order must be a permutation of the graph's nodes")
    pos = {v: k for k, v in enumerate(order)}
    adj = {v: set(g.adj[v]) for v in g.nodes}
    width = 0
    for v in reversed(order):
        earlier = [u for u in adj[v] if pos[u] < pos[v]]
        width = max(width, len(earlier))
        for k, a in enumerate(earlier):
            for b in earlier[k + 1:]:
                adj[a].add(b)
                adj[b].add(a)
    return width


def adjusted_induced_width(g: UndirectedGraph, removed: Iterable[int]) -> int:
    return min_fill_ordering(g.without(removed)).width


# ---------------------------------------------------------------------------
# Tree decomposition


def _decompose(g: UndirectedGraph):
    """Clusters and tree edges from a min-fill elimination of ``g``.

    Returns (clusters, edges, owner, elimination) where ``owner[v]`` is the
    index of the cluster that absorbed v's elimination clique.  Clusters are numbered by
    the elimination step that created them; subsumed cliques are merged into
    a containing neighbour.  Disconnected components are chained through
    empty separators so the result is always a single tree.
    """
    steps = _eliminate_min_fill(g)
    if not steps:
        return [frozenset()], [], {}, []
    step_of = {v: k for k, (v, _) in enumerate(steps)}
    clusters = [frozenset({v}) | nb for v, nb in steps]
    nbrs = {k: set() for k in range(len(steps))}
    roots = []
    for k, (v, nb) in enumerate(steps):
        if nb:
            p = min(step_of[u] for u in nb)
            nbrs[k].add(p)
            nbrs[p].add(k)
        else:
            roots.append(k)
    for a, b in zip(roots, roots[1:]):
        nbrs[a].add(b)
        nbrs[b].add(a)
    alive = {k: clusters[k] for k in range(len(steps))}
    owner = {v: k for k, (v, _) in enumerate(steps)}
    redirect = {}
    changed = True
    while changed:
        changed = False
        for i in sorted(alive):
            target = None
            for j in sorted(nbrs[i]):
                if alive[i] <= alive[j]:
                    target = j
                    break
            if target is None:
                continue
            for k in nbrs[i]:
                if k != target:
                    nbrs[k].discard(i)
                    nbrs[k].add(target)
                    nbrs[target].add(k)
            nbrs[target].discard(i)
            del nbrs[i]
            del alive[i]
            redirect[i] = target
            changed = True
            break

    def resolve(k):
        while k in redirect:
            k = redirect[k]
        return k

    keep = sorted(alive)
    renum = {k: idx for idx, k in enumerate(keep)}
    out_clusters = [alive[k] for k in keep]
    edges = sorted({(min(renum[a], renum[b]), max(renum[a], renum[b])) for a in keep for b in nbrs[a]})
    owner = {v: renum[resolve(k)] for v, k in owner.items()}
    return out_clusters, edges, owner, [v for v, _ in steps]


@dataclass(frozen=True)
class JoinTree:
    """Tree decomposition of the moral graph with a conditioned variable set.

    ``clusters`` hold the residual (unconditioned) variables.  ``slots`` list
    the conditioned variables retained in each cluster: those appearing in
    an attached CPT, closed over tree paths so that running intersection
    holds for them too.  ``attached[k]`` are the CPT indices assigned to
    cluster k; every CPT is attached exactly once.
    """

    clusters: tuple
    edges: tuple
    attached: tuple
    slots: tuple
    conditioned: FrozenSet[int]
    designated: FrozenSet[int]
    root: int = 0

    @property
    def width(self) -> int:
        return max(0, max(len(c) for c in self.clusters) - 1)

    @property
    def neighbors(self) -> tuple:
        nb = [[] for _ in self.clusters]
        for a, b in self.edges:
            nb[a].append(b)
            nb[b].append(a)
        return tuple(tuple(sorted(x)) for x in nb)

    def separator(self, a: int, b: int) -> tuple:
        return tuple(sorted(set(self.clusters[a]) & set(self.clusters[b])))

    def subtree(self, var: int) -> tuple:
        """Clusters holding ``var`` as a residual variable or a slot."""
        return tuple(k for k in range(len(self.clusters)) if var in self.clusters[k] or var in self.slots[k])

    @property
    def delta(self) -> int:
        """Largest number of clusters containing any designated variable."""
        return max((len(self.subtree(v)) for v in self.designated), default=0)

    def depth(self) -> list:
        d = [-1] * len(self.clusters)
        d[self.root] = 0
        q = deque([self.root])
        nb = self.neighbors
        while q:
            u = q.popleft()
            for v in nb[u]:
                if d[v] < 0:
                    d[v] = d[u] + 1
                    q.append(v)
        return d

    def dfs_preorder(self) -> list:
        nb = self.neighbors
        seen, out, stack = set(), [], [self.root]
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            out.append(u)
            stack.extend(sorted(nb[u], reverse=True))
        return out


def _tree_path(nb, a: int, b: int) -> list:
    prev = {a: None}
    q = deque([a])
    while q:
        u = q.popleft()
        if u == b:
            break
        for v in nb[u]:
            if v not in prev:
                prev[v] = u
                q.append(v)
    path, u = [], b
    while u is not None:
        path.append(u)
        u = prev[u]
    return path


def _steiner(nb, terminals: Iterable[int]) -> set:
    terms = sorted(set(terminals))
    if not terms:
        return set()
    out = {terms[0]}
    for t in terms[1:]:
        out.update(_tree_path(nb, terms[0], t))
    return out


def build_join_tree(
    net: Network,
    conditioned: Iterable[int] = (),
    designated: Optional[Iterable[int]] = None,
) -> JoinTree:
    """Join tree of ``net`` with ``conditioned`` variables removed for width
    purposes but kept as assignable slots in the clusters that use them."""
    cond = frozenset(conditioned)
    g = moralize(net).without(cond)
    clusters, edges, owner, elim = _decompose(g)
    nb = [[] for _ in clusters]
    for a, b in edges:
        nb[a].append(b)
        nb[b].append(a)
    steps_pos = {v: k for k, v in enumerate(elim)}
    attached = [[] for _ in clusters]
    where = {}
    deferred = []
    for j, fam in enumerate(net.families):
        resid = [v for v in fam if v not in cond]
        if resid:
            first = min(resid, key=lambda v: steps_pos[v])
            k = owner[first]
            attached[k].append(j)
            where[j] = k
        else:
            deferred.append(j)
    uses = {v: set() for v in cond}
    for j, k in where.items():
        for v in net.families[j]:
            if v in cond:
                uses[v].add(k)
    for j in deferred:
        fam_c = [v for v in net.families[j] if v in cond]
        best, best_cost = 0, None
        for k in range(len(clusters)):
            cost = sum(len(_steiner(nb, uses[v] | {k})) for v in fam_c)
            if best_cost is None or cost < best_cost:
                best, best_cost = k, cost
        attached[best].append(j)
        for v in fam_c:
            uses[v].add(best)
    slots = [set() for _ in clusters]
    for v in cond:
        for k in _steiner(nb, uses[v]):
            slots[k].add(v)
    return JoinTree(
        clusters=tuple(tuple(sorted(c)) for c in clusters),
        edges=tuple(edges),
        attached=tuple(tuple(sorted(a)) for a in attached),
        slots=tuple(tuple(sorted(s)) for s in slots),
        conditioned=cond,
        designated=frozenset(cond if designated is None else designated),
    )


def check_join_tree(net: Network, tree: JoinTree) -> None:
    """Raise AssertionError unless ``tree`` is a valid decomposition."""
    m = len(tree.clusters)
    assert len(tree.edges) == m - 1, "not a tree: wrong edge count"
    nb = tree.neighbors
    seen = {0}
    q = deque([0])
    while q:
        u = q.popleft()
        for v in nb[u]:
            if v not in seen:
                seen.add(v)
                q.append(v)
    assert len(seen) == m, "not a tree: disconnected"
    for v in range(net.n):
        holders = set(tree.subtree(v))
        if not holders:
            continue
        start = min(holders)
        reach, q = {start}, deque([start])
        while q:
            u = q.popleft()
            for w in nb[u]:
                if w in holders and w not in reach:
                    reach.add(w)
                    q.append(w)
        assert reach == holders, f"running intersection fails for variable {v}"
    count = [0] * net.n
    for k, att in enumerate(tree.attached):
        scope = set(tree.clusters[k]) | set(tree.slots[k])
        for j in att:
            count[j] += 1
            assert set(net.families[j]) <= scope, f"CPT {j} family not inside cluster {k}"
    assert all(c == 1 for c in count), "each CPT must be attached exactly once"


# ---------------------------------------------------------------------------
# Cutsets


@dataclass(frozen=True)
class Cutset:
    members: tuple
    kind: str  # "loop" or "w"
    certified_width: int
    ordering: Ordering
    bound: Optional[int] = None

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


def _certify(net: Network, e: Evidence, members: Iterable[int]) -> Ordering:
    removed = set(members) | set(e)
    return min_fill_ordering(moralize(net).without(removed))


def make_cutset(net: Network, e: Evidence, members: Iterable[int], kind: str = "w", bound=None) -> Cutset:
    members = tuple(sorted(set(members)))
    if set(members) & set(e):
        raise ValueError("cutset members must be disjoint from the evidence")
    order = _certify(net, e, members)
    return Cutset(members, kind, order.width, order, bound)


def find_loop_cutset(net: Network, e: Evidence) -> Cutset:
    """Greedy loop-cutset.

    Repeatedly strips nodes of degree <= 1 from the underlying undirected
    graph and drops evidence nodes that have at most one parent left (they
    cannot be sinks of any remaining loop).  Among the remaining
    non-evidence nodes with at most one parent left (allowed in every loop
    through them) the one of highest degree is added, ties by smallest index.
    """
    alive = set(range(net.n))
    par = {v: set(net.parents[v]) for v in alive}
    chi = {v: set(net.children[v]) for v in alive}
    members = []

    def drop(v):
        alive.discard(v)
        for p in par[v]:
            chi[p].discard(v)
        for c in chi[v]:
            par[c].discard(v)

    while True:
        changed = True
        while changed:
            changed = False
            for v in sorted(alive):
                if len(par[v]) + len(chi[v]) <= 1 or (v in e and len(par[v]) <= 1):
                    drop(v)
                    changed = True
        if not alive:
            break
        cands = [v for v in sorted(alive) if v not in e and len(par[v]) <= 1]
        best = max(cands, key=lambda v: (len(par[v]) + len(chi[v]), -v))
        members.append(best)
        drop(best)
    return make_cutset(net, e, members, kind="loop")


def _undirected_forest(nodes: Iterable[int], edges: Iterable[tuple]) -> bool:
    parent = {v: v for v in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return True


def is_singly_connected(net: Network, removed: Iterable[int]) -> bool:
    """Whether the DAG minus ``removed`` has an acyclic underlying graph."""
    removed = set(removed)
    keep = [v for v in range(net.n) if v not in removed]
    edges = [(p, c) for c in keep for p in net.parents[c] if p not in removed]
    return _undirected_forest(keep, edges)


def is_loop_cutset(net: Network, e: Evidence, members: Iterable[int]) -> bool:
    """Whether conditioning on ``members`` and ``e`` leaves a tree-structured
    model: the bipartite variable/CPT incidence graph over unconditioned
    variables must be a forest.  An evidence node counts as cutting a loop
    only where it is not a sink of that loop, so this is the allowed-vertex
    criterion."""
    cond = set(members) | set(e)
    nodes = [("v", v) for v in range(net.n) if v not in cond]
    edges = []
    for j, fam in enumerate(net.families):
        resid = [v for v in fam if v not in cond]
        if len(resid) >= 2:
            nodes.append(("f", j))
            edges.extend((("f", j), ("v", v)) for v in resid)
    return _undirected_forest(nodes, edges)


def find_w_cutset(net: Network, e: Evidence, w: int, start: Iterable[int] = ()) -> Cutset:
    """Greedy set-cover w-cutset.

    Builds a min-fill tree decomposition of the moral graph with the current
    cutset and evidence removed, adds the variable that occurs in the most
    clusters larger than w+1 (ties by smallest index), and recomputes the
    decomposition after every addition.  ``start`` seeds the cutset, which
    is how nested cutsets are produced.
    """
    if w < 1:
        raise ValueError("w must be >= 1")
    moral = moralize(net)
    members = sorted(set(start))
    removed = set(members) | set(e)
    while True:
        clusters = _decompose(moral.without(removed))[0]
        big = [c for c in clusters if len(c) > w + 1]
        if not big:
            break
        hits: Dict[int, int] = {}
        for c in big:
            for v in c:
                hits[v] = hits.get(v, 0) + 1
        best = max(sorted(hits), key=lambda v: hits[v])
        members.append(best)
        removed.add(best)
    return make_cutset(net, e, members, kind="w", bound=w)


def nested_w_cutsets(net: Network, e: Evidence, ws: Iterable[int]) -> Dict[int, Cutset]:
    """w-cutsets for several bounds with C_{w+1} contained in C_w.

    Bounds are processed from largest to smallest, each search seeded with
    the cutset of the next larger bound.
    """
    out: Dict[int, Cutset] = {}
    prev: tuple = ()
    for w in sorted(set(ws), reverse=True):
        c = find_w_cutset(net, e, w, start=prev)
        out[w] = c
        prev = c.members
    return dict(sorted(out.items()))
